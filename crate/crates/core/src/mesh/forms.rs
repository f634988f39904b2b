use super::grid::Grid;
use crate::error::{PhcmError, Result};
use crate::fiber::{check_spd, Mat};

const BASES: [[&[u8]; 4]; 4] = [
    [&[0], &[], &[], &[]],
    [&[0], &[0b1], &[], &[]],
    [&[0], &[0b01, 0b10], &[0b11], &[]],
    [&[0], &[0b001, 0b010, 0b100], &[0b011, 0b101, 0b110], &[0b111]],
];

/// Sorted index sets of size k in {0..n}, as bitmasks in lexicographic order (n ≤ 3).
#[inline]
pub fn basis(n: usize, k: usize) -> &'static [u8] {
    if k > n {
        return &[];
    }
    BASES[n][k]
}

#[inline]
pub fn binom(n: usize, k: usize) -> usize {
    basis(n, k).len()
}

pub fn basis_pos(n: usize, mask: u8) -> usize {
    basis(n, mask.count_ones() as usize)
        .iter()
        .position(|&m| m == mask)
        .expect("mask within dimension")
}

/// Sign of dx^I ∧ dx^J relative to dx^{I∪J}; zero when the sets overlap.
pub fn wedge_sign(i: u8, j: u8) -> f64 {
    if i & j != 0 {
        return 0.0;
    }
    let mut inv = 0;
    for a in 0..8 {
        if i & (1 << a) != 0 {
            inv += (j & ((1u8 << a) - 1)).count_ones();
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of ι_{e_a} dx^J relative to dx^{J∖a} (a must be in J).
pub fn interior_sign(a: usize, j: u8) -> f64 {
    if (j & ((1u8 << a) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Position and sign of the (n−1)-form ι_{e_a}(dx^0∧…∧dx^{n−1}) in the degree n−1 basis.
pub fn flux_slot(n: usize, a: usize) -> (usize, f64) {
    let full = ((1u16 << n) - 1) as u8;
    let mask = full & !(1u8 << a);
    (basis_pos(n, mask), interior_sign(a, full))
}

/// Scalar-valued k-form sampled at nodes, coefficients in the coordinate basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarForm {
    n: usize,
    degree: usize,
    data: Vec<f64>,
}

impl ScalarForm {
    pub fn zeros(grid: &Grid, degree: usize) -> Self {
        let nb = binom(grid.n(), degree);
        ScalarForm { n: grid.n(), degree, data: vec![0.0; grid.len() * nb] }
    }

    /// Wrap node-major coefficients.
    pub fn from_data(grid: &Grid, degree: usize, data: Vec<f64>) -> Result<Self> {
        if degree > grid.n() {
            return Err(PhcmError::Degree(format!("degree {degree} exceeds dimension {}", grid.n())));
        }
        let nb = binom(grid.n(), degree);
        if data.len() != grid.len() * nb {
            return Err(PhcmError::Dimension { expected: grid.len() * nb, got: data.len() });
        }
        Ok(ScalarForm { n: grid.n(), degree, data })
    }

    /// Top-degree form with the given density.
    pub fn top(grid: &Grid, density: Vec<f64>) -> Result<Self> {
        ScalarForm::from_data(grid, grid.n(), density)
    }

    /// 0-form from node values.
    pub fn function(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        ScalarForm::from_data(grid, 0, values)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn ncomp(&self) -> usize {
        binom(self.n, self.degree)
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
    #[inline]
    pub fn get(&self, node: usize, b: usize) -> f64 {
        self.data[node * self.ncomp() + b]
    }
    #[inline]
    pub fn set(&mut self, node: usize, b: usize, v: f64) {
        let nc = self.ncomp();
        self.data[node * nc + b] = v;
    }
    #[inline]
    pub fn add(&mut self, node: usize, b: usize, v: f64) {
        let nc = self.ncomp();
        self.data[node * nc + b] += v;
    }

    pub fn component(&self, b: usize) -> Vec<f64> {
        let nc = self.ncomp();
        self.data.iter().skip(b).step_by(nc).copied().collect()
    }

    pub fn axpy(&mut self, s: f64, o: &ScalarForm) {
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += s * b;
        }
    }

    /// self − o.
    pub fn minus(&self, o: &ScalarForm) -> ScalarForm {
        let mut r = self.clone();
        r.axpy(-1.0, o);
        r
    }

    pub fn scaled(&self, s: f64) -> ScalarForm {
        let mut r = self.clone();
        r.data.iter_mut().for_each(|v| *v *= s);
        r
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.n != grid.n() || self.data.len() != grid.len() * self.ncomp() {
            return Err(PhcmError::Kind("form does not live on this grid".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Vector,
    Covector,
}

impl ValueKind {
    pub fn dual(self) -> ValueKind {
        match self {
            ValueKind::Vector => ValueKind::Covector,
            ValueKind::Covector => ValueKind::Vector,
        }
    }
}

/// Vector- or covector-valued k-form; layout [node][value index][form basis].
#[derive(Clone, Debug, PartialEq)]
pub struct BundleForm {
    n: usize,
    degree: usize,
    kind: ValueKind,
    data: Vec<f64>,
}

impl BundleForm {
    pub fn zeros(grid: &Grid, degree: usize, kind: ValueKind) -> Self {
        let per = grid.n() * binom(grid.n(), degree);
        BundleForm { n: grid.n(), degree, kind, data: vec![0.0; grid.len() * per] }
    }

    pub fn from_data(grid: &Grid, degree: usize, kind: ValueKind, data: Vec<f64>) -> Result<Self> {
        if degree > grid.n() {
            return Err(PhcmError::Degree(format!("degree {degree} exceeds dimension {}", grid.n())));
        }
        let per = grid.n() * binom(grid.n(), degree);
        if data.len() != grid.len() * per {
            return Err(PhcmError::Dimension { expected: grid.len() * per, got: data.len() });
        }
        Ok(BundleForm { n: grid.n(), degree, kind, data })
    }

    /// Vector-valued 0-form (a vector field) from per-node components.
    pub fn vector_field(grid: &Grid, f: impl Fn(usize) -> [f64; 3]) -> Self {
        let n = grid.n();
        let mut b = BundleForm::zeros(grid, 0, ValueKind::Vector);
        for node in 0..grid.len() {
            let v = f(node);
            for i in 0..n {
                b.set(node, i, 0, v[i]);
            }
        }
        b
    }

    /// Covector-valued top form from per-node components.
    pub fn covector_top(grid: &Grid, f: impl Fn(usize) -> [f64; 3]) -> Self {
        let n = grid.n();
        let mut b = BundleForm::zeros(grid, n, ValueKind::Covector);
        for node in 0..grid.len() {
            let v = f(node);
            for i in 0..n {
                b.set(node, i, 0, v[i]);
            }
        }
        b
    }

    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn kind(&self) -> ValueKind {
        self.kind
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn nbasis(&self) -> usize {
        binom(self.n, self.degree)
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
    pub fn nodes(&self) -> usize {
        self.data.len() / (self.n * self.nbasis())
    }

    #[inline]
    pub fn get(&self, node: usize, i: usize, b: usize) -> f64 {
        let nb = self.nbasis();
        self.data[(node * self.n + i) * nb + b]
    }
    #[inline]
    pub fn set(&mut self, node: usize, i: usize, b: usize, v: f64) {
        let nb = self.nbasis();
        self.data[(node * self.n + i) * nb + b] = v;
    }
    #[inline]
    pub fn add(&mut self, node: usize, i: usize, b: usize, v: f64) {
        let nb = self.nbasis();
        self.data[(node * self.n + i) * nb + b] += v;
    }

    /// Node values of value component i, form component b.
    pub fn component(&self, i: usize, b: usize) -> Vec<f64> {
        (0..self.nodes()).map(|node| self.get(node, i, b)).collect()
    }

    /// Value-index slice as a scalar form.
    pub fn value_slice(&self, grid: &Grid, i: usize) -> ScalarForm {
        let nb = self.nbasis();
        let mut data = Vec::with_capacity(grid.len() * nb);
        for node in 0..grid.len() {
            for b in 0..nb {
                data.push(self.get(node, i, b));
            }
        }
        ScalarForm::from_data(grid, self.degree, data).expect("consistent layout")
    }

    /// Vector at a node for 0-forms and top forms (one form component).
    pub fn vec_at(&self, node: usize) -> [f64; 3] {
        debug_assert_eq!(self.nbasis(), 1);
        let mut v = [0.0; 3];
        for i in 0..self.n {
            v[i] = self.get(node, i, 0);
        }
        v
    }

    pub fn set_vec(&mut self, node: usize, v: &[f64]) {
        for i in 0..self.n {
            self.set(node, i, 0, v[i]);
        }
    }

    /// Vector-valued 1-form at a node as the mixed tensor X^i_j.
    pub fn mixed_at(&self, node: usize) -> Mat {
        debug_assert_eq!(self.degree, 1);
        Mat::from_fn(self.n, |i, j| self.get(node, i, j))
    }

    pub fn set_mixed(&mut self, node: usize, m: &Mat) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.set(node, i, j, m.get(i, j));
            }
        }
    }

    /// (n−1)-form at a node in flux components: row = value index, column = flux direction.
    pub fn flux_at(&self, node: usize) -> Mat {
        debug_assert_eq!(self.degree + 1, self.n);
        let mut m = Mat::zeros(self.n);
        for a in 0..self.n {
            let (pos, sign) = flux_slot(self.n, a);
            for i in 0..self.n {
                m.set(i, a, sign * self.get(node, i, pos));
            }
        }
        m
    }

    pub fn set_flux(&mut self, node: usize, m: &Mat) {
        for a in 0..self.n {
            let (pos, sign) = flux_slot(self.n, a);
            for i in 0..self.n {
                self.set(node, i, pos, sign * m.get(i, a));
            }
        }
    }

    pub fn axpy(&mut self, s: f64, o: &BundleForm) {
        debug_assert_eq!(self.data.len(), o.data.len());
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += s * b;
        }
    }

    /// self − o.
    pub fn minus(&self, o: &BundleForm) -> BundleForm {
        let mut r = self.clone();
        r.axpy(-1.0, o);
        r
    }

    pub fn scaled(&self, s: f64) -> BundleForm {
        let mut r = self.clone();
        r.data.iter_mut().for_each(|v| *v *= s);
        r
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.n != grid.n() || self.data.len() != grid.len() * self.n * self.nbasis() {
            return Err(PhcmError::Kind("bundle form does not live on this grid".into()));
        }
        Ok(())
    }

    pub fn expect(&self, degree: usize, kind: ValueKind, what: &str) -> Result<()> {
        if self.degree != degree || self.kind != kind {
            return Err(PhcmError::Kind(format!(
                "{what}: expected {kind:?}-valued {degree}-form, got {:?}-valued {}-form",
                self.kind, self.degree
            )));
        }
        Ok(())
    }
}

/// Density of a strictly positive top form.
#[derive(Clone, Debug, PartialEq)]
pub struct MassForm {
    rho: Vec<f64>,
}

impl MassForm {
    pub fn new(grid: &Grid, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(PhcmError::Dimension { expected: grid.len(), got: rho.len() });
        }
        for (node, &v) in rho.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PhcmError::Mass { node, value: v });
            }
        }
        Ok(MassForm { rho })
    }

    pub fn uniform(grid: &Grid, rho: f64) -> Result<Self> {
        MassForm::new(grid, vec![rho; grid.len()])
    }

    pub fn density(&self) -> &[f64] {
        &self.rho
    }

    pub fn as_form(&self, grid: &Grid) -> ScalarForm {
        ScalarForm::top(grid, self.rho.clone()).expect("mass form layout")
    }

    pub fn total(&self, grid: &Grid) -> f64 {
        grid.quadrature(&self.rho)
    }
}

/// Metric sampled at nodes with cached inverse, volume density and Christoffel symbols.
#[derive(Clone, Debug)]
pub struct MetricField {
    n: usize,
    g: Vec<Mat>,
    ginv: Vec<Mat>,
    sqrt_det: Vec<f64>,
    gamma: Vec<[f64; 27]>,
}

impl MetricField {
    pub fn new(grid: &Grid, g: Vec<Mat>) -> Result<Self> {
        if g.len() != grid.len() {
            return Err(PhcmError::Dimension { expected: grid.len(), got: g.len() });
        }
        let n = grid.n();
        for (node, m) in g.iter().enumerate() {
            if m.n() != n {
                return Err(PhcmError::Dimension { expected: n, got: m.n() });
            }
            check_spd(m).map_err(|e| PhcmError::NotSpd(format!("node {node}: {e}")))?;
        }
        let ginv: Vec<Mat> = g.iter().map(|m| m.inverse().expect("spd")).collect();
        let sqrt_det = g.iter().map(|m| m.det().sqrt()).collect();
        // dg[l][i][j] = ∂_l g_ij
        let mut dg = vec![[0.0f64; 27]; grid.len()];
        for i in 0..n {
            for j in i..n {
                let comp: Vec<f64> = g.iter().map(|m| m.get(i, j)).collect();
                for l in 0..n {
                    let d = grid.diff(&comp, l);
                    for node in 0..grid.len() {
                        dg[node][l * 9 + i * 3 + j] = d[node];
                        dg[node][l * 9 + j * 3 + i] = d[node];
                    }
                }
            }
        }
        let mut gamma = vec![[0.0f64; 27]; grid.len()];
        for node in 0..grid.len() {
            let d = &dg[node];
            let gi = &ginv[node];
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            s += gi.get(k, l) * (d[i * 9 + j * 3 + l] + d[j * 9 + i * 3 + l] - d[l * 9 + i * 3 + j]);
                        }
                        gamma[node][k * 9 + i * 3 + j] = 0.5 * s;
                    }
                }
            }
        }
        Ok(MetricField { n, g, ginv, sqrt_det, gamma })
    }

    pub fn euclidean(grid: &Grid) -> Self {
        MetricField::new(grid, vec![Mat::identity(grid.n()); grid.len()]).expect("identity is SPD")
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> Mat) -> Result<Self> {
        MetricField::new(grid, (0..grid.len()).map(|i| f(grid.x(i))).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.g.len()
    }
    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
    #[inline]
    pub fn g(&self, node: usize) -> &Mat {
        &self.g[node]
    }
    #[inline]
    pub fn ginv(&self, node: usize) -> &Mat {
        &self.ginv[node]
    }
    #[inline]
    pub fn sqrt_det(&self, node: usize) -> f64 {
        self.sqrt_det[node]
    }
    /// Γ^k_{ij} at a node.
    #[inline]
    pub fn gamma(&self, node: usize, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[node][k * 9 + i * 3 + j]
    }
    pub fn values(&self) -> &[Mat] {
        &self.g
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.n != grid.n() || self.g.len() != grid.len() {
            return Err(PhcmError::Kind("metric field does not live on this grid".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_counts() {
        for n in 1..=3 {
            for k in 0..=n {
                let expect = [[1, 1, 0, 0], [1, 2, 1, 0], [1, 3, 3, 1]][n - 1][k];
                assert_eq!(binom(n, k), expect);
            }
        }
        assert_eq!(basis(3, 2), &[0b011, 0b101, 0b110]);
    }

    #[test]
    fn wedge_signs() {
        assert_eq!(wedge_sign(0b01, 0b10), 1.0);
        assert_eq!(wedge_sign(0b10, 0b01), -1.0);
        assert_eq!(wedge_sign(0b100, 0b011), 1.0);
        assert_eq!(wedge_sign(0b010, 0b101), -1.0);
        assert_eq!(wedge_sign(0b01, 0b01), 0.0);
    }

    #[test]
    fn flux_slots_two_d() {
        // ι_{e0}(dx∧dy) = dy, ι_{e1}(dx∧dy) = -dx
        assert_eq!(flux_slot(2, 0), (1, 1.0));
        assert_eq!(flux_slot(2, 1), (0, -1.0));
        assert_eq!(flux_slot(1, 0), (0, 1.0));
    }

    #[test]
    fn christoffels_of_polar_like_metric() {
        // g = diag(1, (1+x)^2): Γ^0_11 = -(1+x), Γ^1_01 = 1/(1+x)
        let grid = Grid::bounded(&[16, 8], &[1.0, 1.0]).unwrap();
        let m = MetricField::from_fn(&grid, |x| Mat::diag(&[1.0, (1.0 + x[0]).powi(2)])).unwrap();
        for node in 0..grid.len() {
            let x = grid.x(node)[0];
            assert!((m.gamma(node, 0, 1, 1) + (1.0 + x)).abs() < 1e-12);
            assert!((m.gamma(node, 1, 0, 1) - 1.0 / (1.0 + x)).abs() < 1e-12);
            assert!((m.gamma(node, 1, 1, 0) - 1.0 / (1.0 + x)).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_must_be_positive() {
        let grid = Grid::periodic(&[4], &[1.0]).unwrap();
        assert!(MassForm::new(&grid, vec![1.0, 1.0, 0.0, 1.0]).is_err());
    }
}
