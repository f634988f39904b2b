//! Pointwise tensor algebra on fibers of dimension 1, 2 or 3.
//!
//! Everything here is exact linear algebra on small matrices. The matrix
//! functions (log, exp) go through a symmetric eigendecomposition so the
//! spectrum stays real and positive.

use crate::error::{PhcmError, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Dense n×n matrix with n ≤ 3, stored row-major in a fixed 3×3 block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    n: usize,
    a: [f64; 9],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        debug_assert!((1..=3).contains(&n));
        Mat { n, a: [0.0; 9] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.a[i * 3 + i] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i * 3 + j] = f(i, j);
            }
        }
        m
    }

    /// Build from row slices; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        Mat::from_fn(n, |i, j| rows[i][j])
    }

    pub fn diag(d: &[f64]) -> Self {
        Mat::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * 3 + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * 3 + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * 3 + j] += v;
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn det(&self) -> f64 {
        let g = |i, j| self.get(i, j);
        match self.n {
            1 => g(0, 0),
            2 => g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0),
            _ => {
                g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
                    - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                    + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
            }
        }
    }

    /// Inverse by cofactors; `None` when the determinant is zero or not finite.
    /// Inverse, failing with a `Singular` error.
    pub fn inv(&self) -> crate::error::Result<Mat> {
        self.inverse().ok_or_else(|| crate::error::PhcmError::Singular(format!("{}x{} matrix is not invertible", self.n, self.n)))
    }

    pub fn inverse(&self) -> Option<Mat> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let g = |i, j| self.get(i, j);
        let inv = match self.n {
            1 => Mat::diag(&[1.0 / d]),
            2 => Mat::from_rows(&[&[g(1, 1) / d, -g(0, 1) / d], &[-g(1, 0) / d, g(0, 0) / d]]),
            _ => Mat::from_fn(3, |i, j| {
                // cofactor of (j, i)
                let (r0, r1) = other_two(j);
                let (c0, c1) = other_two(i);
                let minor = g(r0, c0) * g(r1, c1) - g(r0, c1) * g(r1, c0);
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                sign * minor / d
            }),
        };
        Some(inv)
    }

    /// Frobenius contraction Σ a_ij b_ij.
    pub fn frob(&self, o: &Mat) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.get(i, j) * o.get(i, j);
            }
        }
        s
    }

    pub fn sym(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }

    pub fn asym(&self) -> Mat {
        Mat::from_fn(self.n, |i, j| 0.5 * (self.get(i, j) - self.get(j, i)))
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.get(i, j).abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j).is_finite()))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Mat {
        Mat::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    /// Eigen-decomposition of the symmetric part: (eigenvalues, eigenvectors as columns).
    pub fn sym_eigen(&self) -> (Vec<f64>, Mat) {
        let e = SymmetricEigen::new(self.sym().to_dmatrix());
        (e.eigenvalues.iter().copied().collect(), Mat::from_dmatrix(&e.eigenvectors))
    }

    /// Q f(Λ) Qᵀ for a symmetric matrix.
    pub fn sym_apply(&self, f: impl Fn(f64) -> f64) -> Mat {
        let (lam, q) = self.sym_eigen();
        let fl: Vec<f64> = lam.iter().map(|&l| f(l)).collect();
        q * Mat::diag(&fl) * q.transpose()
    }
}

fn other_two(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(self, o: Mat) -> Mat {
        let mut r = self;
        for k in 0..9 {
            r.a[k] += o.a[k];
        }
        r
    }
}

impl AddAssign for Mat {
    fn add_assign(&mut self, o: Mat) {
        for k in 0..9 {
            self.a[k] += o.a[k];
        }
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(self, o: Mat) -> Mat {
        let mut r = self;
        for k in 0..9 {
            r.a[k] -= o.a[k];
        }
        r
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self * -1.0
    }
}

impl Mul for Mat {
    type Output = Mat;
    fn mul(self, o: Mat) -> Mat {
        let n = self.n;
        Mat::from_fn(n, |i, j| (0..n).map(|k| self.get(i, k) * o.get(k, j)).sum())
    }
}

impl Mul<f64> for Mat {
    type Output = Mat;
    fn mul(self, s: f64) -> Mat {
        let mut r = self;
        for k in 0..9 {
            r.a[k] *= s;
        }
        r
    }
}

impl Mat {
    /// Matrix-vector product on the first n entries.
    pub fn mulv(&self, v: &[f64]) -> [f64; 3] {
        let mut r = [0.0; 3];
        for i in 0..self.n {
            for j in 0..self.n {
                r[i] += self.get(i, j) * v[j];
            }
        }
        r
    }
}

macro_rules! fiber_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, PartialEq)]
        pub struct $name(pub Mat);

        impl $name {
            pub fn zeros(n: usize) -> Self {
                $name(Mat::zeros(n))
            }
            pub fn n(&self) -> usize {
                self.0.n()
            }
            pub fn mat(&self) -> &Mat {
                &self.0
            }
            pub fn checked(m: Mat) -> Result<Self> {
                if !(1..=3).contains(&m.n()) {
                    return Err(PhcmError::FiberDim(m.n()));
                }
                if !m.is_finite() {
                    return Err(PhcmError::Kind(format!("non-finite {} entries", stringify!($name))));
                }
                Ok($name(m))
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, o: $name) -> $name {
                $name(self.0 + o.0)
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, o: $name) -> $name {
                $name(self.0 - o.0)
            }
        }
    };
}

fiber_type!(
    /// (1,1) tensor X^i_j; row = upper index, column = lower index.
    MixedTensor
);
fiber_type!(
    /// Dual of a mixed tensor, Y_i^j; row = lower index, column = upper index.
    DualMixed
);
fiber_type!(
    /// (0,2) tensor A_ij.
    BilinearForm
);
fiber_type!(
    /// (2,0) tensor B^ij.
    Bicontravariant
);

impl MixedTensor {
    pub fn identity(n: usize) -> Self {
        MixedTensor(Mat::identity(n))
    }
}

impl DualMixed {
    pub fn identity(n: usize) -> Self {
        DualMixed(Mat::identity(n))
    }
}

/// A symmetric positive definite bilinear form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricFiber {
    g: Mat,
}

/// Relative eigenvalue floor used by every SPD check.
pub const SPD_RTOL: f64 = 1e-12;

impl MetricFiber {
    pub fn new(a: BilinearForm) -> Result<Self> {
        Self::from_mat(a.0)
    }

    pub fn from_mat(g: Mat) -> Result<Self> {
        check_spd(&g)?;
        Ok(MetricFiber { g })
    }

    pub fn euclidean(n: usize) -> Self {
        MetricFiber { g: Mat::identity(n) }
    }

    pub fn mat(&self) -> &Mat {
        &self.g
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn inverse(&self) -> Mat {
        self.g.inverse().expect("SPD metric is invertible")
    }

    pub fn as_bilinear(&self) -> BilinearForm {
        BilinearForm(self.g)
    }
}

/// Symmetry and positive definiteness test shared by every metric entry point.
pub fn check_spd(g: &Mat) -> Result<()> {
    if !(1..=3).contains(&g.n()) {
        return Err(PhcmError::FiberDim(g.n()));
    }
    if !g.is_finite() {
        return Err(PhcmError::NotSpd("non-finite entries".into()));
    }
    let scale = g.max_abs().max(f64::MIN_POSITIVE);
    if g.asym().max_abs() > SPD_RTOL * scale {
        return Err(PhcmError::NotSpd(format!("asymmetry {:.3e}", g.asym().max_abs())));
    }
    let (lam, _) = g.sym_eigen();
    let max = lam.iter().cloned().fold(f64::MIN, f64::max);
    let min = lam.iter().cloned().fold(f64::MAX, f64::min);
    if !(max > 0.0) || min <= SPD_RTOL * max {
        return Err(PhcmError::NotSpd(format!("eigenvalues in [{min:.3e}, {max:.3e}]")));
    }
    Ok(())
}

fn same_n(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(PhcmError::Dimension { expected: a, got: b });
    }
    Ok(())
}

/// Duality product between a space and its dual.
pub trait Pairing<X> {
    fn pair(&self, x: &X) -> Result<f64>;
}

impl Pairing<MixedTensor> for DualMixed {
    fn pair(&self, x: &MixedTensor) -> Result<f64> {
        same_n(self.n(), x.n())?;
        Ok(self.0.frob(&x.0))
    }
}

impl Pairing<BilinearForm> for Bicontravariant {
    fn pair(&self, x: &BilinearForm) -> Result<f64> {
        same_n(self.n(), x.n())?;
        Ok(self.0.frob(&x.0))
    }
}

/// ⟨Y|X⟩: Y_i^j X^i_j for mixed tensors, B^ij A_ij for bilinear forms.
pub fn duality_pair<Y: Pairing<X>, X>(y: &Y, x: &X) -> Result<f64> {
    y.pair(x)
}

/// Plain symmetric / antisymmetric split of a bilinear form.
pub fn project_sym_asym(a: &BilinearForm) -> (BilinearForm, BilinearForm) {
    (BilinearForm(a.0.sym()), BilinearForm(a.0.asym()))
}

/// Same split on the dual side.
pub fn project_sym_asym_dual(b: &Bicontravariant) -> (Bicontravariant, Bicontravariant) {
    (Bicontravariant(b.0.sym()), Bicontravariant(b.0.asym()))
}

/// Metric-twisted split X = ĝ⁻¹ sym(ĝX) + remainder.
pub fn project_sym_asym_metric(x: &MixedTensor, g: &MetricFiber) -> Result<(MixedTensor, MixedTensor)> {
    same_n(g.n(), x.n())?;
    let s = g.inverse() * (*g.mat() * x.0).sym();
    Ok((MixedTensor(s), MixedTensor(x.0 - s)))
}

/// Dual counterpart, the adjoint of the metric-twisted projection: Y ↦ ĝ sym(ĝ⁻¹Y).
pub fn project_sym_asym_metric_dual(y: &DualMixed, g: &MetricFiber) -> Result<(DualMixed, DualMixed)> {
    same_n(g.n(), y.n())?;
    let s = *g.mat() * (g.inverse() * y.0).sym();
    Ok((DualMixed(s), DualMixed(y.0 - s)))
}

/// (tr X, X − (tr X / n) I).
pub fn project_vol_dev(x: &MixedTensor) -> (f64, MixedTensor) {
    let n = x.n();
    let tr = x.0.trace();
    (tr, MixedTensor(x.0 - Mat::identity(n) * (tr / n as f64)))
}

/// Dual split with the 1/n on the dual side: (tr Y / n, Y − (tr Y / n) I).
pub fn project_vol_dev_dual(y: &DualMixed) -> (f64, DualMixed) {
    let n = y.n();
    let yv = y.0.trace() / n as f64;
    (yv, DualMixed(y.0 - Mat::identity(n) * yv))
}

/// tr*(y) = y·I.
pub fn dual_trace(y: f64, n: usize) -> DualMixed {
    DualMixed(Mat::identity(n) * y)
}

/// Reconstruct the volumetric part of a mixed tensor from its trace.
pub fn vol_embed(x_vol: f64, n: usize) -> MixedTensor {
    MixedTensor(Mat::identity(n) * (x_vol / n as f64))
}

struct Sqrts {
    half: Mat,
    inv_half: Mat,
}

fn metric_sqrts(g: &MetricFiber) -> Sqrts {
    Sqrts {
        half: g.mat().sym_apply(f64::sqrt),
        inv_half: g.mat().sym_apply(|l| 1.0 / l.sqrt()),
    }
}

/// ln(G⁻¹ĝ) as a mixed tensor.
pub fn log_c(big_g: &MetricFiber, ghat: &MetricFiber) -> Result<MixedTensor> {
    same_n(big_g.n(), ghat.n())?;
    let s = metric_sqrts(big_g);
    let l = s.inv_half * *ghat.mat() * s.inv_half;
    let (lam, q) = l.sym_eigen();
    let max = lam.iter().cloned().fold(f64::MIN, f64::max);
    for &x in &lam {
        if !(x > SPD_RTOL * max) {
            return Err(PhcmError::NotSpd(format!(
                "similarity-transformed Cauchy-Green has eigenvalue {x:.3e} (max {max:.3e})"
            )));
        }
    }
    let ln: Vec<f64> = lam.iter().map(|x| x.ln()).collect();
    let ln_l = q * Mat::diag(&ln) * q.transpose();
    Ok(MixedTensor(s.inv_half * ln_l * s.half))
}

/// Logarithmic strain ζ = ½ ln(G⁻¹ĝ).
pub fn strain_log(big_g: &MetricFiber, ghat: &MetricFiber) -> Result<MixedTensor> {
    Ok(MixedTensor(log_c(big_g, ghat)?.0 * 0.5))
}

/// Log_G(ĝ) = G ln(G⁻¹ĝ), a symmetric bilinear form.
pub fn log_map(big_g: &MetricFiber, ghat: &MetricFiber) -> Result<BilinearForm> {
    let l = log_c(big_g, ghat)?;
    Ok(BilinearForm((*big_g.mat() * l.0).sym()))
}

/// Exp_G(δG) = G exp(G⁻¹δG).
pub fn exp_map(big_g: &MetricFiber, dg: &BilinearForm) -> Result<MetricFiber> {
    same_n(big_g.n(), dg.n())?;
    let s = metric_sqrts(big_g);
    let inner = (s.inv_half * dg.0 * s.inv_half).sym();
    let e = inner.sym_apply(f64::exp);
    MetricFiber::from_mat((s.half * e * s.half).sym())
}

/// (I1, I2, I3) = (tr Z, ½(tr²Z − tr Z²), det Z).
pub fn rotational_invariants(z: &MixedTensor) -> (f64, f64, f64) {
    let t = z.0.trace();
    let t2 = (z.0 * z.0).trace();
    (t, 0.5 * (t * t - t2), z.0.det())
}
