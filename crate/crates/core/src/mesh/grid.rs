use crate::error::{PhcmError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Periodic,
    Bounded,
}

/// Causality of a boundary face: velocity prescribed (∂B₁) or traction prescribed (∂B₂).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FacePort {
    Velocity,
    Traction,
}

pub const MIN_CELLS: usize = 4;

/// Uniform node-collocated Cartesian grid with the origin at node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    cells: [usize; 3],
    h: [f64; 3],
    topo: [Topology; 3],
    faces: [[FacePort; 2]; 3],
    dims: [usize; 3],
    stride: [usize; 3],
    len: usize,
}

impl Grid {
    /// Grid with every bounded face on the velocity side.
    pub fn new(cells: &[usize], lengths: &[f64], topo: &[Topology]) -> Result<Self> {
        let n = cells.len();
        if !(1..=3).contains(&n) || lengths.len() != n || topo.len() != n {
            return Err(PhcmError::Grid(format!(
                "need matching cells/lengths/topology of length 1..=3, got {}/{}/{}",
                n,
                lengths.len(),
                topo.len()
            )));
        }
        let mut g = Grid {
            n,
            cells: [1; 3],
            h: [1.0; 3],
            topo: [Topology::Periodic; 3],
            faces: [[FacePort::Velocity; 2]; 3],
            dims: [1; 3],
            stride: [1; 3],
            len: 1,
        };
        for a in 0..n {
            if cells[a] < MIN_CELLS {
                return Err(PhcmError::Grid(format!("axis {a}: {} cells, need at least {MIN_CELLS}", cells[a])));
            }
            if !(lengths[a] > 0.0) || !lengths[a].is_finite() {
                return Err(PhcmError::Grid(format!("axis {a}: length must be positive")));
            }
            g.cells[a] = cells[a];
            g.h[a] = lengths[a] / cells[a] as f64;
            g.topo[a] = topo[a];
            g.dims[a] = match topo[a] {
                Topology::Periodic => cells[a],
                Topology::Bounded => cells[a] + 1,
            };
        }
        g.stride = [1, g.dims[0], g.dims[0] * g.dims[1]];
        g.len = g.dims[0] * g.dims[1] * g.dims[2];
        Ok(g)
    }

    pub fn periodic(cells: &[usize], lengths: &[f64]) -> Result<Self> {
        Grid::new(cells, lengths, &vec![Topology::Periodic; cells.len()])
    }

    pub fn bounded(cells: &[usize], lengths: &[f64]) -> Result<Self> {
        Grid::new(cells, lengths, &vec![Topology::Bounded; cells.len()])
    }

    /// Assign the port of one face; `side` 0 is the low face, 1 the high face.
    pub fn with_face(mut self, axis: usize, side: usize, port: FacePort) -> Result<Self> {
        if axis >= self.n || side > 1 {
            return Err(PhcmError::Grid(format!("no face ({axis},{side})")));
        }
        if self.topo[axis] == Topology::Periodic {
            return Err(PhcmError::Grid(format!("axis {axis} is periodic and has no faces")));
        }
        self.faces[axis][side] = port;
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    #[inline]
    pub fn h(&self, a: usize) -> f64 {
        self.h[a]
    }
    pub fn cells(&self, a: usize) -> usize {
        self.cells[a]
    }
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn topology(&self, a: usize) -> Topology {
        self.topo[a]
    }
    pub fn length(&self, a: usize) -> f64 {
        self.h[a] * self.cells[a] as f64
    }
    pub fn face_port(&self, axis: usize, side: usize) -> FacePort {
        self.faces[axis][side]
    }
    pub fn max_h(&self) -> f64 {
        (0..self.n).map(|a| self.h[a]).fold(0.0, f64::max)
    }
    pub fn min_h(&self) -> f64 {
        (0..self.n).map(|a| self.h[a]).fold(f64::MAX, f64::min)
    }
    pub fn all_periodic(&self) -> bool {
        (0..self.n).all(|a| self.topo[a] == Topology::Periodic)
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        i[0] + self.stride[1] * i[1] + self.stride[2] * i[2]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        [idx % self.dims[0], (idx / self.stride[1]) % self.dims[1], idx / self.stride[2]]
    }

    /// Physical position of a node.
    pub fn x(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.n {
            x[a] = c[a] as f64 * self.h[a];
        }
        x
    }

    /// Quadrature weight: rectangle rule on periodic axes, trapezoid on bounded ones.
    pub fn weight(&self, idx: usize) -> f64 {
        let c = self.coords(idx);
        let mut w = 1.0;
        for a in 0..self.n {
            w *= self.axis_weight(a, c[a]);
        }
        w
    }

    fn axis_weight(&self, a: usize, i: usize) -> f64 {
        match self.topo[a] {
            Topology::Periodic => self.h[a],
            Topology::Bounded => {
                if i == 0 || i == self.dims[a] - 1 {
                    0.5 * self.h[a]
                } else {
                    self.h[a]
                }
            }
        }
    }

    /// Weight of a node inside the face orthogonal to `axis` (product over the other axes).
    pub fn face_weight(&self, axis: usize, idx: usize) -> f64 {
        let c = self.coords(idx);
        let mut w = 1.0;
        for a in 0..self.n {
            if a != axis {
                w *= self.axis_weight(a, c[a]);
            }
        }
        w
    }

    /// ∑ w f over the grid.
    pub fn quadrature(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len);
        f.iter().enumerate().map(|(i, v)| self.weight(i) * v).sum()
    }

    /// Nodes on face (axis, side), in index order.
    pub fn face_nodes(&self, axis: usize, side: usize) -> Vec<usize> {
        if self.topo[axis] == Topology::Periodic {
            return Vec::new();
        }
        let target = if side == 0 { 0 } else { self.dims[axis] - 1 };
        (0..self.len).filter(|&i| self.coords(i)[axis] == target).collect()
    }

    /// Faces as (axis, side, outward sign).
    pub fn faces(&self) -> Vec<(usize, usize, f64)> {
        let mut v = Vec::new();
        for a in 0..self.n {
            if self.topo[a] == Topology::Bounded {
                v.push((a, 0, -1.0));
                v.push((a, 1, 1.0));
            }
        }
        v
    }

    pub fn is_boundary_node(&self, idx: usize) -> bool {
        let c = self.coords(idx);
        (0..self.n).any(|a| self.topo[a] == Topology::Bounded && (c[a] == 0 || c[a] == self.dims[a] - 1))
    }

    /// Port label of a boundary node; nodes touching any velocity face are velocity nodes.
    pub fn node_port(&self, idx: usize) -> Option<FacePort> {
        let c = self.coords(idx);
        let mut port = None;
        for a in 0..self.n {
            if self.topo[a] != Topology::Bounded {
                continue;
            }
            for (side, at) in [(0, 0), (1, self.dims[a] - 1)] {
                if c[a] == at {
                    match self.faces[a][side] {
                        FacePort::Velocity => return Some(FacePort::Velocity),
                        FacePort::Traction => port = Some(FacePort::Traction),
                    }
                }
            }
        }
        port
    }

    /// Centered first derivative along axis `a`; one-sided second-order at bounded ends.
    pub fn diff(&self, f: &[f64], a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        self.diff_into(f, a, &mut out);
        out
    }

    pub fn diff_into(&self, f: &[f64], a: usize, out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.len);
        let s = self.stride[a];
        let m = self.dims[a];
        let inv2h = 0.5 / self.h[a];
        for idx in 0..self.len {
            let i = self.coords(idx)[a];
            let base = idx - i * s;
            let at = |k: usize| f[base + k * s];
            out[idx] = match self.topo[a] {
                Topology::Periodic => (at((i + 1) % m) - at((i + m - 1) % m)) * inv2h,
                Topology::Bounded => {
                    if i == 0 {
                        (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2h
                    } else if i == m - 1 {
                        (3.0 * at(m - 1) - 4.0 * at(m - 2) + at(m - 3)) * inv2h
                    } else {
                        (at(i + 1) - at(i - 1)) * inv2h
                    }
                }
            };
        }
    }

    /// Compact second derivative along axis `a`; one-sided four-point at bounded ends.
    pub fn diff2(&self, f: &[f64], a: usize) -> Vec<f64> {
        let s = self.stride[a];
        let m = self.dims[a];
        let ih2 = 1.0 / (self.h[a] * self.h[a]);
        let mut out = vec![0.0; self.len];
        for idx in 0..self.len {
            let i = self.coords(idx)[a];
            let base = idx - i * s;
            let at = |k: usize| f[base + k * s];
            out[idx] = match self.topo[a] {
                Topology::Periodic => (at((i + 1) % m) - 2.0 * at(i) + at((i + m - 1) % m)) * ih2,
                Topology::Bounded => {
                    if i == 0 {
                        (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) * ih2
                    } else if i == m - 1 {
                        (2.0 * at(m - 1) - 5.0 * at(m - 2) + 4.0 * at(m - 3) - at(m - 4)) * ih2
                    } else {
                        (at(i + 1) - 2.0 * at(i) + at(i - 1)) * ih2
                    }
                }
            };
        }
        out
    }

    /// Sample a function of position at every node.
    pub fn sample(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..self.len).map(|i| f(self.x(i))).collect()
    }

    /// Same grid shape with spacing scaled so that cells double on every axis.
    pub fn refined(&self) -> Result<Grid> {
        let cells: Vec<usize> = (0..self.n).map(|a| self.cells[a] * 2).collect();
        let lengths: Vec<f64> = (0..self.n).map(|a| self.length(a)).collect();
        let mut g = Grid::new(&cells, &lengths, &self.topo[..self.n])?;
        g.faces = self.faces;
        Ok(g)
    }

    /// Wrap or clamp a fractional node coordinate into the valid range along axis `a`.
    pub(crate) fn stencil_start(&self, a: usize, s: f64, width: usize) -> (i64, f64) {
        let base = s.floor() as i64 - (width as i64 / 2 - 1);
        match self.topo[a] {
            Topology::Periodic => (base, s),
            Topology::Bounded => {
                let max_start = self.dims[a] as i64 - width as i64;
                (base.clamp(0, max_start.max(0)), s)
            }
        }
    }

    pub(crate) fn wrap(&self, a: usize, k: i64) -> usize {
        let m = self.dims[a] as i64;
        match self.topo[a] {
            Topology::Periodic => k.rem_euclid(m) as usize,
            Topology::Bounded => k.clamp(0, m - 1) as usize,
        }
    }
}

/// Local cubic Lagrange interpolation of node data at a physical point.
pub fn interpolate(grid: &Grid, f: &[f64], x: &[f64]) -> f64 {
    let n = grid.n();
    let mut idx = [[0usize; 4]; 3];
    let mut wts = [[0.0; 4]; 3];
    for a in 0..3 {
        if a >= n {
            idx[a] = [0; 4];
            wts[a] = [1.0, 0.0, 0.0, 0.0];
            continue;
        }
        let s = x[a] / grid.h(a);
        let (start, s) = grid.stencil_start(a, s, 4);
        let nodes: [f64; 4] = std::array::from_fn(|k| (start + k as i64) as f64);
        for k in 0..4 {
            let mut w = 1.0;
            for m in 0..4 {
                if m != k {
                    w *= (s - nodes[m]) / (nodes[k] - nodes[m]);
                }
            }
            wts[a][k] = w;
            idx[a][k] = grid.wrap(a, start + k as i64);
        }
    }
    let (ka, kb, kc) = (4, if n >= 2 { 4 } else { 1 }, if n >= 3 { 4 } else { 1 });
    let mut acc = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            for k in 0..kc {
                let node = grid.index([idx[0][i], idx[1][j], idx[2][k]]);
                acc += wts[0][i] * wts[1][j] * wts[2][k] * f[node];
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_coarse_grid() {
        assert!(Grid::periodic(&[3], &[1.0]).is_err());
        assert!(Grid::periodic(&[4, 4], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn unit_density_integrates_to_volume() {
        let g = Grid::periodic(&[8, 6], &[1.0, 1.0]).unwrap();
        assert!((g.quadrature(&vec![1.0; g.len()]) - 1.0).abs() < 1e-14);
        let b = Grid::bounded(&[8, 6], &[2.0, 1.0]).unwrap();
        assert!((b.quadrature(&vec![1.0; b.len()]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_of_sine_is_second_order() {
        let err = |n: usize| {
            let g = Grid::periodic(&[n], &[1.0]).unwrap();
            let f = g.sample(|x| (2.0 * PI * x[0]).sin());
            let df = g.diff(&f, 0);
            (0..g.len())
                .map(|i| (df[i] - 2.0 * PI * (2.0 * PI * g.x(i)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(32) / err(64)).log2();
        assert!(order > 1.95, "order {order}");
    }

    #[test]
    fn bounded_one_sided_exact_on_quadratics() {
        let g = Grid::bounded(&[6], &[1.0]).unwrap();
        let f = g.sample(|x| 3.0 * x[0] * x[0] - x[0]);
        let df = g.diff(&f, 0);
        for i in 0..g.len() {
            assert!((df[i] - (6.0 * g.x(i)[0] - 1.0)).abs() < 1e-12);
        }
        let d2 = g.diff2(&g.sample(|x| x[0].powi(3)), 0);
        for i in 0..g.len() {
            assert!((d2[i] - 6.0 * g.x(i)[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn corner_goes_to_velocity_side() {
        let g = Grid::bounded(&[4, 4], &[1.0, 1.0])
            .unwrap()
            .with_face(0, 1, FacePort::Traction)
            .unwrap();
        let corner = g.index([4, 0, 0]);
        assert_eq!(g.node_port(corner), Some(FacePort::Velocity));
        let mid = g.index([4, 2, 0]);
        assert_eq!(g.node_port(mid), Some(FacePort::Traction));
        assert_eq!(g.node_port(g.index([2, 2, 0])), None);
    }

    #[test]
    fn cubic_interpolation_reproduces_cubics() {
        let g = Grid::bounded(&[8, 8], &[1.0, 1.0]).unwrap();
        let f = g.sample(|x| x[0].powi(3) - 2.0 * x[0] * x[1] + x[1].powi(2));
        for p in [[0.13f64, 0.71], [0.99, 0.02], [0.5, 0.5]] {
            let exact = p[0].powi(3) - 2.0 * p[0] * p[1] + p[1].powi(2);
            assert!((interpolate(&g, &f, &p) - exact).abs() < 1e-12);
        }
    }
}
