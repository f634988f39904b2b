use super::forms::{BundleForm, ScalarForm, ValueKind};
use super::grid::{FacePort, Grid};
use crate::error::{PhcmError, Result};

/// Values of a traced field on one boundary face.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceTrace {
    pub axis: usize,
    pub side: usize,
    /// Outward orientation of the face normal along `axis`.
    pub sign: f64,
    pub port: FacePort,
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
    pub comps: usize,
    pub values: Vec<f64>,
}

impl FaceTrace {
    pub fn value(&self, k: usize, c: usize) -> f64 {
        self.values[k * self.comps + c]
    }
}

/// A field restricted to the boundary, face by face.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryField {
    pub faces: Vec<FaceTrace>,
}

impl BoundaryField {
    fn build(grid: &Grid, comps: usize, mut f: impl FnMut(usize, usize, f64, usize) -> f64) -> Self {
        let faces = grid
            .faces()
            .into_iter()
            .map(|(axis, side, sign)| {
                let nodes = grid.face_nodes(axis, side);
                let weights = nodes.iter().map(|&i| grid.face_weight(axis, i)).collect();
                let mut values = Vec::with_capacity(nodes.len() * comps);
                for &node in &nodes {
                    for c in 0..comps {
                        values.push(f(node, axis, sign, c));
                    }
                }
                FaceTrace { axis, side, sign, port: grid.face_port(axis, side), nodes, weights, comps, values }
            })
            .collect();
        BoundaryField { faces }
    }

    pub fn zeros(grid: &Grid, comps: usize) -> Self {
        Self::build(grid, comps, |_, _, _, _| 0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// ∑ over faces (optionally only those with the given port) of ∫ ⟨a, b⟩ dA.
    pub fn pair(&self, other: &BoundaryField, port: Option<FacePort>) -> Result<f64> {
        if self.faces.len() != other.faces.len() {
            return Err(PhcmError::Kind("boundary fields on different grids".into()));
        }
        let mut s = 0.0;
        for (fa, fb) in self.faces.iter().zip(&other.faces) {
            if fa.comps != fb.comps || fa.nodes.len() != fb.nodes.len() {
                return Err(PhcmError::Kind("boundary component mismatch".into()));
            }
            if port.is_some_and(|p| p != fa.port) {
                continue;
            }
            for k in 0..fa.nodes.len() {
                let dot: f64 = (0..fa.comps).map(|c| fa.value(k, c) * fb.value(k, c)).sum();
                s += fa.weights[k] * dot;
            }
        }
        Ok(s)
    }

    /// Sum of a scalar trace over faces.
    pub fn integral(&self, port: Option<FacePort>) -> f64 {
        self.faces
            .iter()
            .filter(|f| port.map_or(true, |p| p == f.port))
            .map(|f| (0..f.nodes.len()).map(|k| f.weights[k] * f.value(k, 0)).sum::<f64>())
            .sum()
    }

    /// Keep only faces with the given port; the others are zeroed.
    pub fn restrict(&self, port: FacePort) -> BoundaryField {
        let mut r = self.clone();
        for f in r.faces.iter_mut() {
            if f.port != port {
                f.values.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        r
    }

    pub fn scaled(&self, s: f64) -> BoundaryField {
        let mut r = self.clone();
        r.faces.iter_mut().flat_map(|f| f.values.iter_mut()).for_each(|v| *v *= s);
        r
    }

    pub fn max_abs(&self) -> f64 {
        self.faces.iter().flat_map(|f| f.values.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Node values of a vector field on each face.
pub fn trace_vector(grid: &Grid, u: &BundleForm) -> Result<BoundaryField> {
    u.check(grid)?;
    u.expect(0, ValueKind::Vector, "vector trace")?;
    Ok(BoundaryField::build(grid, grid.n(), |node, _, _, c| u.get(node, c, 0)))
}

/// Node values of a scalar 0-form on each face.
pub fn trace_function(grid: &Grid, f: &ScalarForm) -> Result<BoundaryField> {
    f.check(grid)?;
    if f.degree() != 0 {
        return Err(PhcmError::Degree("function trace needs a 0-form".into()));
    }
    Ok(BoundaryField::build(grid, 1, |node, _, _, _| f.get(node, 0)))
}

/// Restriction of a covector-valued (n−1)-form to the faces, as outward normal flux per value index.
pub fn trace_normal(grid: &Grid, t: &BundleForm) -> Result<BoundaryField> {
    t.check(grid)?;
    if t.degree() + 1 != grid.n() {
        return Err(PhcmError::Degree("normal trace needs an (n-1)-form".into()));
    }
    Ok(BoundaryField::build(grid, grid.n(), |node, axis, sign, c| sign * t.flux_at(node).get(c, axis)))
}

/// Restriction of a scalar (n−1)-form to the faces with outward orientation.
pub fn trace_scalar_normal(grid: &Grid, b: &ScalarForm) -> Result<BoundaryField> {
    b.check(grid)?;
    let n = grid.n();
    if b.degree() + 1 != n {
        return Err(PhcmError::Degree("normal trace needs an (n-1)-form".into()));
    }
    Ok(BoundaryField::build(grid, 1, |node, axis, sign, _| {
        let (pos, s) = super::forms::flux_slot(n, axis);
        sign * s * b.get(node, pos)
    }))
}

/// ∮ β over the whole boundary.
pub fn boundary_integral(grid: &Grid, b: &ScalarForm) -> Result<f64> {
    Ok(trace_scalar_normal(grid, b)?.integral(None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{exterior_d, integrate, Topology};
    use std::f64::consts::PI;

    fn beta(grid: &Grid) -> ScalarForm {
        let mut b = ScalarForm::zeros(grid, 1);
        for node in 0..grid.len() {
            let x = grid.x(node);
            b.set(node, 0, (1.3 * x[0] + 0.4).sin() * (2.0 * x[1]).cos());
            b.set(node, 1, (x[0] * x[1] + 0.2).exp());
        }
        b
    }

    #[test]
    fn stokes_closed_domain() {
        let g = Grid::periodic(&[10, 12], &[1.0, 1.0]).unwrap();
        let mut b = ScalarForm::zeros(&g, 1);
        for node in 0..g.len() {
            let x = g.x(node);
            b.set(node, 0, (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
            b.set(node, 1, (2.0 * PI * (x[0] + x[1])).cos());
        }
        assert!(integrate(&g, &exterior_d(&g, &b).unwrap()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn stokes_bounded_second_order() {
        let res = |nc: usize| {
            let g = Grid::new(&[nc, nc], &[1.0, 0.8], &[Topology::Bounded; 2]).unwrap();
            let b = beta(&g);
            let lhs = integrate(&g, &exterior_d(&g, &b).unwrap()).unwrap();
            (lhs - boundary_integral(&g, &b).unwrap()).abs()
        };
        let (a, b, c) = (res(16), res(32), res(64));
        assert!((a / b).log2() > 1.9 && (b / c).log2() > 1.9, "{a} {b} {c}");
    }

    #[test]
    fn one_d_boundary_is_endpoint_difference() {
        let g = Grid::bounded(&[8], &[1.0]).unwrap();
        let f = ScalarForm::function(&g, g.sample(|x| x[0] * x[0] + 1.0)).unwrap();
        // a 0-form is the (n-1)-form in 1D: ∮ f = f(1) - f(0)
        assert!((boundary_integral(&g, &f).unwrap() - 1.0).abs() < 1e-14);
    }
}
