//! The material, spatial and convective state representations and the maps between them.
//!
//! The configuration φ is stored as a displacement u(X) = φ(X) − X on the body grid.
//! Spatial fields live on a separate spatial sampling grid and are obtained by
//! inverting φ node by node with Newton iteration on cubic interpolants.

use crate::error::{PhcmError, Result};
use crate::fiber::Mat;
use crate::mesh::{interpolate, jacobian, BundleForm, Grid, MassForm, MetricField, Topology, ValueKind};
use std::fmt;
use std::sync::Arc;

pub mod reduction;

/// The ambient metric g as a function of spatial position.
#[derive(Clone)]
pub struct Ambient {
    n: usize,
    f: Arc<dyn Fn([f64; 3]) -> Mat + Send + Sync>,
}

impl fmt::Debug for Ambient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ambient(n={})", self.n)
    }
}

impl Ambient {
    pub fn euclidean(n: usize) -> Self {
        Self::constant(Mat::identity(n))
    }

    pub fn constant(g: Mat) -> Self {
        Ambient { n: g.n(), f: Arc::new(move |_| g) }
    }

    pub fn from_fn(n: usize, f: impl Fn([f64; 3]) -> Mat + Send + Sync + 'static) -> Self {
        Ambient { n, f: Arc::new(f) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, x: [f64; 3]) -> Mat {
        (self.f)(x)
    }

    /// The metric sampled on a grid.
    pub fn field(&self, grid: &Grid) -> Result<MetricField> {
        MetricField::from_fn(grid, |x| self.at(x))
    }
}

/// Parameters shared by the three representations.
#[derive(Clone, Debug)]
pub struct Params {
    pub body: Grid,
    pub space: Grid,
    pub ambient: Ambient,
    /// Reference mass form μ̃ = μ̂ on the body.
    pub mass: MassForm,
    /// Reference metric G on the body.
    pub reference: MetricField,
}

impl Params {
    /// Body and spatial sampling on the same grid, Euclidean ambient and reference metrics.
    pub fn euclidean(grid: &Grid, mass: MassForm) -> Result<Self> {
        let n = grid.n();
        Ok(Params {
            body: grid.clone(),
            space: grid.clone(),
            ambient: Ambient::euclidean(n),
            mass,
            reference: MetricField::euclidean(grid),
        })
    }

    pub fn n(&self) -> usize {
        self.body.n()
    }
}

#[derive(Clone, Debug)]
pub struct MaterialState {
    /// φ(X) − X as a vector-valued 0-form on the body.
    pub disp: BundleForm,
    /// ℳ̃, covector-valued n-form on the body with ambient covector values.
    pub momentum: BundleForm,
}

#[derive(Clone, Debug)]
pub struct SpatialState {
    pub mass: MassForm,
    pub momentum: BundleForm,
}

#[derive(Clone, Debug)]
pub struct ConvectiveState {
    pub metric: MetricField,
    pub momentum: BundleForm,
}

impl MaterialState {
    pub fn at_rest(p: &Params) -> Self {
        let n = p.n();
        MaterialState {
            disp: BundleForm::zeros(&p.body, 0, ValueKind::Vector),
            momentum: BundleForm::zeros(&p.body, n, ValueKind::Covector),
        }
    }

    /// Build from a displacement and the material velocity ṽ (ambient components).
    pub fn from_velocity(p: &Params, disp: BundleForm, vel: &BundleForm) -> Result<Self> {
        vel.expect(0, ValueKind::Vector, "material velocity")?;
        let n = p.n();
        let mut momentum = BundleForm::zeros(&p.body, n, ValueKind::Covector);
        for node in 0..p.body.len() {
            let g = p.ambient.at(position(&p.body, &disp, node));
            let low = g.mulv(&vel.vec_at(node));
            let rho = p.mass.density()[node];
            for i in 0..n {
                momentum.set(node, i, 0, rho * low[i]);
            }
        }
        Ok(MaterialState { disp, momentum })
    }

    /// ṽ = g⁻¹ℳ̃ / ρ̃.
    pub fn velocity(&self, p: &Params) -> Result<BundleForm> {
        let n = p.n();
        let mut v = BundleForm::zeros(&p.body, 0, ValueKind::Vector);
        for node in 0..p.body.len() {
            let gi = p.ambient.at(position(&p.body, &self.disp, node)).inv()?;
            let m: Vec<f64> = (0..n).map(|i| self.momentum.get(node, i, 0)).collect();
            let up = gi.mulv(&m);
            let rho = p.mass.density()[node];
            for i in 0..n {
                v.set(node, i, 0, up[i] / rho);
            }
        }
        Ok(v)
    }

    pub fn check(&self, p: &Params) -> Result<()> {
        self.disp.check(&p.body)?;
        self.disp.expect(0, ValueKind::Vector, "displacement")?;
        self.momentum.check(&p.body)?;
        self.momentum.expect(p.n(), ValueKind::Covector, "material momentum")?;
        deformation_gradient(&p.body, &self.disp).map(|_| ())
    }
}

impl SpatialState {
    /// v = ⋆_c⁻¹ ℳ.
    pub fn velocity(&self, p: &Params) -> Result<BundleForm> {
        crate::mesh::star_c_inv(&p.space, &self.momentum, &p.ambient.field(&p.space)?, &self.mass)
    }
}

impl ConvectiveState {
    /// v̂ = ⋆̂_c⁻¹ ℳ̂.
    pub fn velocity(&self, p: &Params) -> Result<BundleForm> {
        crate::mesh::star_c_inv(&p.body, &self.momentum, &self.metric, &p.mass)
    }
}

/// φ(X) for a body node.
pub fn position(grid: &Grid, disp: &BundleForm, node: usize) -> [f64; 3] {
    let x = grid.x(node);
    let u = disp.vec_at(node);
    [x[0] + u[0], x[1] + u[1], x[2] + u[2]]
}

/// F = I + ∇u per node; fold-over (det F ≤ 0) is rejected.
pub fn deformation_gradient(grid: &Grid, disp: &BundleForm) -> Result<Vec<Mat>> {
    disp.check(grid)?;
    let n = grid.n();
    let mut f = jacobian(grid, disp);
    for (node, m) in f.iter_mut().enumerate() {
        *m = *m + Mat::identity(n);
        let det = m.det();
        if !(det > 0.0) {
            return Err(PhcmError::Fold { node, det });
        }
    }
    Ok(f)
}

/// J_φ = det F · √det g(φ) / √det G, the ratio of Riemannian volumes.
pub fn volume_jacobian(p: &Params, disp: &BundleForm) -> Result<Vec<f64>> {
    let f = deformation_gradient(&p.body, disp)?;
    Ok((0..p.body.len())
        .map(|node| {
            let g = p.ambient.at(position(&p.body, disp, node));
            f[node].det() * g.det().sqrt() / p.reference.sqrt_det(node)
        })
        .collect())
}

/// Nodal fields whose cubic interpolants describe the map x ↦ x + d(x).
struct MapInterp<'a> {
    grid: &'a Grid,
    d: Vec<Vec<f64>>,
    jac: Vec<Vec<Vec<f64>>>,
}

impl<'a> MapInterp<'a> {
    fn new(grid: &'a Grid, disp: &BundleForm) -> Self {
        let n = grid.n();
        let d: Vec<Vec<f64>> = (0..n).map(|i| disp.component(i, 0)).collect();
        let jac = d.iter().map(|c| (0..n).map(|j| grid.diff(c, j)).collect()).collect();
        MapInterp { grid, d, jac }
    }

    fn eval(&self, x: &[f64; 3]) -> ([f64; 3], Mat) {
        let n = self.grid.n();
        let mut y = *x;
        let mut f = Mat::identity(n);
        for i in 0..n {
            y[i] += interpolate(self.grid, &self.d[i], x);
            for j in 0..n {
                f.add_at(i, j, interpolate(self.grid, &self.jac[i][j], x));
            }
        }
        (y, f)
    }
}

fn wrap_delta(grid: &Grid, a: usize, d: f64) -> f64 {
    match grid.topology(a) {
        Topology::Periodic => {
            let l = grid.length(a);
            d - l * (d / l).round()
        }
        Topology::Bounded => d,
    }
}

fn wrap_point(grid: &Grid, a: usize, x: f64) -> f64 {
    match grid.topology(a) {
        Topology::Periodic => x.rem_euclid(grid.length(a)),
        Topology::Bounded => x,
    }
}

const NEWTON_MAX: usize = 50;

/// Preimages under x ↦ x + d(x) (d sampled on `src`) of the nodes of `dst`.
pub fn invert_map(src: &Grid, disp: &BundleForm, dst: &Grid) -> Result<Vec<[f64; 3]>> {
    let targets: Vec<[f64; 3]> = (0..dst.len()).map(|i| dst.x(i)).collect();
    invert_points(src, disp, &targets)
}

/// Preimages under x ↦ x + d(x) of arbitrary points.
pub fn invert_points(src: &Grid, disp: &BundleForm, targets: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
    disp.check(src)?;
    let n = src.n();
    let map = MapInterp::new(src, disp);
    let tol = 1e-13 * (0..n).map(|a| src.length(a)).fold(1.0, f64::max);
    let mut out = Vec::with_capacity(targets.len());
    for (node, &y) in targets.iter().enumerate() {
        let mut x = y;
        for i in 0..n {
            x[i] -= interpolate(src, &map.d[i], &y);
        }
        let mut converged = false;
        let mut trace = Vec::new();
        for _ in 0..NEWTON_MAX {
            let (fx, jac) = map.eval(&x);
            let r: Vec<f64> = (0..n).map(|a| wrap_delta(src, a, fx[a] - y[a])).collect();
            let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            trace.push(rn);
            if rn <= tol {
                converged = true;
                break;
            }
            let step = jac.inv()?.mulv(&r);
            for a in 0..n {
                x[a] -= step[a];
            }
        }
        if !converged {
            return Err(PhcmError::NoConvergence { iters: NEWTON_MAX, trace });
        }
        for a in 0..n {
            x[a] = wrap_point(src, a, x[a]);
            if src.topology(a) == Topology::Bounded {
                let l = src.length(a);
                if x[a] < -1e-9 * l || x[a] > l * (1.0 + 1e-9) {
                    return Err(PhcmError::Grid(format!("point {node} has no preimage inside the body")));
                }
            }
        }
        out.push(x);
    }
    Ok(out)
}

fn interp_at(grid: &Grid, f: &[f64], x: &[f64; 3]) -> f64 {
    interpolate(grid, f, x)
}

/// Push the material state forward to the spatial grid: μ = φ_*μ̃, ℳ = φ_*(form part of ℳ̃).
pub fn to_spatial(m: &MaterialState, p: &Params) -> Result<SpatialState> {
    m.check(p)?;
    let n = p.n();
    let f = deformation_gradient(&p.body, &m.disp)?;
    let det: Vec<f64> = f.iter().map(|f| f.det()).collect();
    // densities per unit coordinate volume on the image are ρ̃/det F
    let rho: Vec<f64> = (0..p.body.len()).map(|i| p.mass.density()[i] / det[i]).collect();
    let mom: Vec<Vec<f64>> = (0..n).map(|i| (0..p.body.len()).map(|k| m.momentum.get(k, i, 0) / det[k]).collect()).collect();
    let pre = invert_map(&p.body, &m.disp, &p.space)?;
    let mut dens = Vec::with_capacity(p.space.len());
    let mut out = BundleForm::zeros(&p.space, n, ValueKind::Covector);
    for (node, x) in pre.iter().enumerate() {
        dens.push(interp_at(&p.body, &rho, x));
        for i in 0..n {
            out.set(node, i, 0, interp_at(&p.body, &mom[i], x));
        }
    }
    Ok(SpatialState { mass: MassForm::new(&p.space, dens)?, momentum: out })
}

/// Density of φ_*μ̃ (per unit coordinate volume) at arbitrary spatial points.
pub fn pushforward_density_at(m: &MaterialState, p: &Params, points: &[[f64; 3]]) -> Result<Vec<f64>> {
    let f = deformation_gradient(&p.body, &m.disp)?;
    let rho: Vec<f64> = (0..p.body.len()).map(|i| p.mass.density()[i] / f[i].det()).collect();
    let pre = invert_points(&p.body, &m.disp, points)?;
    Ok(pre.iter().map(|x| interp_at(&p.body, &rho, x)).collect())
}

/// Pull a spatial state back along a known configuration.
pub fn from_spatial(s: &SpatialState, disp: &BundleForm, p: &Params) -> Result<MaterialState> {
    let n = p.n();
    let f = deformation_gradient(&p.body, disp)?;
    let comps: Vec<Vec<f64>> = (0..n).map(|i| s.momentum.component(i, 0)).collect();
    let mut momentum = BundleForm::zeros(&p.body, n, ValueKind::Covector);
    for node in 0..p.body.len() {
        let x = position(&p.body, disp, node);
        let det = f[node].det();
        for i in 0..n {
            momentum.set(node, i, 0, det * interp_at(&p.space, &comps[i], &x));
        }
    }
    Ok(MaterialState { disp: disp.clone(), momentum })
}

/// ĝ = φ*g and ℳ̂ = value pullback of ℳ̃.
pub fn to_convective(m: &MaterialState, p: &Params) -> Result<ConvectiveState> {
    m.check(p)?;
    let n = p.n();
    let f = deformation_gradient(&p.body, &m.disp)?;
    let mut gs = Vec::with_capacity(p.body.len());
    let mut mom = BundleForm::zeros(&p.body, n, ValueKind::Covector);
    for node in 0..p.body.len() {
        let g = p.ambient.at(position(&p.body, &m.disp, node));
        let ft = f[node].transpose();
        gs.push((ft * g * f[node]).sym());
        let mt: Vec<f64> = (0..n).map(|i| m.momentum.get(node, i, 0)).collect();
        let mh = ft.mulv(&mt);
        for i in 0..n {
            mom.set(node, i, 0, mh[i]);
        }
    }
    Ok(ConvectiveState { metric: MetricField::new(&p.body, gs)?, momentum: mom })
}

/// Recover ℳ̃ from a convective momentum along a known configuration.
pub fn from_convective(c: &ConvectiveState, disp: &BundleForm, p: &Params) -> Result<MaterialState> {
    let n = p.n();
    let f = deformation_gradient(&p.body, disp)?;
    let mut momentum = BundleForm::zeros(&p.body, n, ValueKind::Covector);
    for node in 0..p.body.len() {
        let fit = f[node].transpose().inv()?;
        let mh: Vec<f64> = (0..n).map(|i| c.momentum.get(node, i, 0)).collect();
        let mt = fit.mulv(&mh);
        for i in 0..n {
            momentum.set(node, i, 0, mt[i]);
        }
    }
    Ok(MaterialState { disp: disp.clone(), momentum })
}

/// (v, v̂) from the material velocity: v = ṽ∘φ⁻¹ on the spatial grid, v̂ = F⁻¹ṽ on the body.
pub fn velocity_representations(p: &Params, disp: &BundleForm, vel: &BundleForm) -> Result<(BundleForm, BundleForm)> {
    vel.check(&p.body)?;
    vel.expect(0, ValueKind::Vector, "material velocity")?;
    let n = p.n();
    let f = deformation_gradient(&p.body, disp)?;
    let mut vhat = BundleForm::zeros(&p.body, 0, ValueKind::Vector);
    for node in 0..p.body.len() {
        let fi = f[node].inv()?;
        vhat.set_vec(node, &fi.mulv(&vel.vec_at(node))[..n]);
    }
    let pre = invert_map(&p.body, disp, &p.space)?;
    let comps: Vec<Vec<f64>> = (0..n).map(|i| vel.component(i, 0)).collect();
    let mut v = BundleForm::zeros(&p.space, 0, ValueKind::Vector);
    for (node, x) in pre.iter().enumerate() {
        for i in 0..n {
            v.set(node, i, 0, interp_at(&p.body, &comps[i], x));
        }
    }
    Ok((v, vhat))
}

/// Material kinetic energy ∫ ½ g^{ij}(φ) ℳ̃_i ℳ̃_j / μ̃.
pub fn material_kinetic_energy(m: &MaterialState, p: &Params) -> Result<f64> {
    let n = p.n();
    let mut dens = vec![0.0; p.body.len()];
    for (node, d) in dens.iter_mut().enumerate() {
        let gi = p.ambient.at(position(&p.body, &m.disp, node)).inv()?;
        let mm: Vec<f64> = (0..n).map(|i| m.momentum.get(node, i, 0)).collect();
        let up = gi.mulv(&mm);
        *d = 0.5 * (0..n).map(|i| up[i] * mm[i]).sum::<f64>() / p.mass.density()[node];
    }
    Ok(p.body.quadrature(&dens))
}

/// Integrate ∂ₜψ = −v̂∘ψ for the inverse configuration ψ = φ⁻¹ at the spatial nodes with RK4,
/// then invert ψ to return the displacement of φ(t).
///
/// `history` holds v̂ samples at uniformly spaced times `t0 + k·dt`; stage values between
/// samples are linear in time.
pub fn reconstruct_configuration(p: &Params, history: &[BundleForm], dt: f64, disp0: &BundleForm) -> Result<BundleForm> {
    if history.is_empty() {
        return Ok(disp0.clone());
    }
    let n = p.n();
    let mut psi = invert_map(&p.body, disp0, &p.space)?;
    let comps: Vec<Vec<Vec<f64>>> = history.iter().map(|v| (0..n).map(|i| v.component(i, 0)).collect()).collect();
    let vel = |k: usize, frac: f64, x: &[f64; 3]| -> [f64; 3] {
        let mut out = [0.0; 3];
        let k1 = (k + 1).min(comps.len() - 1);
        for i in 0..n {
            let a = interp_at(&p.body, &comps[k][i], x);
            let b = interp_at(&p.body, &comps[k1][i], x);
            out[i] = (1.0 - frac) * a + frac * b;
        }
        out
    };
    let shift = |x: &[f64; 3], k: &[f64; 3], s: f64| -> [f64; 3] { std::array::from_fn(|a| x[a] + s * k[a]) };
    for step in 0..history.len() - 1 {
        for x in psi.iter_mut() {
            let k1 = vel(step, 0.0, x).map(|v| -v);
            let k2 = vel(step, 0.5, &shift(x, &k1, 0.5 * dt)).map(|v| -v);
            let k3 = vel(step, 0.5, &shift(x, &k2, 0.5 * dt)).map(|v| -v);
            let k4 = vel(step, 1.0, &shift(x, &k3, dt)).map(|v| -v);
            for a in 0..n {
                x[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
        }
        let d = inverse_displacement(&p.space, &psi);
        if deformation_gradient(&p.space, &d).is_err() {
            return Err(PhcmError::FoldStep { step: step + 1 });
        }
    }
    let d = inverse_displacement(&p.space, &psi);
    let pre = invert_map(&p.space, &d, &p.body)?;
    let mut disp = BundleForm::zeros(&p.body, 0, ValueKind::Vector);
    for (node, x) in pre.iter().enumerate() {
        let xb = p.body.x(node);
        let u: Vec<f64> = (0..n).map(|a| wrap_delta(&p.body, a, x[a] - xb[a])).collect();
        disp.set_vec(node, &u);
    }
    Ok(disp)
}

fn inverse_displacement(space: &Grid, psi: &[[f64; 3]]) -> BundleForm {
    let n = space.n();
    let mut d = BundleForm::zeros(space, 0, ValueKind::Vector);
    for (node, x) in psi.iter().enumerate() {
        let xs = space.x(node);
        let u: Vec<f64> = (0..n).map(|a| wrap_delta(space, a, x[a] - xs[a])).collect();
        d.set_vec(node, &u);
    }
    d
}
