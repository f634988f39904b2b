//! Tangent and cotangent maps of the reductions ˢΦ: (φ, ℳ̃) ↦ (μ, ℳ) and ᶜΦ: (φ, ℳ̃) ↦ (ĝ, ℳ̂),
//! together with a numerical check of their duality.
//!
//! Tangents carry the covector components of ℳ̃ unchanged while φ moves. This is the horizontal
//! lift of the Levi-Civita connection only when the ambient metric is constant, so the duality
//! check is meaningful for flat, constant ambient metrics; the closed forms themselves use the
//! ambient connection throughout.

use super::{deformation_gradient, invert_map, position, to_convective, to_spatial, MaterialState, Params};
use crate::error::{PhcmError, Result};
use crate::fiber::Mat;
use crate::mesh::{
    covariant_gradient, exterior_covariant_d, integrate, interior_bundle, interpolate, lie_metric_direct, lie_scalar, trace_normal, wedge, wedge_dot,
    BoundaryField, BundleForm, Grid, ScalarForm, ValueKind,
};

/// Central-difference step used to generate tangents from the state maps.
pub const FD_STEP: f64 = 1e-5;

/// (δφ̃, δℳ̃): a vector-valued 0-form and a covector-valued top form on the body.
#[derive(Clone, Debug)]
pub struct MaterialTangent {
    pub dphi: BundleForm,
    pub dmom: BundleForm,
}

/// (δφ̃ ↦ e_φ, δℳ̃ ↦ e_ℳ̃, boundary effort) on the body.
#[derive(Clone, Debug)]
pub struct MaterialCotangent {
    /// Covector-valued top form.
    pub e_phi: BundleForm,
    /// Vector-valued 0-form.
    pub e_mom: BundleForm,
    /// Outward normal trace of a covector-valued (n−1)-form; empty on periodic bodies.
    pub e_bnd: BoundaryField,
}

/// (δμ, δℳ) on the spatial grid.
#[derive(Clone, Debug)]
pub struct SpatialTangent {
    pub dmass: ScalarForm,
    pub dmom: BundleForm,
}

/// (e_μ, e_ℳ): a 0-form and a vector-valued 0-form on the spatial grid.
#[derive(Clone, Debug)]
pub struct SpatialCotangent {
    pub e_mass: ScalarForm,
    pub e_mom: BundleForm,
}

/// (δĝ, δℳ̂): a symmetric covector-valued 1-form and a covector-valued top form on the body.
#[derive(Clone, Debug)]
pub struct ConvectiveTangent {
    pub dmetric: BundleForm,
    pub dmom: BundleForm,
}

/// (e_ĝ, e_ℳ̂): a symmetric vector-valued (n−1)-form and a vector-valued 0-form on the body.
#[derive(Clone, Debug)]
pub struct ConvectiveCotangent {
    pub e_metric: BundleForm,
    pub e_mom: BundleForm,
}

fn bundle_power(grid: &Grid, flow: &BundleForm, effort: &BundleForm) -> Result<f64> {
    integrate(grid, &wedge_dot(grid, flow, effort)?)
}

fn check_tangent(p: &Params, t: &MaterialTangent) -> Result<()> {
    let n = p.n();
    t.dphi.check(&p.body)?;
    t.dphi.expect(0, ValueKind::Vector, "δφ̃")?;
    t.dmom.check(&p.body)?;
    t.dmom.expect(n, ValueKind::Covector, "δℳ̃")
}

fn nudged(m: &MaterialState, t: &MaterialTangent, s: f64) -> MaterialState {
    let mut disp = m.disp.clone();
    disp.axpy(s, &t.dphi);
    let mut momentum = m.momentum.clone();
    momentum.axpy(s, &t.dmom);
    MaterialState { disp, momentum }
}

/// Components of a covector-valued 1-form as matrices δĝ[i][a].
fn one_form_from_mats(grid: &Grid, mats: &[Mat]) -> BundleForm {
    let n = grid.n();
    let mut out = BundleForm::zeros(grid, 1, ValueKind::Covector);
    for (node, m) in mats.iter().enumerate() {
        for i in 0..n {
            for a in 0..n {
                out.set(node, i, a, m.get(i, a));
            }
        }
    }
    out
}

impl MaterialCotangent {
    /// ⟨e_φ, δφ̃⟩ + ⟨e_ℳ̃, δℳ̃⟩ + ∮ δφ̃ ∧̇ e_∂.
    pub fn pair(&self, p: &Params, t: &MaterialTangent) -> Result<f64> {
        check_tangent(p, t)?;
        let interior = bundle_power(&p.body, &t.dphi, &self.e_phi)? + bundle_power(&p.body, &t.dmom, &self.e_mom)?;
        let boundary = if p.body.all_periodic() { 0.0 } else { self.e_bnd.pair(&crate::mesh::trace_vector(&p.body, &t.dphi)?, None)? };
        Ok(interior + boundary)
    }
}

impl SpatialCotangent {
    /// ⟨e_μ, δμ⟩ + ⟨e_ℳ, δℳ⟩ on the spatial grid.
    pub fn pair(&self, p: &Params, t: &SpatialTangent) -> Result<f64> {
        Ok(integrate(&p.space, &wedge(&p.space, &self.e_mass, &t.dmass)?)? + bundle_power(&p.space, &t.dmom, &self.e_mom)?)
    }
}

impl ConvectiveCotangent {
    /// ⟨e_ĝ, δĝ⟩ + ⟨e_ℳ̂, δℳ̂⟩ on the body.
    pub fn pair(&self, p: &Params, t: &ConvectiveTangent) -> Result<f64> {
        Ok(bundle_power(&p.body, &t.dmetric, &self.e_metric)? + bundle_power(&p.body, &t.dmom, &self.e_mom)?)
    }
}

/// ˢΦ_*: δμ = −ℒ_δφ μ, δℳ = −d_∇(ι_δφ ℳ) + φ_*(δℳ̃) with δφ = δφ̃∘φ⁻¹.
pub fn spatial_pushforward(m: &MaterialState, p: &Params, t: &MaterialTangent) -> Result<SpatialTangent> {
    check_tangent(p, t)?;
    let n = p.n();
    let s = to_spatial(m, p)?;
    let g = p.ambient.field(&p.space)?;
    let f = deformation_gradient(&p.body, &m.disp)?;
    let pre = invert_map(&p.body, &m.disp, &p.space)?;
    let dphi_c: Vec<Vec<f64>> = (0..n).map(|i| t.dphi.component(i, 0)).collect();
    let dmom_c: Vec<Vec<f64>> = (0..n).map(|i| (0..p.body.len()).map(|k| t.dmom.get(k, i, 0) / f[k].det()).collect()).collect();
    let mut dphi = BundleForm::zeros(&p.space, 0, ValueKind::Vector);
    let mut dmom = BundleForm::zeros(&p.space, n, ValueKind::Covector);
    for (node, x) in pre.iter().enumerate() {
        for i in 0..n {
            dphi.set(node, i, 0, interpolate(&p.body, &dphi_c[i], x));
            dmom.set(node, i, 0, interpolate(&p.body, &dmom_c[i], x));
        }
    }
    let dmass = lie_scalar(&p.space, &dphi, &s.mass.as_form(&p.space))?.scaled(-1.0);
    dmom.axpy(-1.0, &exterior_covariant_d(&p.space, &interior_bundle(&p.space, &dphi, &s.momentum)?, &g)?);
    Ok(SpatialTangent { dmass, dmom })
}

/// ˢΦ*: e_φ = φ*(μ ⊗ (de_μ + ∇e_ℳ ∧̇ v♭)), e_ℳ̃ = e_ℳ∘φ, e_∂ = −φ*(e_μ μ + ι_{e_ℳ}ℳ)|∂𝓑.
pub fn spatial_pullback(m: &MaterialState, p: &Params, e: &SpatialCotangent) -> Result<MaterialCotangent> {
    let n = p.n();
    e.e_mass.check(&p.space)?;
    if e.e_mass.degree() != 0 {
        return Err(PhcmError::Degree("e_μ must be a 0-form".into()));
    }
    e.e_mom.check(&p.space)?;
    e.e_mom.expect(0, ValueKind::Vector, "e_ℳ")?;
    let s = to_spatial(m, p)?;
    let g = p.ambient.field(&p.space)?;
    let rho = s.mass.density();
    let grad_mu: Vec<Vec<f64>> = (0..n).map(|a| p.space.diff(e.e_mass.data(), a)).collect();
    let grad_em = covariant_gradient(&p.space, &e.e_mom, &g)?;
    // spatial integrands: q_a = ρ ∂_a e_μ + m_i ∇_a e_ℳ^i, and the boundary density ρ e_μ + m_i e_ℳ^i
    let mut q: Vec<Vec<f64>> = vec![vec![0.0; p.space.len()]; n];
    let mut flux = vec![0.0; p.space.len()];
    for node in 0..p.space.len() {
        for a in 0..n {
            q[a][node] = rho[node] * grad_mu[a][node] + (0..n).map(|i| s.momentum.get(node, i, 0) * grad_em.get(node, i, a)).sum::<f64>();
        }
        flux[node] = rho[node] * e.e_mass.get(node, 0) + (0..n).map(|i| s.momentum.get(node, i, 0) * e.e_mom.get(node, i, 0)).sum::<f64>();
    }
    let em_c: Vec<Vec<f64>> = (0..n).map(|i| e.e_mom.component(i, 0)).collect();
    let f = deformation_gradient(&p.body, &m.disp)?;
    let mut e_phi = BundleForm::zeros(&p.body, n, ValueKind::Covector);
    let mut e_mom = BundleForm::zeros(&p.body, 0, ValueKind::Vector);
    let mut bnd = BundleForm::zeros(&p.body, n - 1, ValueKind::Covector);
    for node in 0..p.body.len() {
        let x = position(&p.body, &m.disp, node);
        let det = f[node].det();
        for a in 0..n {
            e_phi.set(node, a, 0, det * interpolate(&p.space, &q[a], &x));
            e_mom.set(node, a, 0, interpolate(&p.space, &em_c[a], &x));
        }
        // Piola pullback of −s·δ^a_j: flux[j][A] = −det F (F⁻¹)^A_j s
        let sv = interpolate(&p.space, &flux, &x);
        let fi = f[node].inv()?;
        bnd.set_flux(node, &Mat::from_fn(n, |j, aa| -det * fi.get(aa, j) * sv));
    }
    let e_bnd = if p.body.all_periodic() { BoundaryField::zeros(&p.body, n) } else { trace_normal(&p.body, &bnd)? };
    Ok(MaterialCotangent { e_phi, e_mom, e_bnd })
}

/// ᶜΦ_*: δĝ = ℒ_δφ̂ ĝ, δℳ̂ = μ̂ ⊗ (∇̂δφ̂ ∧̇ v̂♭) + ᵛφ*(δℳ̃) with δφ̂ = F⁻¹δφ̃.
pub fn convective_pushforward(m: &MaterialState, p: &Params, t: &MaterialTangent) -> Result<ConvectiveTangent> {
    check_tangent(p, t)?;
    let n = p.n();
    let c = to_convective(m, p)?;
    let f = deformation_gradient(&p.body, &m.disp)?;
    let mut dphi_hat = BundleForm::zeros(&p.body, 0, ValueKind::Vector);
    for node in 0..p.body.len() {
        dphi_hat.set_vec(node, &f[node].inv()?.mulv(&t.dphi.vec_at(node))[..n]);
    }
    let dmetric = one_form_from_mats(&p.body, &lie_metric_direct(&p.body, &dphi_hat, &c.metric)?);
    let grad = covariant_gradient(&p.body, &dphi_hat, &c.metric)?;
    let mut dmom = BundleForm::zeros(&p.body, n, ValueKind::Covector);
    for node in 0..p.body.len() {
        let pulled = f[node].transpose().mulv(&t.dmom.vec_at(node));
        for a in 0..n {
            let transport: f64 = (0..n).map(|j| c.momentum.get(node, j, 0) * grad.get(node, j, a)).sum();
            dmom.set(node, a, 0, transport + pulled[a]);
        }
    }
    Ok(ConvectiveTangent { dmetric, dmom })
}

/// ᶜΦ*: with ℰ = 2e_ĝ♭ + ι_{e_ℳ̂}ℳ̂, e_φ = −ᵛφ_*(d̂_∇ℰ), e_ℳ̃ = ᵛφ_*(e_ℳ̂), e_∂ = ᵛφ_*(ℰ)|∂𝓑.
pub fn convective_pullback(m: &MaterialState, p: &Params, e: &ConvectiveCotangent) -> Result<MaterialCotangent> {
    let n = p.n();
    e.e_metric.check(&p.body)?;
    e.e_metric.expect(n - 1, ValueKind::Vector, "e_ĝ")?;
    e.e_mom.check(&p.body)?;
    e.e_mom.expect(0, ValueKind::Vector, "e_ℳ̂")?;
    let c = to_convective(m, p)?;
    let f = deformation_gradient(&p.body, &m.disp)?;
    let mut big_e = interior_bundle(&p.body, &e.e_mom, &c.momentum)?;
    for node in 0..p.body.len() {
        let lowered = c.metric.g(node).clone() * e.e_metric.flux_at(node) * 2.0;
        big_e.set_flux(node, &(big_e.flux_at(node) + lowered));
    }
    let div = exterior_covariant_d(&p.body, &big_e, &c.metric)?;
    let mut e_phi = BundleForm::zeros(&p.body, n, ValueKind::Covector);
    let mut e_mom = BundleForm::zeros(&p.body, 0, ValueKind::Vector);
    let mut pushed = BundleForm::zeros(&p.body, n - 1, ValueKind::Covector);
    for node in 0..p.body.len() {
        let fit = f[node].transpose().inv()?;
        let d = fit.mulv(&div.vec_at(node));
        for a in 0..n {
            e_phi.set(node, a, 0, -d[a]);
        }
        e_mom.set_vec(node, &f[node].mulv(&e.e_mom.vec_at(node))[..n]);
        pushed.set_flux(node, &(fit * big_e.flux_at(node)));
    }
    let e_bnd = if p.body.all_periodic() { BoundaryField::zeros(&p.body, n) } else { trace_normal(&p.body, &pushed)? };
    Ok(MaterialCotangent { e_phi, e_mom, e_bnd })
}

/// δ(μ, ℳ) by central differences of [`to_spatial`].
pub fn spatial_tangent_fd(m: &MaterialState, p: &Params, t: &MaterialTangent, step: f64) -> Result<SpatialTangent> {
    check_tangent(p, t)?;
    let plus = to_spatial(&nudged(m, t, step), p)?;
    let minus = to_spatial(&nudged(m, t, -step), p)?;
    let dmass: Vec<f64> = plus.mass.density().iter().zip(minus.mass.density()).map(|(a, b)| (a - b) / (2.0 * step)).collect();
    let mut dmom = plus.momentum.clone();
    dmom.axpy(-1.0, &minus.momentum);
    Ok(SpatialTangent { dmass: ScalarForm::top(&p.space, dmass)?, dmom: dmom.scaled(0.5 / step) })
}

/// δ(ĝ, ℳ̂) by central differences of [`to_convective`].
pub fn convective_tangent_fd(m: &MaterialState, p: &Params, t: &MaterialTangent, step: f64) -> Result<ConvectiveTangent> {
    check_tangent(p, t)?;
    let plus = to_convective(&nudged(m, t, step), p)?;
    let minus = to_convective(&nudged(m, t, -step), p)?;
    let mats: Vec<Mat> = plus.metric.values().iter().zip(minus.metric.values()).map(|(a, b)| (a.clone() - b.clone()) * (0.5 / step)).collect();
    let mut dmom = plus.momentum.clone();
    dmom.axpy(-1.0, &minus.momentum);
    Ok(ConvectiveTangent { dmetric: one_form_from_mats(&p.body, &mats), dmom: dmom.scaled(0.5 / step) })
}

/// Outcome of ⟨e, Φ_* f⟩ = ⟨Φ* e, f⟩.
#[derive(Clone, Copy, Debug)]
pub struct Duality {
    /// ⟨e, Φ_* f⟩ with the tangent generated by central differences of the state map.
    pub reduced: f64,
    /// ⟨Φ* e, f⟩ including the boundary term.
    pub material: f64,
}

impl Duality {
    pub fn residual(&self) -> f64 {
        (self.reduced - self.material).abs()
    }
    /// Residual relative to the larger of the two pairings.
    pub fn relative(&self) -> f64 {
        self.residual() / self.reduced.abs().max(self.material.abs()).max(f64::MIN_POSITIVE)
    }
}

pub fn spatial_duality(m: &MaterialState, p: &Params, t: &MaterialTangent, e: &SpatialCotangent) -> Result<Duality> {
    let reduced = e.pair(p, &spatial_tangent_fd(m, p, t, FD_STEP)?)?;
    let material = spatial_pullback(m, p, e)?.pair(p, t)?;
    Ok(Duality { reduced, material })
}

pub fn convective_duality(m: &MaterialState, p: &Params, t: &MaterialTangent, e: &ConvectiveCotangent) -> Result<Duality> {
    let reduced = e.pair(p, &convective_tangent_fd(m, p, t, FD_STEP)?)?;
    let material = convective_pullback(m, p, e)?.pair(p, t)?;
    Ok(Duality { reduced, material })
}

/// Symmetrize the value/flux matrix of a vector-valued (n−1)-form at every node.
pub fn symmetric_flux(grid: &Grid, mut e: BundleForm) -> BundleForm {
    for node in 0..grid.len() {
        let s = e.flux_at(node).sym();
        e.set_flux(node, &s);
    }
    e
}
