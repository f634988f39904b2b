//! Closures for the stress port: hyperelastic storage, equations of state, Newtonian
//! viscosity, and the two incompressibility closures.

use crate::error::{PhcmError, Result};
use crate::fiber::{project_vol_dev, rotational_invariants, strain_log, Mat, MetricFiber, MixedTensor};
use crate::kinetic::Rep;
use crate::mesh::{integrate, wedge, BundleForm, Grid, MassForm, MetricField, ScalarForm, ValueKind};
use crate::net::{get_bundle, get_mass, get_metric, get_scalar, BlockAudit, DiracBlock, Network, OutputSpec, PortKind, PortSpec, PortValue, Ports, Role, TolClass, Wire};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Step of the central differences used for invariant-based stresses.
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HyperelasticModel {
    /// ψ = ½κ ζ_vol² + θ tr(ζ_dev²) on the logarithmic strain.
    HenckyFinite { kappa: f64, theta: f64 },
    /// ψ = ½κ (tr E)² + θ tr(E_dev²) on E = ½(G⁻¹ĝ − I).
    StvkInfinitesimal { kappa: f64, theta: f64 },
    /// ψ = c₁I₁ + c₂I₂ + c₃I₃ of ζ = ½(G⁻¹ĝ − I).
    MooneyRivlin { c1: f64, c2: f64, c3: f64 },
    NeoHookean { c1: f64, c3: f64 },
}

impl HyperelasticModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PhcmError::Constitutive(m.into()));
        match *self {
            HyperelasticModel::HenckyFinite { kappa, theta } | HyperelasticModel::StvkInfinitesimal { kappa, theta } => {
                if !(kappa > 0.0 && theta > 0.0) {
                    return bad("bulk and shear moduli must be positive");
                }
            }
            HyperelasticModel::MooneyRivlin { c1, c2, c3 } => {
                if ![c1, c2, c3].iter().all(|c| c.is_finite()) {
                    return bad("invariant coefficients must be finite");
                }
            }
            HyperelasticModel::NeoHookean { c1, c3 } => {
                if !(c1.is_finite() && c3.is_finite()) {
                    return bad("invariant coefficients must be finite");
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            HyperelasticModel::HenckyFinite { .. } => "hencky-finite",
            HyperelasticModel::StvkInfinitesimal { .. } => "stvk-infinitesimal",
            HyperelasticModel::MooneyRivlin { .. } => "mooney-rivlin",
            HyperelasticModel::NeoHookean { .. } => "neo-hookean",
        }
    }

    /// Strain measure: ½ ln(G⁻¹ĝ) for Hencky, ½(G⁻¹ĝ − I) otherwise.
    pub fn strain(&self, g_hat: &Mat, big_g: &Mat) -> Result<Mat> {
        let gh = MetricFiber::from_mat(*g_hat)?;
        let gg = MetricFiber::from_mat(*big_g)?;
        Ok(match self {
            HyperelasticModel::HenckyFinite { .. } => strain_log(&gg, &gh)?.0,
            _ => {
                let n = g_hat.n();
                (gg.inverse() * *g_hat - Mat::identity(n)) * 0.5
            }
        })
    }

    /// Stored energy per unit mass.
    pub fn energy_density(&self, g_hat: &Mat, big_g: &Mat) -> Result<f64> {
        let z = self.strain(g_hat, big_g)?;
        Ok(match *self {
            HyperelasticModel::HenckyFinite { kappa, theta } | HyperelasticModel::StvkInfinitesimal { kappa, theta } => {
                let (vol, dev) = project_vol_dev(&MixedTensor(z));
                0.5 * kappa * vol * vol + theta * (dev.0 * dev.0).trace()
            }
            HyperelasticModel::MooneyRivlin { c1, c2, c3 } => {
                let (i1, i2, i3) = rotational_invariants(&MixedTensor(z));
                c1 * i1 + c2 * i2 + c3 * i3
            }
            HyperelasticModel::NeoHookean { c1, c3 } => {
                let (i1, _, i3) = rotational_invariants(&MixedTensor(z));
                c1 * i1 + c3 * i3
            }
        })
    }

    /// Intensive stress τ̂ (mixed tensor) at the metric ĝ.
    pub fn stress(&self, g_hat: &Mat, big_g: &Mat) -> Result<Mat> {
        let n = g_hat.n();
        match *self {
            HyperelasticModel::HenckyFinite { kappa, theta } => {
                let (vol, dev) = project_vol_dev(&MixedTensor(self.strain(g_hat, big_g)?));
                Ok(Mat::identity(n) * (kappa * vol) + dev.0 * (2.0 * theta))
            }
            HyperelasticModel::StvkInfinitesimal { kappa, theta } => {
                let e = self.strain(g_hat, big_g)?;
                let (vol, dev) = project_vol_dev(&MixedTensor(e));
                let s = Mat::identity(n) * (kappa * vol) + dev.0 * (2.0 * theta);
                let c = MetricFiber::from_mat(*big_g)?.inverse() * *g_hat;
                Ok(c * s)
            }
            _ => {
                // τ = 2 (∂ψ/∂ĝ) ĝ with the gradient from central differences
                MetricFiber::from_mat(*g_hat)?;
                let mut s = Mat::zeros(n);
                for i in 0..n {
                    for j in i..n {
                        let mut dg = Mat::zeros(n);
                        dg.set(i, j, 1.0);
                        dg.set(j, i, 1.0);
                        let plus = self.energy_density(&(*g_hat + dg * FD_STEP), big_g)?;
                        let minus = self.energy_density(&(*g_hat - dg * FD_STEP), big_g)?;
                        let d = (plus - minus) / (2.0 * FD_STEP);
                        // d = Σ S^{kl} dg_kl counts an off-diagonal entry twice
                        let v = if i == j { d } else { 0.5 * d };
                        s.set(i, j, v);
                        s.set(j, i, v);
                    }
                }
                Ok(s * *g_hat * 2.0)
            }
        }
    }
}

/// Quadratic volumetric penalty f(ζ_vol) = ½k ζ_vol².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub k: f64,
}

impl Penalty {
    pub fn energy(&self, zeta_vol: f64) -> f64 {
        0.5 * self.k * zeta_vol * zeta_vol
    }

    pub fn stress(&self, zeta_vol: f64) -> f64 {
        self.k * zeta_vol
    }
}

/// How the volume constraint is closed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum IncompressibilityClosure {
    /// Discrete pressure projection; spatial fluids on periodic Euclidean grids.
    ExactMultiplier,
    Penalty { k: f64 },
}

impl IncompressibilityClosure {
    /// τ_vol of the penalty closure. The exact multiplier has no pointwise law.
    pub fn tau_vol(&self, zeta_vol: f64) -> Result<f64> {
        match self {
            IncompressibilityClosure::Penalty { k } => Ok(Penalty { k: *k }.stress(zeta_vol)),
            IncompressibilityClosure::ExactMultiplier => Err(PhcmError::Constitutive("the exact multiplier is found by projection".into())),
        }
    }
}

/// A hyperelastic solid with an optional volumetric penalty on ζ_vol = ½ ln det(G⁻¹ĝ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solid {
    pub model: HyperelasticModel,
    #[serde(default)]
    pub penalty: Option<Penalty>,
}

impl Solid {
    pub fn new(model: HyperelasticModel) -> Self {
        Solid { model, penalty: None }
    }

    fn vol_log(g_hat: &Mat, big_g: &Mat) -> f64 {
        0.5 * (g_hat.det() / big_g.det()).ln()
    }

    pub fn energy_density(&self, g_hat: &Mat, big_g: &Mat) -> Result<f64> {
        let mut e = self.model.energy_density(g_hat, big_g)?;
        if let Some(p) = self.penalty {
            e += p.energy(Self::vol_log(g_hat, big_g));
        }
        Ok(e)
    }

    pub fn stress(&self, g_hat: &Mat, big_g: &Mat) -> Result<Mat> {
        let mut t = self.model.stress(g_hat, big_g)?;
        if let Some(p) = self.penalty {
            t = t + Mat::identity(g_hat.n()) * p.stress(Self::vol_log(g_hat, big_g));
        }
        Ok(t)
    }
}

/// Stress field, stored energy and its pieces over a grid.
#[derive(Clone, Debug)]
pub struct HyperelasticEval {
    pub tau: Vec<Mat>,
    /// Ψ = ∫ ψ μ̂.
    pub energy: f64,
    /// Extensive volumetric stress ρ τ_vol as a top form.
    pub e_vol: ScalarForm,
    /// Extensive deviatoric stress ⋆_c τ_dev.
    pub e_dev: BundleForm,
}

/// Evaluate a solid on the metric field ĝ with reference metric G and mass μ̂.
pub fn evaluate_hyperelastic(solid: &Solid, grid: &Grid, g_hat: &MetricField, reference: &MetricField, mass: &MassForm) -> Result<HyperelasticEval> {
    let n = grid.n();
    let mut tau = Vec::with_capacity(grid.len());
    let mut dens = Vec::with_capacity(grid.len());
    let mut e_vol = ScalarForm::zeros(grid, n);
    let mut e_dev = BundleForm::zeros(grid, n - 1, ValueKind::Covector);
    for node in 0..grid.len() {
        let (gh, gg) = (g_hat.g(node), reference.g(node));
        let t = solid.stress(gh, gg)?;
        let rho = mass.density()[node];
        dens.push(rho * solid.energy_density(gh, gg)?);
        let tv = t.trace() / n as f64;
        let dev = t - Mat::identity(n) * tv;
        e_vol.set(node, 0, rho * tv);
        e_dev.set_flux(node, &(*gh * dev * *g_hat.ginv(node) * rho));
        tau.push(t);
    }
    Ok(HyperelasticEval { tau, energy: grid.quadrature(&dens), e_vol, e_dev })
}

/// Strain state carried alongside the metric: ζ_vol integrated in time, ζ_dev recomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct StrainState {
    pub vol: Vec<f64>,
    pub dev: Vec<Mat>,
}

impl StrainState {
    pub fn from_metric(model: &HyperelasticModel, g_hat: &MetricField, reference: &MetricField) -> Result<Self> {
        let mut vol = Vec::with_capacity(g_hat.len());
        let mut dev = Vec::with_capacity(g_hat.len());
        for node in 0..g_hat.len() {
            let (v, d) = project_vol_dev(&MixedTensor(model.strain(g_hat.g(node), reference.g(node))?));
            vol.push(v);
            dev.push(d.0);
        }
        Ok(StrainState { vol, dev })
    }
}

/// Advance the strain state to the metric `g_new` reached after `dt`. The volumetric part
/// integrates ε_vol; the deviatoric part is the remainder of the strain of `g_new` (Hencky).
/// Other models recompute both parts from `g_new`.
pub fn strain_update(model: &HyperelasticModel, s: &StrainState, eps_vol: &[f64], g_new: &MetricField, reference: &MetricField, dt: f64) -> Result<StrainState> {
    let fresh = StrainState::from_metric(model, g_new, reference)?;
    match model {
        HyperelasticModel::HenckyFinite { .. } => {
            if eps_vol.len() != s.vol.len() {
                return Err(PhcmError::Dimension { expected: s.vol.len(), got: eps_vol.len() });
            }
            Ok(StrainState { vol: s.vol.iter().zip(eps_vol).map(|(z, e)| z + dt * e).collect(), dev: fresh.dev })
        }
        _ => Ok(fresh),
    }
}

/// Specific internal energy 𝒰(ρ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Eos {
    /// 𝒰 = c ln ρ, so p = cρ.
    Log { c: f64 },
    /// 𝒰 = A ρ^{γ−1}/(γ−1), so p = Aρ^γ.
    Isentropic { a: f64, gamma: f64 },
    /// Piecewise-linear 𝒰 through (ρ, 𝒰) knots with increasing ρ.
    Tabulated { rho: Vec<f64>, u: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EosValue {
    pub u: f64,
    pub du: f64,
    /// p = ρ² 𝒰′(ρ).
    pub p: f64,
}

impl Eos {
    /// Two-column CSV (ρ, 𝒰); a non-numeric first row is taken as a header.
    pub fn from_csv(path: &Path) -> Result<Eos> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_path(path)?;
        let (mut rho, mut u) = (Vec::new(), Vec::new());
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok());
            match (parse(0), parse(1)) {
                (Some(r), Some(v)) => {
                    rho.push(r);
                    u.push(v);
                }
                _ if k == 0 => continue,
                _ => return Err(PhcmError::Config { field: path.display().to_string(), msg: format!("row {} is not two numbers", k + 1) }),
            }
        }
        let eos = Eos::Tabulated { rho, u };
        eos.validate()?;
        Ok(eos)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Eos::Log { c } if !c.is_finite() => Err(PhcmError::Constitutive("EOS constant must be finite".into())),
            Eos::Isentropic { a, gamma } if !(a.is_finite() && *gamma > 1.0) => Err(PhcmError::Constitutive("isentropic law needs γ > 1".into())),
            Eos::Tabulated { rho, u } => {
                if rho.len() < 2 || rho.len() != u.len() {
                    return Err(PhcmError::Constitutive("EOS table needs at least two (ρ, 𝒰) rows".into()));
                }
                if rho.windows(2).any(|w| !(w[1] > w[0])) || rho[0] <= 0.0 {
                    return Err(PhcmError::Constitutive("EOS table densities must be positive and increasing".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, rho: f64) -> Result<EosValue> {
        if !(rho > 0.0) {
            return Err(PhcmError::Constitutive(format!("density {rho} is not positive")));
        }
        let (u, du) = match self {
            Eos::Log { c } => (c * rho.ln(), c / rho),
            Eos::Isentropic { a, gamma } => (a * rho.powf(gamma - 1.0) / (gamma - 1.0), a * rho.powf(gamma - 2.0)),
            Eos::Tabulated { rho: r, u } => {
                let last = r.len() - 1;
                if rho < r[0] || rho > r[last] {
                    return Err(PhcmError::Constitutive(format!("density {rho} outside EOS table [{}, {}]", r[0], r[last])));
                }
                let k = r.partition_point(|x| *x <= rho).clamp(1, last);
                let slope = (u[k] - u[k - 1]) / (r[k] - r[k - 1]);
                (u[k - 1] + slope * (rho - r[k - 1]), slope)
            }
        };
        Ok(EosValue { u, du, p: rho * rho * du })
    }
}

/// ζ_vol = −ln ρ̂ for a density relative to the reference.
pub fn vol_strain_from_density(rho: f64) -> f64 {
    -rho.ln()
}

pub fn density_from_vol_strain(zeta_vol: f64) -> f64 {
    (-zeta_vol).exp()
}

/// Newtonian viscous fluid with kinematic viscosities κ (bulk) and θ (shear).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Newtonian {
    pub kappa: f64,
    pub theta: f64,
    pub eos: Eos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonianPoint {
    pub tau: Mat,
    pub tau_vol: f64,
    pub pressure: f64,
    /// κ ε_vol² + 2θ ε_dev:ε_dev, per unit mass.
    pub dissipation: f64,
    /// −p ε_vol / ρ, the internal-energy rate per unit mass.
    pub internal_rate: f64,
}

impl Newtonian {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.theta >= 0.0) {
            return Err(PhcmError::Constitutive("viscosities must be nonnegative".into()));
        }
        self.eos.validate()
    }

    /// τ = (κ ε_vol − p/ρ) I + 2θ ε_dev for a rate of strain ε and density ρ.
    pub fn evaluate(&self, eps: &Mat, rho: f64) -> Result<NewtonianPoint> {
        let n = eps.n();
        let p = self.eos.eval(rho)?.p;
        let (ev, dev) = project_vol_dev(&MixedTensor(*eps));
        let tau_vol = self.kappa * ev - p / rho;
        let tau = Mat::identity(n) * tau_vol + dev.0 * (2.0 * self.theta);
        Ok(NewtonianPoint {
            tau,
            tau_vol,
            pressure: p,
            dissipation: self.kappa * ev * ev + 2.0 * self.theta * (dev.0 * dev.0).trace(),
            internal_rate: -p * ev / rho,
        })
    }
}

/// σ = ρτ.
pub fn cauchy(tau: &Mat, rho: f64) -> Mat {
    *tau * rho
}

/// p_m = −tr σ / n.
pub fn mechanical_pressure(sigma: &Mat) -> f64 {
    -sigma.trace() / sigma.n() as f64
}

/// Physical density ρ_m / √det g of a mass form.
pub fn physical_density(mass: &MassForm, metric: &MetricField, node: usize) -> f64 {
    mass.density()[node] / metric.sqrt_det(node)
}

/// Resistive Newtonian block. Inputs `eps_vol`, `eps_dev`, states `mass`, `metric`.
/// Outputs the extensive efforts `e_vol` = ρ_m τ_vol and `e_dev` = ⋆_c(2θ ε_dev).
pub struct NewtonianBlock {
    pub id: String,
    pub grid: Grid,
    pub model: Newtonian,
}

impl NewtonianBlock {
    pub fn new(id: &str, grid: &Grid, model: Newtonian) -> Self {
        NewtonianBlock { id: id.into(), grid: grid.clone(), model }
    }

    fn efforts(&self, inputs: &Ports) -> Result<NewtonianEfforts> {
        newtonian_efforts(
            &self.grid,
            &self.model,
            get_scalar(inputs, "eps_vol")?,
            get_bundle(inputs, "eps_dev")?,
            get_mass(inputs, "mass")?,
            get_metric(inputs, "metric")?,
        )
    }
}

/// Extensive efforts of a Newtonian fluid with the integrated dissipation and pressure work.
#[derive(Clone, Debug)]
pub struct NewtonianEfforts {
    pub e_vol: ScalarForm,
    pub e_dev: BundleForm,
    /// ∫ ρ (κ ε_vol² + 2θ ε_dev:ε_dev).
    pub dissipation: f64,
    /// ∫ −p ε_vol.
    pub internal: f64,
}

pub fn newtonian_efforts(g: &Grid, model: &Newtonian, ev: &ScalarForm, ed: &BundleForm, mass: &MassForm, m: &MetricField) -> Result<NewtonianEfforts> {
    let n = g.n();
    let mut e_vol = ScalarForm::zeros(g, n);
    let mut e_dev = BundleForm::zeros(g, n - 1, ValueKind::Covector);
    let mut diss = vec![0.0; g.len()];
    let mut pv = vec![0.0; g.len()];
    for node in 0..g.len() {
        let rho = physical_density(mass, m, node);
        let eps = Mat::identity(n) * (ev.get(node, 0) / n as f64) + ed.mixed_at(node);
        let pt = model.evaluate(&eps, rho)?;
        let rm = mass.density()[node];
        e_vol.set(node, 0, rm * pt.tau_vol);
        let dev = pt.tau - Mat::identity(n) * pt.tau_vol;
        e_dev.set_flux(node, &(*m.g(node) * dev * *m.ginv(node) * rm));
        diss[node] = rm * pt.dissipation;
        pv[node] = rm * pt.internal_rate;
    }
    Ok(NewtonianEfforts { e_vol, e_dev, dissipation: g.quadrature(&diss), internal: g.quadrature(&pv) })
}

impl DiracBlock for NewtonianBlock {
    fn id(&self) -> &str {
        &self.id
    }

    fn inputs(&self) -> Vec<PortSpec> {
        vec![
            PortSpec::new("eps_vol", PortKind::Scalar { degree: 0 }, Role::Flow),
            PortSpec::new("eps_dev", PortKind::Bundle { degree: 1, kind: ValueKind::Vector }, Role::Flow),
            PortSpec::new("mass", PortKind::Mass, Role::State),
            PortSpec::new("metric", PortKind::Metric, Role::State),
        ]
    }

    fn outputs(&self) -> Vec<OutputSpec> {
        let n = self.grid.n();
        let deps = ["eps_vol", "eps_dev", "mass", "metric"];
        vec![
            OutputSpec::new("e_vol", PortKind::Scalar { degree: n }, Role::Effort, &deps),
            OutputSpec::new("e_dev", PortKind::Bundle { degree: n - 1, kind: ValueKind::Covector }, Role::Effort, &deps),
        ]
    }

    fn output(&self, name: &str, inputs: &Ports) -> Result<PortValue> {
        let e = self.efforts(inputs)?;
        match name {
            "e_vol" => Ok(PortValue::Scalar(e.e_vol)),
            "e_dev" => Ok(PortValue::Bundle(e.e_dev)),
            _ => Err(PhcmError::Port(format!("{}: no output `{name}`", self.id))),
        }
    }

    fn audit(&self, inputs: &Ports, outputs: &Ports) -> Result<Vec<BlockAudit>> {
        let g = &self.grid;
        let NewtonianEfforts { dissipation: diss, internal, .. } = self.efforts(inputs)?;
        let p_vol = integrate(g, &wedge(g, get_scalar(inputs, "eps_vol")?, get_scalar(outputs, "e_vol")?)?)?;
        let p_dev = integrate(g, &crate::mesh::wedge_dot(g, get_bundle(inputs, "eps_dev")?, get_bundle(outputs, "e_dev")?)?)?;
        // stress power splits into dissipation and reversible pressure work
        let terms = [p_vol, p_dev, -diss, -internal];
        Ok(vec![
            BlockAudit::balance(&self.id, "viscous-power", TolClass::Resistive, &terms, 0.0),
            BlockAudit::dissipation(&self.id, "dissipation", diss, diss.abs().max(1.0)),
        ])
    }
}

/// The elastic network closed by a Newtonian block on the vol/dev ports.
pub fn fluid_network(rep: Rep, grid: &Grid, model: Newtonian, flux_port: bool) -> Result<(Network, Vec<String>)> {
    if rep == Rep::Material {
        return Err(PhcmError::Constitutive("viscous fluids are posed in the spatial or convective representation".into()));
    }
    let (base, externals) = crate::kinetic::elastic_network(rep, grid, flux_port)?;
    let mut blocks = base.into_blocks();
    blocks.push(Box::new(NewtonianBlock::new("viscous", grid, model)));
    let mut wires = crate::kinetic::elastic_wires()?;
    wires.extend([
        Wire::new("voldev.eps_vol", "viscous.eps_vol")?,
        Wire::new("voldev.eps_dev", "viscous.eps_dev")?,
        Wire::new("viscous.e_vol", "voldev.e_vol")?,
        Wire::new("viscous.e_dev", "voldev.e_dev")?,
    ]);
    let mut ext: Vec<String> = externals.into_iter().filter(|e| e != "voldev.e_vol" && e != "voldev.e_dev").collect();
    ext.extend(["viscous.mass", "viscous.metric"].map(String::from));
    let refs: Vec<&str> = ext.iter().map(|s| s.as_str()).collect();
    Ok((Network::compose(blocks, &wires, &refs)?, ext))
}

/// Result of the exact incompressibility projection.
#[derive(Clone, Debug)]
pub struct Projection {
    pub velocity: BundleForm,
    /// Multiplier φ; the velocity correction is −ρ⁻¹∇φ.
    pub multiplier: Vec<f64>,
    pub iterations: usize,
    /// ‖div v‖∞ after projection.
    pub div_residual: f64,
}

fn divergence(grid: &Grid, v: &BundleForm) -> Vec<f64> {
    let mut d = vec![0.0; grid.len()];
    for a in 0..grid.n() {
        for (x, y) in d.iter_mut().zip(grid.diff(&v.component(a, 0), a)) {
            *x += y;
        }
    }
    d
}

/// ‖div v‖∞ with the centered discrete divergence.
pub fn max_divergence(grid: &Grid, v: &BundleForm) -> f64 {
    divergence(grid, v).iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Remove the divergent part of `v` in the ρ-weighted norm: solve D ρ⁻¹ G φ = D v by
/// conjugate gradients and set v ← v − ρ⁻¹Gφ. Periodic Euclidean grids only.
pub fn project_divergence_free(grid: &Grid, v: &BundleForm, rho: &[f64], tol: f64) -> Result<Projection> {
    if !grid.all_periodic() {
        return Err(PhcmError::Constitutive("the exact projection needs a periodic grid".into()));
    }
    v.expect(0, ValueKind::Vector, "projected velocity")?;
    let n = grid.n();
    let len = grid.len();
    let apply = |phi: &[f64]| -> Vec<f64> {
        // B φ = −D(ρ⁻¹ G φ), positive semidefinite
        let mut out = vec![0.0; len];
        for a in 0..n {
            let g: Vec<f64> = grid.diff(phi, a).iter().zip(rho).map(|(d, r)| d / r).collect();
            for (o, x) in out.iter_mut().zip(grid.diff(&g, a)) {
                *o -= x;
            }
        }
        out
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b: Vec<f64> = divergence(grid, v).iter().map(|x| -x).collect();
    let mut phi = vec![0.0; len];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let max_iter = 20 * len + 100;
    let mut trace = Vec::new();
    let mut iters = 0;
    let inf = |r: &[f64]| r.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    while inf(&r) > tol {
        if iters >= max_iter {
            trace.truncate(20);
            return Err(PhcmError::Singular(format!("pressure projection did not converge in {iters} iterations; residual history head {trace:?}")));
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(PhcmError::Singular(format!("projection operator lost definiteness at iteration {iters} (pᵀAp = {pap:e})")));
        }
        let alpha = rr / pap;
        for k in 0..len {
            phi[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        for k in 0..len {
            p[k] = r[k] + rr_new / rr * p[k];
        }
        rr = rr_new;
        iters += 1;
        trace.push(inf(&r));
    }
    let mut out = v.clone();
    for a in 0..n {
        let g = grid.diff(&phi, a);
        for node in 0..len {
            out.add(node, a, 0, -g[node] / rho[node]);
        }
    }
    let div_residual = max_divergence(grid, &out);
    Ok(Projection { velocity: out, multiplier: phi, iterations: iters, div_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::exp_map;
    use crate::fiber::BilinearForm;
    use crate::net::evaluate_block;
    use crate::stress::{rate_of_strain, stress_extensive, symmetry_residual};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn models() -> Vec<HyperelasticModel> {
        vec![
            HyperelasticModel::HenckyFinite { kappa: 2.0, theta: 0.7 },
            HyperelasticModel::StvkInfinitesimal { kappa: 1.5, theta: 0.4 },
            HyperelasticModel::MooneyRivlin { c1: 0.3, c2: 0.2, c3: 0.1 },
            HyperelasticModel::NeoHookean { c1: 0.5, c3: 0.2 },
        ]
    }

    fn spd(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Mat {
        let a = Mat::from_fn(n, |_, _| rng.gen_range(-spread..spread));
        a * a.transpose() + Mat::identity(n)
    }

    /// ĝ(t) = G exp(tA)-style smooth SPD path and its time derivative.
    fn path(g0: &Mat, a: &Mat, t: f64) -> (Mat, Mat) {
        let n = g0.n();
        let s = (*a + a.transpose()) * 0.5;
        let e = s.sym_apply(|x| (t * x).exp());
        let de = s.sym_apply(|x| x * (t * x).exp());
        let l = Mat::from_fn(n, |i, j| if i == j { 1.0 } else { 0.1 * (i + j) as f64 });
        (l * *g0 * e * l.transpose() * 0.5 + l * e * *g0 * l.transpose() * 0.5, l * *g0 * de * l.transpose() * 0.5 + l * de * *g0 * l.transpose() * 0.5)
    }

    #[test]
    fn reference_state_is_energy_free() {
        let g = Mat::from_rows(&[&[1.3, 0.2, 0.0], &[0.2, 0.9, 0.1], &[0.0, 0.1, 1.1]]);
        for m in models() {
            assert!(m.energy_density(&g, &g).unwrap().abs() < 1e-14, "{}", m.name());
            assert!(m.strain(&g, &g).unwrap().max_abs() < 1e-13);
            let tau = m.stress(&g, &g).unwrap();
            match m {
                HyperelasticModel::HenckyFinite { .. } | HyperelasticModel::StvkInfinitesimal { .. } => assert!(tau.max_abs() < 1e-13),
                // invariant models with c₁ ≠ 0 carry the stress 2c₁·½ I at ĝ = G
                HyperelasticModel::MooneyRivlin { c1, .. } | HyperelasticModel::NeoHookean { c1, .. } => assert!((tau - Mat::identity(3) * c1).max_abs() < 1e-8),
            }
        }
    }

    #[test]
    fn hencky_pure_dilation() {
        let a: f64 = 0.13;
        let big = Mat::from_rows(&[&[1.2, 0.1, 0.0], &[0.1, 1.0, 0.0], &[0.0, 0.0, 0.8]]);
        let m = HyperelasticModel::HenckyFinite { kappa: 3.0, theta: 1.1 };
        let gh = big * (2.0 * a).exp();
        let z = m.strain(&gh, &big).unwrap();
        assert!((z.trace() - 3.0 * a).abs() < 1e-13);
        let tau = m.stress(&gh, &big).unwrap();
        assert!((tau.trace() / 3.0 - 3.0 * 3.0 * a).abs() < 1e-12);
        assert!((tau - Mat::identity(3) * (tau.trace() / 3.0)).max_abs() < 1e-12);
    }

    #[test]
    fn neo_hookean_energy_uses_strain_invariants() {
        let g = Mat::diag(&[1.4, 0.8, 1.1]);
        let m = HyperelasticModel::NeoHookean { c1: 0.7, c3: 0.3 };
        let z = [0.2, -0.1, 0.05];
        let expect = 0.7 * z.iter().sum::<f64>() + 0.3 * z.iter().product::<f64>();
        assert!((m.energy_density(&g, &Mat::identity(3)).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn non_spd_metric_is_rejected() {
        let bad = Mat::diag(&[1.0, -1.0]);
        for m in models() {
            assert!(m.stress(&bad, &Mat::identity(2)).is_err());
        }
    }

    #[test]
    fn stress_is_power_conjugate_along_metric_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in models() {
            for n in [2, 3] {
                let g0 = spd(&mut rng, n, 0.3);
                let big = spd(&mut rng, n, 0.2);
                let a = Mat::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
                let t = 0.3;
                let dt = 1e-5;
                let psi = |t: f64| m.energy_density(&path(&g0, &a, t).0, &big).unwrap();
                let fd = (psi(t + dt) - psi(t - dt)) / (2.0 * dt);
                let (g, gd) = path(&g0, &a, t);
                let eps = g.inv().unwrap() * gd * 0.5;
                let tau = m.stress(&g, &big).unwrap();
                let power = (eps * tau).trace();
                assert!((fd - power).abs() < 1e-6 * (1.0 + power.abs()), "{} n={n}: {fd} {power}", m.name());
            }
        }
    }

    #[test]
    fn stresses_are_metric_symmetric_and_pass_the_pairing_test() {
        let g = Grid::periodic(&[6, 5], &[1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gh = MetricField::new(&g, (0..g.len()).map(|_| spd(&mut rng, 2, 0.3)).collect()).unwrap();
        let reference = MetricField::euclidean(&g);
        let mass = MassForm::new(&g, (0..g.len()).map(|_| rng.gen_range(0.5..2.0)).collect()).unwrap();
        let alpha = ScalarForm::from_data(&g, 1, (0..g.len() * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let beta = ScalarForm::from_data(&g, 1, (0..g.len() * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        for m in models() {
            let ev = evaluate_hyperelastic(&Solid::new(m.clone()), &g, &gh, &reference, &mass).unwrap();
            let t = stress_extensive(&g, &ev.tau, &gh, &mass).unwrap();
            let tol = if matches!(m, HyperelasticModel::HenckyFinite { .. } | HyperelasticModel::StvkInfinitesimal { .. }) { 1e-12 } else { 1e-8 };
            assert!(symmetry_residual(&g, &t, &gh, &alpha, &beta).unwrap() < tol, "{}", m.name());
            // e_vol I + e_dev reassembles ⋆_c τ
            for node in 0..g.len() {
                let f = ev.e_dev.flux_at(node) + Mat::identity(2) * ev.e_vol.get(node, 0);
                assert!((f - t.flux_at(node)).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_of_strain_rate_is_volumetric_strain_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = HyperelasticModel::HenckyFinite { kappa: 1.0, theta: 1.0 };
        for _ in 0..10 {
            let g0 = spd(&mut rng, 3, 0.4);
            let a = Mat::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let big = Mat::identity(3);
            let t = 0.2;
            let dt = 1e-5;
            let z = |t: f64| m.strain(&path(&g0, &a, t).0, &big).unwrap().trace();
            let fd = (z(t + dt) - z(t - dt)) / (2.0 * dt);
            let (g, gd) = path(&g0, &a, t);
            let eps = g.inv().unwrap() * gd * 0.5;
            assert!((fd - eps.trace()).abs() < 1e-8);
        }
    }

    #[test]
    fn strain_update_examples() {
        let g = Grid::periodic(&[4], &[1.0]).unwrap();
        let reference = MetricField::euclidean(&g);
        let m = HyperelasticModel::HenckyFinite { kappa: 1.0, theta: 1.0 };
        let g0 = MetricField::new(&g, vec![Mat::diag(&[1.2]); 4]).unwrap();
        let s0 = StrainState::from_metric(&m, &g0, &reference).unwrap();
        assert_eq!(strain_update(&m, &s0, &[0.0; 4], &g0, &reference, 0.1).unwrap(), s0);
        // 1D: ε_vol = c gives ĝ(t) = e^{2ct}ĝ(0)
        let c = 0.4;
        let (dt, steps) = (0.01, 50);
        let mut s = s0.clone();
        for k in 1..=steps {
            let gk = MetricField::new(&g, vec![Mat::diag(&[1.2 * (2.0 * c * k as f64 * dt).exp()]); 4]).unwrap();
            s = strain_update(&m, &s, &[c; 4], &gk, &reference, dt).unwrap();
        }
        let t = steps as f64 * dt;
        let exact = 0.5 * (1.2 * (2.0 * c * t).exp()).ln();
        assert!((s.vol[0] - exact).abs() < 1e-12);
        assert!((s.vol[0] - s0.vol[0] - c * t).abs() < 1e-12);
    }

    #[test]
    fn eos_examples() {
        let log = Eos::Log { c: 2.5 };
        let v = log.eval(1.0).unwrap();
        assert_eq!((v.u, v.p), (0.0, 2.5));
        assert!((log.eval(3.0).unwrap().p - 7.5).abs() < 1e-12);
        assert_eq!(vol_strain_from_density(1.0), 0.0);
        assert_eq!(density_from_vol_strain(0.0), 1.0);
        assert!((density_from_vol_strain(vol_strain_from_density(1.7)) - 1.7).abs() < 1e-15);
        let ise = Eos::Isentropic { a: 1.3, gamma: 1.4 };
        for rho in [0.5, 1.0, 2.3] {
            let h = 1e-6;
            let du = (ise.eval(rho + h).unwrap().u - ise.eval(rho - h).unwrap().u) / (2.0 * h);
            let e = ise.eval(rho).unwrap();
            assert!((e.du - du).abs() < 1e-8);
            assert!((e.p - 1.3 * rho.powf(1.4)).abs() < 1e-12);
        }
        assert!(log.eval(0.0).is_err());
    }

    #[test]
    fn tabulated_eos_from_csv() {
        let dir = std::env::temp_dir().join(format!("phcm-eos-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("eos.csv");
        std::fs::write(&p, "rho,U\n0.5,-1.0\n1.0,0.0\n2.0,1.5\n").unwrap();
        let eos = Eos::from_csv(&p).unwrap();
        let v = eos.eval(1.5).unwrap();
        assert!((v.u - 0.75).abs() < 1e-15 && (v.du - 1.5).abs() < 1e-15 && (v.p - 1.5 * 1.5 * 1.5).abs() < 1e-14);
        assert!((eos.eval(2.0).unwrap().u - 1.5).abs() < 1e-15);
        assert!(matches!(eos.eval(2.5), Err(PhcmError::Constitutive(_))));
        std::fs::write(&p, "1.0,0.0\n0.5,1.0\n").unwrap();
        assert!(Eos::from_csv(&p).is_err());
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn newtonian_examples() {
        let f = Newtonian { kappa: 0.3, theta: 0.2, eos: Eos::Log { c: 1.5 } };
        let r = f.evaluate(&Mat::zeros(2), 2.0).unwrap();
        assert!((r.pressure - 3.0).abs() < 1e-14 && (r.tau_vol + 1.5).abs() < 1e-14);
        assert!((r.tau - Mat::identity(2) * -1.5).max_abs() < 1e-14);
        let shear = Mat::from_rows(&[&[0.0, 0.4], &[0.4, 0.0]]);
        let a = f.evaluate(&shear, 1.0).unwrap();
        let b = Newtonian { eos: Eos::Log { c: 9.0 }, ..f.clone() }.evaluate(&shear, 1.0).unwrap();
        assert!(((a.tau - Mat::identity(2) * a.tau_vol) - (b.tau - Mat::identity(2) * b.tau_vol)).max_abs() < 1e-15);
        assert!((a.dissipation - 2.0 * 0.2 * 2.0 * 0.16).abs() < 1e-14);
        assert!(f.evaluate(&shear, -1.0).is_err());
        assert!(Newtonian { kappa: -1.0, ..f }.validate().is_err());
    }

    proptest! {
        #[test]
        fn mechanical_pressure_identity(e in proptest::collection::vec(-1.0f64..1.0, 9), rho in 0.2f64..3.0, kappa in 0.0f64..2.0, theta in 0.0f64..2.0) {
            let eps = Mat::from_fn(3, |i, j| e[3 * i + j]).sym();
            let f = Newtonian { kappa, theta, eos: Eos::Isentropic { a: 1.0, gamma: 1.4 } };
            let r = f.evaluate(&eps, rho).unwrap();
            let pm = mechanical_pressure(&cauchy(&r.tau, rho));
            prop_assert!((pm - (r.pressure - rho * kappa * eps.trace())).abs() < 1e-12 * (1.0 + r.pressure.abs()));
            prop_assert!(r.dissipation >= 0.0);
        }

        #[test]
        fn penalty_is_a_convex_derivative(z in -1.0f64..1.0, k in 0.1f64..100.0) {
            let p = Penalty { k };
            prop_assert!((p.stress(z) - k * z).abs() < 1e-12 * k);
            prop_assert!(p.energy(z) >= 0.0);
            let c = IncompressibilityClosure::Penalty { k };
            prop_assert!((c.tau_vol(z).unwrap() - k * z).abs() < 1e-12 * k);
        }
    }

    #[test]
    fn penalty_at_minimum_is_stress_free() {
        assert_eq!(Penalty { k: 10.0 }.stress(0.0), 0.0);
        let s = Solid { model: HyperelasticModel::HenckyFinite { kappa: 1.0, theta: 1.0 }, penalty: Some(Penalty { k: 50.0 }) };
        let g = Mat::from_rows(&[&[1.0, 0.3], &[0.3, 1.09]]);
        let vol = 0.5 * g.det().ln();
        assert!((s.stress(&g, &Mat::identity(2)).unwrap().trace() / 2.0 - (vol + 50.0 * vol)).abs() < 1e-12);
    }

    #[test]
    fn projection_removes_divergence() {
        let g = Grid::periodic(&[24, 20], &[1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = BundleForm::from_data(&g, 0, ValueKind::Vector, (0..g.len() * 2).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let rho: Vec<f64> = g.sample(|x| 1.0 + 0.3 * (2.0 * PI * x[0]).sin());
        let p = project_divergence_free(&g, &v, &rho, 1e-12).unwrap();
        assert!(p.div_residual <= 1e-10, "{}", p.div_residual);
        // a second projection leaves the field alone
        let q = project_divergence_free(&g, &p.velocity, &rho, 1e-12).unwrap();
        assert!(q.velocity.minus(&p.velocity).max_abs() < 1e-10);
        assert!(project_divergence_free(&Grid::bounded(&[8], &[1.0]).unwrap(), &BundleForm::zeros(&Grid::bounded(&[8], &[1.0]).unwrap(), 0, ValueKind::Vector), &[1.0; 9], 1e-12).is_err());
    }

    #[test]
    fn newtonian_block_dissipates_and_balances() {
        let g = Grid::periodic(&[12, 12], &[1.0, 1.0]).unwrap();
        let m = MetricField::euclidean(&g);
        let v = BundleForm::vector_field(&g, |k| {
            let x = g.x(k);
            [(2.0 * PI * x[1]).sin(), 0.3 * (2.0 * PI * x[0]).cos() + 0.1 * (2.0 * PI * x[1]).sin(), 0.0]
        });
        let r = rate_of_strain(&g, &v, &m).unwrap();
        let mut p = Ports::new();
        p.insert("eps_vol".into(), PortValue::Scalar(r.eps_vol));
        p.insert("eps_dev".into(), PortValue::Bundle(r.eps_dev));
        p.insert("mass".into(), PortValue::Mass(MassForm::new(&g, g.sample(|x| 1.0 + 0.2 * x[0])).unwrap()));
        p.insert("metric".into(), PortValue::Metric(m));
        let blk = NewtonianBlock::new("visc", &g, Newtonian { kappa: 0.1, theta: 0.05, eos: Eos::Log { c: 1.0 } });
        let (_, audit) = evaluate_block(&blk, &p).unwrap();
        assert!(audit.flagged().is_empty(), "{audit:?}");
    }

    #[test]
    fn fluid_network_composes() {
        let g = Grid::periodic(&[8, 8], &[1.0, 1.0]).unwrap();
        let (_, ext) = fluid_network(Rep::Spatial, &g, Newtonian { kappa: 0.1, theta: 0.1, eos: Eos::Log { c: 1.0 } }, true).unwrap();
        assert!(ext.contains(&"viscous.mass".to_string()) && !ext.contains(&"voldev.e_vol".to_string()));
    }

    #[test]
    fn exp_map_paths_keep_hencky_consistent() {
        // ζ of exp_G(t·A) is linear in t, so Ψ is quadratic in t
        let big = MetricFiber::from_mat(Mat::diag(&[1.0, 2.0])).unwrap();
        let a = BilinearForm(Mat::from_rows(&[&[0.2, 0.1], &[0.1, -0.3]]));
        let m = HyperelasticModel::HenckyFinite { kappa: 1.0, theta: 0.5 };
        let psi = |t: f64| {
            let g = exp_map(&big, &BilinearForm(a.0 * t)).unwrap();
            m.energy_density(g.mat(), big.mat()).unwrap()
        };
        assert!((psi(2.0) - 4.0 * psi(1.0)).abs() < 1e-12);
    }
}
