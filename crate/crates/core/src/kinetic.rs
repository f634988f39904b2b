//! Kinetic energy, its variational derivatives, and the kinetic Dirac dynamics in the
//! material, spatial and convective representations.

use crate::error::{PhcmError, Result};
use crate::fiber::Mat;
use crate::mesh::{
    covariant_gradient, exterior_covariant_d, exterior_d, integrate, interior, interior_bundle, lie_covector_top, lie_covector_top_direct, lie_metric_direct,
    lie_top_direct, star_c_inv, trace_normal, trace_vector, wedge, wedge_dot, BoundaryField, BundleForm, Grid, MassForm, MetricField, ScalarForm, ValueKind,
};
use crate::net::{get_bundle, get_mass, get_metric, get_scalar, BlockAudit, DiracBlock, Network, OutputSpec, PortKind, PortSpec, PortValue, Ports, Role, TolClass, Wire};
use crate::state::{material_kinetic_energy, ConvectiveState, MaterialState, Params, SpatialState};
use crate::stress::{StokesDirac, SymAsym, VolDev};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rep {
    Material,
    Spatial,
    Convective,
}

impl Rep {
    pub fn name(self) -> &'static str {
        match self {
            Rep::Material => "material",
            Rep::Spatial => "spatial",
            Rep::Convective => "convective",
        }
    }
}

/// A state in one of the three representations.
#[derive(Clone, Debug)]
pub enum KinState {
    Material(MaterialState),
    Spatial(SpatialState),
    Convective(ConvectiveState),
}

impl KinState {
    pub fn rep(&self) -> Rep {
        match self {
            KinState::Material(_) => Rep::Material,
            KinState::Spatial(_) => Rep::Spatial,
            KinState::Convective(_) => Rep::Convective,
        }
    }

    pub fn momentum(&self) -> &BundleForm {
        match self {
            KinState::Material(s) => &s.momentum,
            KinState::Spatial(s) => &s.momentum,
            KinState::Convective(s) => &s.momentum,
        }
    }

    /// Grid on which the state lives.
    pub fn grid<'a>(&self, p: &'a Params) -> &'a Grid {
        match self {
            KinState::Spatial(_) => &p.space,
            _ => &p.body,
        }
    }
}

/// ∫ f ∧ e for scalar forms.
pub fn scalar_power(grid: &Grid, flow: &ScalarForm, effort: &ScalarForm) -> Result<f64> {
    integrate(grid, &wedge(grid, flow, effort)?)
}

fn bundle_power(grid: &Grid, flow: &BundleForm, effort: &BundleForm) -> Result<f64> {
    integrate(grid, &wedge_dot(grid, flow, effort)?)
}

/// ∫ ½ v ∧̇ ℳ with v = ⋆_c⁻¹ℳ.
pub fn kinetic_energy_form(grid: &Grid, metric: &MetricField, mass: &MassForm, momentum: &BundleForm) -> Result<f64> {
    let v = star_c_inv(grid, momentum, metric, mass)?;
    Ok(0.5 * bundle_power(grid, &v, momentum)?)
}

/// H_kin for a state in any representation.
#[derive(Clone, Copy, Debug)]
pub struct KineticHamiltonian {
    pub rep: Rep,
}

impl KineticHamiltonian {
    pub fn new(rep: Rep) -> Self {
        KineticHamiltonian { rep }
    }

    pub fn energy(&self, state: &KinState, p: &Params) -> Result<f64> {
        if state.rep() != self.rep {
            return Err(PhcmError::Kind(format!("{} Hamiltonian given a {} state", self.rep.name(), state.rep().name())));
        }
        kinetic_energy(state, p)
    }
}

pub fn kinetic_energy(state: &KinState, p: &Params) -> Result<f64> {
    match state {
        KinState::Material(m) => material_kinetic_energy(m, p),
        KinState::Spatial(s) => kinetic_energy_form(&p.space, &p.ambient.field(&p.space)?, &s.mass, &s.momentum),
        KinState::Convective(c) => kinetic_energy_form(&p.body, &c.metric, &p.mass, &c.momentum),
    }
}

/// Derivative of H_kin with respect to the non-momentum state variable.
#[derive(Clone, Debug)]
pub enum FirstDerivative {
    /// δH/δφ, covector-valued n-form.
    Config(BundleForm),
    /// δH/δμ, a function.
    Mass(ScalarForm),
    /// δĤ/δĝ, vector-valued (n−1)-form.
    Metric(BundleForm),
}

#[derive(Clone, Debug)]
pub struct VariationalDerivatives {
    pub first: FirstDerivative,
    /// δH/δℳ, the velocity.
    pub e_m: BundleForm,
    /// Boundary derivative; material representation only.
    pub boundary: Option<BoundaryField>,
}

/// −½ |v|²_g as a function.
pub fn spatial_mass_derivative(grid: &Grid, v: &BundleForm, metric: &MetricField) -> ScalarForm {
    let n = metric.dim();
    let data = (0..v.nodes())
        .map(|node| {
            let u = v.vec_at(node);
            let gu = metric.g(node).mulv(&u);
            -0.5 * (0..n).map(|i| u[i] * gu[i]).sum::<f64>()
        })
        .collect();
    ScalarForm::function(grid, data).expect("nodal layout")
}

/// −½ ι_v̂ μ̂ ⊗ v̂: flux components −½ ρ̂ v̂^I v̂^J.
pub fn convective_metric_derivative(grid: &Grid, v: &BundleForm, mass: &MassForm) -> BundleForm {
    let n = grid.n();
    let mut e = BundleForm::zeros(grid, n - 1, ValueKind::Vector);
    for node in 0..grid.len() {
        let u = v.vec_at(node);
        let rho = mass.density()[node];
        e.set_flux(node, &Mat::from_fn(n, |i, j| -0.5 * rho * u[i] * u[j]));
    }
    e
}

pub fn variational_derivatives(state: &KinState, p: &Params) -> Result<VariationalDerivatives> {
    let n = p.n();
    Ok(match state {
        KinState::Material(m) => VariationalDerivatives {
            first: FirstDerivative::Config(BundleForm::zeros(&p.body, n, ValueKind::Covector)),
            e_m: m.velocity(p)?,
            boundary: Some(BoundaryField::zeros(&p.body, n)),
        },
        KinState::Spatial(s) => {
            let metric = p.ambient.field(&p.space)?;
            let v = star_c_inv(&p.space, &s.momentum, &metric, &s.mass)?;
            VariationalDerivatives { first: FirstDerivative::Mass(spatial_mass_derivative(&p.space, &v, &metric)), e_m: v, boundary: None }
        }
        KinState::Convective(c) => {
            let v = c.velocity(p)?;
            VariationalDerivatives { first: FirstDerivative::Metric(convective_metric_derivative(&p.body, &v, &p.mass)), e_m: v, boundary: None }
        }
    })
}

/// State rates and outputs of a kinetic Dirac structure.
#[derive(Clone, Debug)]
pub struct KineticRates {
    pub first: FirstRate,
    pub momentum: BundleForm,
    /// f_d = δH/δℳ, handed to the stress subsystem.
    pub f_d: BundleForm,
    /// Momentum-flux boundary port (f_∂, e_∂); spatial representation only.
    pub boundary: Option<(BoundaryField, BoundaryField)>,
    /// Magnitude of the boundary quantity that must vanish.
    pub constraint: f64,
}

#[derive(Clone, Debug)]
pub enum FirstRate {
    /// ∂ₜφ, a vector field.
    Config(BundleForm),
    /// ∂ₜμ, a top form.
    Mass(ScalarForm),
    /// ∂ₜĝ as a covector-valued 1-form f_{IJ}.
    Metric(BundleForm),
}

/// f_{IJ} as per-node matrices.
pub fn metric_rate_matrices(f: &BundleForm) -> Vec<Mat> {
    (0..f.nodes()).map(|node| f.mixed_at(node)).collect()
}

/// Material canonical structure: ∂ₜφ = e_M, ∂ₜℳ̃ = −e_φ + e_d.
pub fn material_kinetic_apply(grid: &Grid, e_phi: &BundleForm, e_m: &BundleForm, e_d: &BundleForm) -> Result<KineticRates> {
    let n = grid.n();
    e_phi.expect(n, ValueKind::Covector, "δH/δφ")?;
    e_m.expect(0, ValueKind::Vector, "δH/δℳ")?;
    e_d.expect(n, ValueKind::Covector, "distributed force")?;
    let mut fm = e_d.clone();
    fm.axpy(-1.0, e_phi);
    Ok(KineticRates { first: FirstRate::Config(e_m.clone()), momentum: fm, f_d: e_m.clone(), boundary: None, constraint: 0.0 })
}

/// The momentum-flux (n−1)-form e_μ μ I + ι_{e_M}ℳ, whose normal trace is the boundary effort.
fn spatial_flux(grid: &Grid, mass: &MassForm, momentum: &BundleForm, e_mu: &ScalarForm, e_m: &BundleForm) -> Result<BundleForm> {
    let n = grid.n();
    let mut b = interior_bundle(grid, e_m, momentum)?;
    for node in 0..grid.len() {
        let s = e_mu.get(node, 0) * mass.density()[node];
        b.set_flux(node, &(b.flux_at(node) + Mat::identity(n) * s));
    }
    Ok(b)
}

/// Spatial structure: ∂ₜμ = −dι_{e_M}μ, ∂ₜℳ = −μ⊗de_μ − ℒ_{e_M}ℳ + e_d.
pub fn spatial_kinetic_apply(
    grid: &Grid,
    metric: &MetricField,
    mass: &MassForm,
    momentum: &BundleForm,
    e_mu: &ScalarForm,
    e_m: &BundleForm,
    e_d: &BundleForm,
) -> Result<KineticRates> {
    let n = grid.n();
    if e_mu.degree() != 0 {
        return Err(PhcmError::Degree("δH/δμ must be a function".into()));
    }
    e_m.expect(0, ValueKind::Vector, "δH/δℳ")?;
    e_d.expect(n, ValueKind::Covector, "distributed force")?;
    let mu = mass.as_form(grid);
    let f_mu = exterior_d(grid, &interior(grid, e_m, &mu)?)?.scaled(-1.0);
    let mut f_m = lie_covector_top(grid, e_m, momentum, metric)?.scaled(-1.0);
    let de = exterior_d(grid, e_mu)?;
    for node in 0..grid.len() {
        let rho = mass.density()[node];
        for i in 0..n {
            f_m.add(node, i, 0, -rho * de.get(node, i));
        }
    }
    f_m.axpy(1.0, e_d);
    let flux = spatial_flux(grid, mass, momentum, e_mu, e_m)?;
    let f_b = trace_vector(grid, e_m)?;
    let e_b = trace_normal(grid, &flux)?.scaled(-1.0);
    let constraint = trace_normal(grid, &interior_bundle(grid, e_m, momentum)?)?.max_abs();
    Ok(KineticRates { first: FirstRate::Mass(f_mu), momentum: f_m, f_d: e_m.clone(), boundary: Some((f_b, e_b)), constraint })
}

/// 2 sym(ĝ∇u) as a covector-valued 1-form.
pub fn sym_lowered_gradient(grid: &Grid, u: &BundleForm, metric: &MetricField) -> Result<BundleForm> {
    let grad = covariant_gradient(grid, u, metric)?;
    let mut f = BundleForm::zeros(grid, 1, ValueKind::Covector);
    for node in 0..grid.len() {
        let low = *metric.g(node) * grad.mixed_at(node);
        f.set_mixed(node, &(low + low.transpose()));
    }
    Ok(f)
}

/// Lower the value index of a vector-valued form.
fn lower(grid: &Grid, e: &BundleForm, metric: &MetricField) -> BundleForm {
    let n = grid.n();
    let nb = e.nbasis();
    let mut out = BundleForm::zeros(grid, e.degree(), ValueKind::Covector);
    for node in 0..grid.len() {
        let g = metric.g(node);
        for b in 0..nb {
            for i in 0..n {
                out.set(node, i, b, (0..n).map(|k| g.get(i, k) * e.get(node, k, b)).sum());
            }
        }
    }
    out
}

/// Convective structure: ∂ₜĝ = 2 sym(ĝ∇e_M), ∂ₜℳ̂ = 2d_∇(ĝe_g) + ℒ_{e_M}ℳ̂ + e_d.
pub fn convective_kinetic_apply(grid: &Grid, metric: &MetricField, momentum: &BundleForm, e_g: &BundleForm, e_m: &BundleForm, e_d: &BundleForm) -> Result<KineticRates> {
    let n = grid.n();
    e_g.expect(n - 1, ValueKind::Vector, "δĤ/δĝ")?;
    e_m.expect(0, ValueKind::Vector, "δĤ/δℳ̂")?;
    e_d.expect(n, ValueKind::Covector, "distributed force")?;
    let f_g = sym_lowered_gradient(grid, e_m, metric)?;
    let ge = lower(grid, e_g, metric).scaled(2.0);
    let mut f_m = exterior_covariant_d(grid, &ge, metric)?.scaled(1.0);
    f_m.axpy(1.0, &lie_covector_top(grid, e_m, momentum, metric)?);
    f_m.axpy(1.0, e_d);
    let mut bflux = ge;
    bflux.axpy(1.0, &interior_bundle(grid, e_m, momentum)?);
    let constraint = trace_normal(grid, &bflux)?.max_abs();
    Ok(KineticRates { first: FirstRate::Metric(f_g), momentum: f_m, f_d: e_m.clone(), boundary: None, constraint })
}

/// Apply the representation's kinetic structure to a state and its efforts.
pub fn kinetic_dirac_apply(state: &KinState, d: &VariationalDerivatives, force: &BundleForm, p: &Params) -> Result<KineticRates> {
    match (state, &d.first) {
        (KinState::Material(_), FirstDerivative::Config(e)) => material_kinetic_apply(&p.body, e, &d.e_m, force),
        (KinState::Spatial(s), FirstDerivative::Mass(e)) => spatial_kinetic_apply(&p.space, &p.ambient.field(&p.space)?, &s.mass, &s.momentum, e, &d.e_m, force),
        (KinState::Convective(c), FirstDerivative::Metric(e)) => convective_kinetic_apply(&p.body, &c.metric, &c.momentum, e, &d.e_m, force),
        _ => Err(PhcmError::Kind(format!("efforts do not match the {} representation", state.rep().name()))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceForm {
    Advection,
    Conservation,
}

/// ∂ₜμ, ∂ₜℳ for the spatial balance laws written in either form.
pub fn spatial_balance_rhs(grid: &Grid, metric: &MetricField, s: &SpatialState, force: &BundleForm, form: BalanceForm) -> Result<(ScalarForm, BundleForm)> {
    let v = star_c_inv(grid, &s.momentum, metric, &s.mass)?;
    let mu = s.mass.as_form(grid);
    match form {
        BalanceForm::Advection => {
            let dmu = lie_top_direct(grid, &v, &mu)?.scaled(-1.0);
            let mut dm = lie_covector_top_direct(grid, &v, &s.momentum)?.scaled(-1.0);
            let half = spatial_mass_derivative(grid, &v, metric).scaled(-1.0);
            let d = exterior_d(grid, &half)?;
            for node in 0..grid.len() {
                for i in 0..grid.n() {
                    dm.add(node, i, 0, s.mass.density()[node] * d.get(node, i));
                }
            }
            dm.axpy(1.0, force);
            Ok((dmu, dm))
        }
        BalanceForm::Conservation => {
            let dmu = exterior_d(grid, &interior(grid, &v, &mu)?)?.scaled(-1.0);
            let mut dm = exterior_covariant_d(grid, &interior_bundle(grid, &v, &s.momentum)?, metric)?.scaled(-1.0);
            dm.axpy(1.0, force);
            Ok((dmu, dm))
        }
    }
}

/// ∂ₜĝ (per-node matrices) and ∂ₜℳ̂ for the convective balance laws in either form.
pub fn convective_balance_rhs(grid: &Grid, mass: &MassForm, c: &ConvectiveState, force: &BundleForm, form: BalanceForm) -> Result<(Vec<Mat>, BundleForm)> {
    let v = star_c_inv(grid, &c.momentum, &c.metric, mass)?;
    match form {
        BalanceForm::Advection => {
            let dg = lie_metric_direct(grid, &v, &c.metric)?;
            let mut dm = lie_covector_top_direct(grid, &v, &c.momentum)?;
            dm.axpy(-1.0, &exterior_covariant_d(grid, &interior_bundle(grid, &v, &c.momentum)?, &c.metric)?);
            dm.axpy(1.0, force);
            Ok((dg, dm))
        }
        BalanceForm::Conservation => {
            let dg = metric_rate_matrices(&sym_lowered_gradient(grid, &v, &c.metric)?);
            let half = spatial_mass_derivative(grid, &v, &c.metric).scaled(-1.0);
            let d = exterior_d(grid, &half)?;
            let mut dm = force.clone();
            for node in 0..grid.len() {
                for i in 0..grid.n() {
                    dm.add(node, i, 0, mass.density()[node] * d.get(node, i));
                }
            }
            Ok((dg, dm))
        }
    }
}

fn vector(degree: usize) -> PortKind {
    PortKind::Bundle { degree, kind: ValueKind::Vector }
}

fn covector(degree: usize) -> PortKind {
    PortKind::Bundle { degree, kind: ValueKind::Covector }
}

fn zero_or(grid: &Grid, inputs: &Ports, name: &str, degree: usize, kind: ValueKind) -> BundleForm {
    get_bundle(inputs, name).cloned().unwrap_or_else(|_| BundleForm::zeros(grid, degree, kind))
}

/// Material canonical block. Inputs `e_phi` (optional), `e_M`, `e_d`; outputs `f_phi`, `f_M`, `f_d`.
pub struct MaterialCanonical {
    pub id: String,
    pub grid: Grid,
}

impl MaterialCanonical {
    pub fn new(id: &str, grid: &Grid) -> Self {
        MaterialCanonical { id: id.into(), grid: grid.clone() }
    }

    fn rates(&self, inputs: &Ports) -> Result<KineticRates> {
        let n = self.grid.n();
        let e_phi = zero_or(&self.grid, inputs, "e_phi", n, ValueKind::Covector);
        let e_d = zero_or(&self.grid, inputs, "e_d", n, ValueKind::Covector);
        material_kinetic_apply(&self.grid, &e_phi, get_bundle(inputs, "e_M")?, &e_d)
    }
}

impl DiracBlock for MaterialCanonical {
    fn id(&self) -> &str {
        &self.id
    }

    fn inputs(&self) -> Vec<PortSpec> {
        let n = self.grid.n();
        vec![
            PortSpec::new("e_phi", covector(n), Role::Effort).optional(),
            PortSpec::new("e_M", vector(0), Role::Effort),
            PortSpec::new("e_d", covector(n), Role::Effort),
        ]
    }

    fn outputs(&self) -> Vec<OutputSpec> {
        let n = self.grid.n();
        vec![
            OutputSpec::new("f_phi", vector(0), Role::Flow, &["e_M"]),
            OutputSpec::new("f_M", covector(n), Role::Flow, &["e_phi", "e_d"]),
            OutputSpec::new("f_d", vector(0), Role::Flow, &["e_M"]),
        ]
    }

    fn output(&self, name: &str, inputs: &Ports) -> Result<PortValue> {
        let n = self.grid.n();
        match name {
            "f_phi" | "f_d" => Ok(PortValue::Bundle(get_bundle(inputs, "e_M")?.clone())),
            "f_M" => {
                let mut f = zero_or(&self.grid, inputs, "e_d", n, ValueKind::Covector);
                f.axpy(-1.0, &zero_or(&self.grid, inputs, "e_phi", n, ValueKind::Covector));
                Ok(PortValue::Bundle(f))
            }
            _ => Err(PhcmError::Port(format!("{}: no output `{name}`", self.id))),
        }
    }

    fn audit(&self, inputs: &Ports, _outputs: &Ports) -> Result<Vec<BlockAudit>> {
        let g = &self.grid;
        let r = self.rates(inputs)?;
        let FirstRate::Config(f_phi) = &r.first else { unreachable!() };
        let e_phi = zero_or(g, inputs, "e_phi", g.n(), ValueKind::Covector);
        let e_d = zero_or(g, inputs, "e_d", g.n(), ValueKind::Covector);
        let terms = [bundle_power(g, f_phi, &e_phi)?, bundle_power(g, get_bundle(inputs, "e_M")?, &r.momentum)?, -bundle_power(g, &r.f_d, &e_d)?];
        Ok(vec![BlockAudit::balance(&self.id, "kinetic-power", TolClass::Algebraic, &terms, 0.0)])
    }
}

/// Spatial kinetic block. Inputs `e_mu`, `e_M`, `e_d`, states `mass`, `momentum`, `metric`.
/// Outputs `f_mu`, `f_M`, `f_d`, and with the flux port enabled `f_b`, `e_b`.
pub struct SpatialKinetic {
    pub id: String,
    pub grid: Grid,
    pub flux_port: bool,
}

impl SpatialKinetic {
    pub fn new(id: &str, grid: &Grid, flux_port: bool) -> Self {
        SpatialKinetic { id: id.into(), grid: grid.clone(), flux_port }
    }

    fn rates(&self, inputs: &Ports) -> Result<KineticRates> {
        let n = self.grid.n();
        let e_d = zero_or(&self.grid, inputs, "e_d", n, ValueKind::Covector);
        spatial_kinetic_apply(
            &self.grid,
            get_metric(inputs, "metric")?,
            get_mass(inputs, "mass")?,
            get_bundle(inputs, "momentum")?,
            get_scalar(inputs, "e_mu")?,
            get_bundle(inputs, "e_M")?,
            &e_d,
        )
    }
}

impl DiracBlock for SpatialKinetic {
    fn id(&self) -> &str {
        &self.id
    }

    fn inputs(&self) -> Vec<PortSpec> {
        let n = self.grid.n();
        vec![
            PortSpec::new("e_mu", PortKind::Scalar { degree: 0 }, Role::Effort),
            PortSpec::new("e_M", vector(0), Role::Effort),
            PortSpec::new("e_d", covector(n), Role::Effort),
            PortSpec::new("mass", PortKind::Mass, Role::State),
            PortSpec::new("momentum", covector(n), Role::State),
            PortSpec::new("metric", PortKind::Metric, Role::State),
        ]
    }

    fn outputs(&self) -> Vec<OutputSpec> {
        let n = self.grid.n();
        let all = ["e_mu", "e_M", "e_d", "mass", "momentum", "metric"];
        let mut o = vec![
            OutputSpec::new("f_mu", PortKind::Scalar { degree: n }, Role::Flow, &["e_M", "mass"]),
            OutputSpec::new("f_M", covector(n), Role::Flow, &all),
            OutputSpec::new("f_d", vector(0), Role::Flow, &["e_M"]),
        ];
        if self.flux_port {
            o.push(OutputSpec::new("f_b", PortKind::Boundary, Role::Flow, &["e_M"]));
            o.push(OutputSpec::new("e_b", PortKind::Boundary, Role::Effort, &["e_mu", "e_M", "mass", "momentum"]));
        }
        o
    }

    fn output(&self, name: &str, inputs: &Ports) -> Result<PortValue> {
        match name {
            "f_d" => return Ok(PortValue::Bundle(get_bundle(inputs, "e_M")?.clone())),
            "f_b" if self.flux_port => return Ok(PortValue::Boundary(trace_vector(&self.grid, get_bundle(inputs, "e_M")?)?)),
            "f_mu" => {
                let mu = get_mass(inputs, "mass")?.as_form(&self.grid);
                let d = exterior_d(&self.grid, &interior(&self.grid, get_bundle(inputs, "e_M")?, &mu)?)?;
                return Ok(PortValue::Scalar(d.scaled(-1.0)));
            }
            "e_b" if self.flux_port => {
                let flux = spatial_flux(&self.grid, get_mass(inputs, "mass")?, get_bundle(inputs, "momentum")?, get_scalar(inputs, "e_mu")?, get_bundle(inputs, "e_M")?)?;
                return Ok(PortValue::Boundary(trace_normal(&self.grid, &flux)?.scaled(-1.0)));
            }
            "f_M" => {}
            _ => return Err(PhcmError::Port(format!("{}: no output `{name}`", self.id))),
        }
        Ok(PortValue::Bundle(self.rates(inputs)?.momentum))
    }

    fn audit(&self, inputs: &Ports, _outputs: &Ports) -> Result<Vec<BlockAudit>> {
        let g = &self.grid;
        let r = self.rates(inputs)?;
        let FirstRate::Mass(f_mu) = &r.first else { unreachable!() };
        let e_d = zero_or(g, inputs, "e_d", g.n(), ValueKind::Covector);
        let (f_b, e_b) = r.boundary.as_ref().expect("spatial boundary port");
        let terms = [
            scalar_power(g, f_mu, get_scalar(inputs, "e_mu")?)?,
            bundle_power(g, get_bundle(inputs, "e_M")?, &r.momentum)?,
            -bundle_power(g, &r.f_d, &e_d)?,
            -e_b.pair(f_b, None)?,
        ];
        let mut out = vec![BlockAudit::balance(&self.id, "kinetic-power", TolClass::Mesh, &terms, g.max_h())];
        if !self.flux_port {
            let scale = get_bundle(inputs, "momentum")?.max_abs() * get_bundle(inputs, "e_M")?.max_abs();
            out.push(BlockAudit::bound(&self.id, "boundary-momentum-flux", TolClass::Algebraic, r.constraint, scale.max(1.0), 0.0));
        }
        Ok(out)
    }
}

/// Convective kinetic block. Inputs `e_g`, `e_M`, `e_d`, states `metric`, `momentum`.
/// Outputs `f_g`, `f_M`, `f_d`.
pub struct ConvectiveKinetic {
    pub id: String,
    pub grid: Grid,
}

impl ConvectiveKinetic {
    pub fn new(id: &str, grid: &Grid) -> Self {
        ConvectiveKinetic { id: id.into(), grid: grid.clone() }
    }

    fn rates(&self, inputs: &Ports) -> Result<KineticRates> {
        let n = self.grid.n();
        let e_d = zero_or(&self.grid, inputs, "e_d", n, ValueKind::Covector);
        convective_kinetic_apply(&self.grid, get_metric(inputs, "metric")?, get_bundle(inputs, "momentum")?, get_bundle(inputs, "e_g")?, get_bundle(inputs, "e_M")?, &e_d)
    }
}

impl DiracBlock for ConvectiveKinetic {
    fn id(&self) -> &str {
        &self.id
    }

    fn inputs(&self) -> Vec<PortSpec> {
        let n = self.grid.n();
        vec![
            PortSpec::new("e_g", vector(n - 1), Role::Effort),
            PortSpec::new("e_M", vector(0), Role::Effort),
            PortSpec::new("e_d", covector(n), Role::Effort),
            PortSpec::new("metric", PortKind::Metric, Role::State),
            PortSpec::new("momentum", covector(n), Role::State),
        ]
    }

    fn outputs(&self) -> Vec<OutputSpec> {
        let n = self.grid.n();
        vec![
            OutputSpec::new("f_g", covector(1), Role::Flow, &["e_M", "metric"]),
            OutputSpec::new("f_M", covector(n), Role::Flow, &["e_g", "e_M", "e_d", "metric", "momentum"]),
            OutputSpec::new("f_d", vector(0), Role::Flow, &["e_M"]),
        ]
    }

    fn output(&self, name: &str, inputs: &Ports) -> Result<PortValue> {
        match name {
            "f_d" => Ok(PortValue::Bundle(get_bundle(inputs, "e_M")?.clone())),
            "f_g" => Ok(PortValue::Bundle(sym_lowered_gradient(&self.grid, get_bundle(inputs, "e_M")?, get_metric(inputs, "metric")?)?)),
            "f_M" => Ok(PortValue::Bundle(self.rates(inputs)?.momentum)),
            _ => Err(PhcmError::Port(format!("{}: no output `{name}`", self.id))),
        }
    }

    fn audit(&self, inputs: &Ports, _outputs: &Ports) -> Result<Vec<BlockAudit>> {
        let g = &self.grid;
        let r = self.rates(inputs)?;
        let FirstRate::Metric(f_g) = &r.first else { unreachable!() };
        let e_d = zero_or(g, inputs, "e_d", g.n(), ValueKind::Covector);
        let terms = [
            bundle_power(g, f_g, get_bundle(inputs, "e_g")?)?,
            bundle_power(g, get_bundle(inputs, "e_M")?, &r.momentum)?,
            -bundle_power(g, &r.f_d, &e_d)?,
        ];
        let scale = get_bundle(inputs, "momentum")?.max_abs() * get_bundle(inputs, "e_M")?.max_abs();
        Ok(vec![
            BlockAudit::balance(&self.id, "kinetic-power", TolClass::Mesh, &terms, g.max_h()),
            BlockAudit::bound(&self.id, "boundary-momentum-flux", TolClass::Algebraic, r.constraint, scale.max(1.0), 0.0),
        ])
    }
}

/// Interconnection of the kinetic block (`kinetic`), the Stokes-Dirac structure (`stokes`)
/// and the two stress splits (`split`, `voldev`).
pub fn elastic_wires() -> Result<Vec<Wire>> {
    Ok(vec![
        Wire::new("kinetic.f_d", "stokes.f_d")?,
        Wire::new("stokes.e_d", "kinetic.e_d")?,
        Wire::new("stokes.f_s", "split.f")?,
        Wire::new("split.T", "stokes.e_s")?,
        Wire::new("split.eps", "voldev.eps")?,
        Wire::new("voldev.T", "split.e_sym")?,
    ])
}

/// Kinetic block, Stokes-Dirac structure and both stress splits wired together, with the
/// volumetric and deviatoric efforts left as externals for a storage closure.
///
/// Externals (keyed `block.port`): the kinetic efforts and states, `stokes.metric`,
/// `split.metric`, `voldev.e_vol`, `voldev.e_dev`, and on bounded grids `stokes.f_b1`,
/// `stokes.e_b2`. The returned list names them.
///
/// In the material representation the stress is a two-point tensor and no split applies:
/// the network is the canonical block and the Stokes-Dirac structure, with `stokes.e_s`
/// and `stokes.metric` (the flat body metric) external.
pub fn elastic_network(rep: Rep, grid: &Grid, flux_port: bool) -> Result<(Network, Vec<String>)> {
    if rep == Rep::Material {
        return material_network(grid);
    }
    let (kin, ext): (Box<dyn DiracBlock>, &[&str]) = match rep {
        Rep::Material => unreachable!(),
        Rep::Spatial => (
            Box::new(SpatialKinetic::new("kinetic", grid, flux_port)),
            &["kinetic.e_mu", "kinetic.e_M", "kinetic.mass", "kinetic.momentum", "kinetic.metric"],
        ),
        Rep::Convective => (Box::new(ConvectiveKinetic::new("kinetic", grid)), &["kinetic.e_g", "kinetic.e_M", "kinetic.metric", "kinetic.momentum"]),
    };
    let mut externals: Vec<String> = ext.iter().map(|s| s.to_string()).collect();
    externals.extend(["stokes.metric", "split.metric", "voldev.e_vol", "voldev.e_dev"].map(String::from));
    if !grid.all_periodic() {
        externals.extend(["stokes.f_b1", "stokes.e_b2"].map(String::from));
    }
    let blocks: Vec<Box<dyn DiracBlock>> = vec![kin, Box::new(StokesDirac::new("stokes", grid)), Box::new(SymAsym::new("split", grid)), Box::new(VolDev::new("voldev", grid))];
    let wires = elastic_wires()?;
    let refs: Vec<&str> = externals.iter().map(|s| s.as_str()).collect();
    Ok((Network::compose(blocks, &wires, &refs)?, externals))
}

fn material_network(grid: &Grid) -> Result<(Network, Vec<String>)> {
    let mut externals: Vec<String> = ["kinetic.e_M", "stokes.e_s", "stokes.metric"].map(String::from).to_vec();
    if !grid.all_periodic() {
        externals.extend(["stokes.f_b1", "stokes.e_b2"].map(String::from));
    }
    let blocks: Vec<Box<dyn DiracBlock>> = vec![Box::new(MaterialCanonical::new("kinetic", grid)), Box::new(StokesDirac::new("stokes", grid))];
    let wires = [Wire::new("kinetic.f_d", "stokes.f_d")?, Wire::new("stokes.e_d", "kinetic.e_d")?];
    let refs: Vec<&str> = externals.iter().map(|s| s.as_str()).collect();
    Ok((Network::compose(blocks, &wires, &refs)?, externals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Topology;
    use crate::net::evaluate_block;
    use crate::state::{to_convective, to_spatial};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn periodic2(nc: usize) -> Grid {
        Grid::periodic(&[nc, nc], &[1.0, 1.0]).unwrap()
    }

    fn smooth_spatial(g: &Grid) -> SpatialState {
        let mass = MassForm::new(g, g.sample(|x| 1.0 + 0.3 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos())).unwrap();
        let v = BundleForm::vector_field(g, |i| {
            let x = g.x(i);
            [(2.0 * PI * x[1]).sin() + 0.2, 0.5 * (2.0 * PI * x[0]).cos(), 0.0]
        });
        let mut mom = BundleForm::zeros(g, 2, ValueKind::Covector);
        for node in 0..g.len() {
            let u = v.vec_at(node);
            for i in 0..2 {
                mom.set(node, i, 0, mass.density()[node] * u[i]);
            }
        }
        SpatialState { mass, momentum: mom }
    }

    fn wavy_metric(g: &Grid) -> MetricField {
        MetricField::from_fn(g, |x| {
            let a = 0.15 * (2.0 * PI * x[0]).sin();
            Mat::from_rows(&[&[1.0 + a, 0.1 * (2.0 * PI * x[1]).cos()], &[0.1 * (2.0 * PI * x[1]).cos(), 1.2 - a]])
        })
        .unwrap()
    }

    fn convective_state(g: &Grid, mass: &MassForm) -> ConvectiveState {
        let metric = wavy_metric(g);
        let v = BundleForm::vector_field(g, |i| {
            let x = g.x(i);
            [(2.0 * PI * (x[0] + x[1])).sin(), 0.3 + 0.4 * (2.0 * PI * x[0]).cos(), 0.0]
        });
        let mut mom = BundleForm::zeros(g, 2, ValueKind::Covector);
        for node in 0..g.len() {
            let low = metric.g(node).mulv(&v.vec_at(node));
            for i in 0..2 {
                mom.set(node, i, 0, mass.density()[node] * low[i]);
            }
        }
        ConvectiveState { metric, momentum: mom }
    }

    #[test]
    fn energy_examples() {
        let g = Grid::periodic(&[4, 4, 4], &[1.0; 3]).unwrap();
        let p = Params::euclidean(&g, MassForm::uniform(&g, 1.0).unwrap()).unwrap();
        let zero = SpatialState { mass: p.mass.clone(), momentum: BundleForm::zeros(&g, 3, ValueKind::Covector) };
        assert_eq!(kinetic_energy(&KinState::Spatial(zero), &p).unwrap(), 0.0);
        let uni = SpatialState { mass: p.mass.clone(), momentum: BundleForm::covector_top(&g, |_| [1.0, 0.0, 0.0]) };
        assert!((kinetic_energy(&KinState::Spatial(uni), &p).unwrap() - 0.5).abs() < 1e-14);
        let g2 = periodic2(12);
        let p2 = Params::euclidean(&g2, MassForm::uniform(&g2, 1.0).unwrap()).unwrap();
        let s = smooth_spatial(&g2);
        let h = kinetic_energy(&KinState::Spatial(s.clone()), &p2).unwrap();
        let v = s.velocity(&p2).unwrap();
        let direct: Vec<f64> = (0..g2.len())
            .map(|k| {
                let u = v.vec_at(k);
                0.5 * (u[0] * u[0] + u[1] * u[1]) * s.mass.density()[k]
            })
            .collect();
        assert!((h - g2.quadrature(&direct)).abs() < 1e-13);
        assert!(MassForm::new(&g2, vec![0.0; g2.len()]).is_err());
        assert!(KineticHamiltonian::new(Rep::Material).energy(&KinState::Spatial(s), &p2).is_err());
    }

    #[test]
    fn energy_agrees_across_representations() {
        let g = periodic2(24);
        let p = Params::euclidean(&g, MassForm::new(&g, g.sample(|x| 1.0 + 0.2 * (2.0 * PI * x[1]).sin())).unwrap()).unwrap();
        let disp = BundleForm::vector_field(&g, |i| {
            let x = g.x(i);
            [0.03 * (2.0 * PI * x[1]).sin(), 0.02 * (2.0 * PI * x[0]).cos(), 0.0]
        });
        let vel = BundleForm::vector_field(&g, |i| {
            let x = g.x(i);
            [(2.0 * PI * x[0]).cos(), 0.5, 0.0]
        });
        let m = MaterialState::from_velocity(&p, disp, &vel).unwrap();
        let hm = kinetic_energy(&KinState::Material(m.clone()), &p).unwrap();
        let hc = kinetic_energy(&KinState::Convective(to_convective(&m, &p).unwrap()), &p).unwrap();
        let hs = kinetic_energy(&KinState::Spatial(to_spatial(&m, &p).unwrap()), &p).unwrap();
        assert!((hm - hc).abs() < 1e-12 * hm);
        assert!((hm - hs).abs() < 1e-3 * hm, "{hm} {hs}");
    }

    #[test]
    fn material_derivatives_vanish_in_configuration() {
        let g = Grid::bounded(&[8], &[1.0]).unwrap();
        let p = Params::euclidean(&g, MassForm::uniform(&g, 2.0).unwrap()).unwrap();
        let m = MaterialState::from_velocity(&p, BundleForm::zeros(&g, 0, ValueKind::Vector), &BundleForm::vector_field(&g, |i| [g.x(i)[0], 0.0, 0.0])).unwrap();
        let d = variational_derivatives(&KinState::Material(m), &p).unwrap();
        let FirstDerivative::Config(e) = &d.first else { panic!() };
        assert_eq!(e.max_abs(), 0.0);
        assert_eq!(d.boundary.unwrap().max_abs(), 0.0);
        assert!((d.e_m.get(7, 0, 0) - g.x(7)[0]).abs() < 1e-14);
    }

    #[test]
    fn spatial_derivatives_match_finite_differences() {
        let g = periodic2(10);
        let p = Params::euclidean(&g, MassForm::uniform(&g, 1.0).unwrap()).unwrap();
        let s = smooth_spatial(&g);
        let d = variational_derivatives(&KinState::Spatial(s.clone()), &p).unwrap();
        let FirstDerivative::Mass(e_mu) = &d.first else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dr: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let eps = 1e-5;
        let energy = |rho: Vec<f64>, mom: BundleForm| kinetic_energy(&KinState::Spatial(SpatialState { mass: MassForm::new(&g, rho).unwrap(), momentum: mom }), &p).unwrap();
        let shift = |t: f64| s.mass.density().iter().zip(&dr).map(|(a, b)| a + t * b).collect::<Vec<_>>();
        let fd = (energy(shift(eps), s.momentum.clone()) - energy(shift(-eps), s.momentum.clone())) / (2.0 * eps);
        let an = g.quadrature(&e_mu.data().iter().zip(&dr).map(|(a, b)| a * b).collect::<Vec<_>>());
        assert!((fd - an).abs() < 1e-6, "{fd} {an}");
        let dm = BundleForm::from_data(&g, 2, ValueKind::Covector, (0..g.len() * 2).map(|_| rng.gen_range(-0.1..0.1)).collect()).unwrap();
        let mut plus = s.momentum.clone();
        plus.axpy(eps, &dm);
        let mut minus = s.momentum.clone();
        minus.axpy(-eps, &dm);
        let fd = (energy(s.mass.density().to_vec(), plus) - energy(s.mass.density().to_vec(), minus)) / (2.0 * eps);
        let an = bundle_power(&g, &d.e_m, &dm).unwrap();
        assert!((fd - an).abs() < 1e-6, "{fd} {an}");
        let uni = SpatialState { mass: p.mass.clone(), momentum: BundleForm::covector_top(&g, |_| [0.6, 0.8, 0.0]) };
        let d = variational_derivatives(&KinState::Spatial(uni), &p).unwrap();
        let FirstDerivative::Mass(e_mu) = &d.first else { panic!() };
        assert!(e_mu.data().iter().all(|v| (v + 0.5).abs() < 1e-14));
    }

    #[test]
    fn convective_metric_derivative_matches_finite_differences() {
        let g = periodic2(10);
        let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.2 * (2.0 * PI * x[0]).cos())).unwrap();
        let p = Params::euclidean(&g, mass.clone()).unwrap();
        let c = convective_state(&g, &mass);
        let d = variational_derivatives(&KinState::Convective(c.clone()), &p).unwrap();
        let FirstDerivative::Metric(e_g) = &d.first else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dg: Vec<Mat> = (0..g.len())
            .map(|_| {
                let m = Mat::from_fn(2, |_, _| rng.gen_range(-0.1..0.1));
                m + m.transpose()
            })
            .collect();
        let eps = 1e-6;
        let energy = |s: f64| {
            let gs: Vec<Mat> = c.metric.values().iter().zip(&dg).map(|(a, b)| *a + *b * s).collect();
            kinetic_energy_form(&g, &MetricField::new(&g, gs).unwrap(), &mass, &c.momentum).unwrap()
        };
        let fd = (energy(eps) - energy(-eps)) / (2.0 * eps);
        let mut df = BundleForm::zeros(&g, 1, ValueKind::Covector);
        for (node, m) in dg.iter().enumerate() {
            df.set_mixed(node, m);
        }
        let an = bundle_power(&g, &df, e_g).unwrap();
        assert!((fd - an).abs() < 1e-6, "{fd} {an}");
    }

    #[test]
    fn zero_efforts_give_zero_rates() {
        let g = periodic2(8);
        let p = Params::euclidean(&g, MassForm::uniform(&g, 1.0).unwrap()).unwrap();
        let z0 = BundleForm::zeros(&g, 0, ValueKind::Vector);
        let zf = BundleForm::zeros(&g, 2, ValueKind::Covector);
        let s = SpatialState { mass: p.mass.clone(), momentum: zf.clone() };
        let d = VariationalDerivatives { first: FirstDerivative::Mass(ScalarForm::zeros(&g, 0)), e_m: z0.clone(), boundary: None };
        let r = kinetic_dirac_apply(&KinState::Spatial(s), &d, &zf, &p).unwrap();
        let FirstRate::Mass(fm) = &r.first else { panic!() };
        assert_eq!(fm.max_abs() + r.momentum.max_abs(), 0.0);
        let c = ConvectiveState { metric: MetricField::euclidean(&g), momentum: zf.clone() };
        let d = VariationalDerivatives { first: FirstDerivative::Metric(BundleForm::zeros(&g, 1, ValueKind::Vector)), e_m: z0.clone(), boundary: None };
        let r = kinetic_dirac_apply(&KinState::Convective(c), &d, &zf, &p).unwrap();
        assert_eq!(r.momentum.max_abs(), 0.0);
        let m = MaterialState::at_rest(&p);
        let d = VariationalDerivatives { first: FirstDerivative::Config(zf.clone()), e_m: z0, boundary: None };
        let r = kinetic_dirac_apply(&KinState::Material(m), &d, &zf, &p).unwrap();
        assert_eq!(r.momentum.max_abs(), 0.0);
    }

    #[test]
    fn mismatched_efforts_are_rejected() {
        let g = periodic2(8);
        let p = Params::euclidean(&g, MassForm::uniform(&g, 1.0).unwrap()).unwrap();
        let s = SpatialState { mass: p.mass.clone(), momentum: BundleForm::zeros(&g, 2, ValueKind::Covector) };
        let d = VariationalDerivatives { first: FirstDerivative::Config(BundleForm::zeros(&g, 2, ValueKind::Covector)), e_m: BundleForm::zeros(&g, 0, ValueKind::Vector), boundary: None };
        assert!(matches!(kinetic_dirac_apply(&KinState::Spatial(s), &d, &BundleForm::zeros(&g, 2, ValueKind::Covector), &p), Err(PhcmError::Kind(_))));
    }

    #[test]
    fn uniform_transport_is_steady() {
        let g = periodic2(8);
        let p = Params::euclidean(&g, MassForm::uniform(&g, 1.3).unwrap()).unwrap();
        let s = SpatialState { mass: p.mass.clone(), momentum: BundleForm::covector_top(&g, |_| [1.3 * 0.4, -1.3 * 0.7, 0.0]) };
        let st = KinState::Spatial(s);
        let d = variational_derivatives(&st, &p).unwrap();
        let r = kinetic_dirac_apply(&st, &d, &BundleForm::zeros(&g, 2, ValueKind::Covector), &p).unwrap();
        let FirstRate::Mass(fm) = &r.first else { panic!() };
        assert!(fm.max_abs() < 1e-13 && r.momentum.max_abs() < 1e-13);
    }

    #[test]
    fn gaussian_density_transport_matches_direct_stencil() {
        let err = |nc: usize| {
            let g = Grid::periodic(&[nc], &[1.0]).unwrap();
            let rho = g.sample(|x| 1.0 + (-(x[0] - 0.5).powi(2) / 0.01).exp());
            let mass = MassForm::new(&g, rho.clone()).unwrap();
            let p = Params::euclidean(&g, mass.clone()).unwrap();
            let mom = BundleForm::covector_top(&g, |k| [0.7 * rho[k], 0.0, 0.0]);
            let st = KinState::Spatial(SpatialState { mass, momentum: mom });
            let d = variational_derivatives(&st, &p).unwrap();
            let r = kinetic_dirac_apply(&st, &d, &BundleForm::zeros(&g, 1, ValueKind::Covector), &p).unwrap();
            let FirstRate::Mass(fm) = &r.first else { panic!() };
            // exact: −∂ₓ(0.7ρ)
            (0..g.len())
                .map(|k| {
                    let x = g.x(k)[0] - 0.5;
                    let exact = -0.7 * (-x * x / 0.01).exp() * (-2.0 * x / 0.01);
                    (fm.get(k, 0) - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let (a, b) = (err(64), err(128));
        assert!((a / b).log2() > 1.8, "{a} {b}");
    }

    #[test]
    fn spatial_mass_is_conserved_exactly_on_periodic_grids() {
        let g = periodic2(16);
        let s = smooth_spatial(&g);
        let (dmu, _) = spatial_balance_rhs(&g, &MetricField::euclidean(&g), &s, &BundleForm::zeros(&g, 2, ValueKind::Covector), BalanceForm::Conservation).unwrap();
        assert!(integrate(&g, &dmu).unwrap().abs() < 1e-12);
    }

    #[test]
    fn spatial_block_balances_with_flux_port() {
        for nc in [12, 24] {
            let g = periodic2(nc);
            let s = smooth_spatial(&g);
            let m = wavy_metric(&g);
            let v = star_c_inv(&g, &s.momentum, &m, &s.mass).unwrap();
            let mut p = Ports::new();
            p.insert("e_mu".into(), PortValue::Scalar(spatial_mass_derivative(&g, &v, &m)));
            p.insert("e_M".into(), PortValue::Bundle(v));
            p.insert("e_d".into(), PortValue::Bundle(BundleForm::covector_top(&g, |k| [g.x(k)[0].sin(), 0.3, 0.0])));
            p.insert("mass".into(), PortValue::Mass(s.mass.clone()));
            p.insert("momentum".into(), PortValue::Bundle(s.momentum.clone()));
            p.insert("metric".into(), PortValue::Metric(m));
            let (_, audit) = evaluate_block(&SpatialKinetic::new("k", &g, true), &p).unwrap();
            assert!(audit.flagged().is_empty(), "{audit:?}");
            assert!(audit.entries[0].residual < 1e-12 * audit.entries[0].scale);
        }
    }

    #[test]
    fn spatial_boundary_balance_on_bounded_grid() {
        let res = |nc: usize| {
            let g = Grid::bounded(&[nc, nc], &[1.0, 1.0]).unwrap();
            let s = smooth_spatial(&g);
            let m = MetricField::euclidean(&g);
            let v = star_c_inv(&g, &s.momentum, &m, &s.mass).unwrap();
            let e_mu = spatial_mass_derivative(&g, &v, &m);
            let r = spatial_kinetic_apply(&g, &m, &s.mass, &s.momentum, &e_mu, &v, &BundleForm::zeros(&g, 2, ValueKind::Covector)).unwrap();
            let FirstRate::Mass(f_mu) = &r.first else { panic!() };
            let (fb, eb) = r.boundary.unwrap();
            (scalar_power(&g, f_mu, &e_mu).unwrap() + bundle_power(&g, &v, &r.momentum).unwrap() - eb.pair(&fb, None).unwrap()).abs()
        };
        // the kinetic boundary identity holds to roundoff even with one-sided closures
        assert!(res(16) < 1e-12 && res(32) < 1e-12);
    }

    #[test]
    fn convective_block_balances_and_boundary_flux_vanishes() {
        let g = Grid::new(&[12, 10], &[1.0, 1.0], &[Topology::Bounded, Topology::Periodic]).unwrap();
        let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.2 * x[0])).unwrap();
        let c = convective_state(&g, &mass);
        let v = star_c_inv(&g, &c.momentum, &c.metric, &mass).unwrap();
        let mut p = Ports::new();
        p.insert("e_g".into(), PortValue::Bundle(convective_metric_derivative(&g, &v, &mass)));
        p.insert("e_M".into(), PortValue::Bundle(v));
        p.insert("e_d".into(), PortValue::Bundle(BundleForm::covector_top(&g, |k| [g.x(k)[1], 1.0, 0.0])));
        p.insert("metric".into(), PortValue::Metric(c.metric.clone()));
        p.insert("momentum".into(), PortValue::Bundle(c.momentum.clone()));
        let (_, audit) = evaluate_block(&ConvectiveKinetic::new("k", &g), &p).unwrap();
        assert!(audit.flagged().is_empty(), "{audit:?}");
        assert!(audit.entries[1].residual < 1e-13);
    }

    #[test]
    fn material_block_balances_exactly() {
        let g = Grid::bounded(&[9], &[1.0]).unwrap();
        let mut p = Ports::new();
        p.insert("e_phi".into(), PortValue::Bundle(BundleForm::covector_top(&g, |k| [k as f64 * 0.1, 0.0, 0.0])));
        p.insert("e_M".into(), PortValue::Bundle(BundleForm::vector_field(&g, |k| [(k as f64).sin(), 0.0, 0.0])));
        p.insert("e_d".into(), PortValue::Bundle(BundleForm::covector_top(&g, |k| [(k as f64).cos(), 0.0, 0.0])));
        let (out, audit) = evaluate_block(&MaterialCanonical::new("k", &g), &p).unwrap();
        assert!(audit.flagged().is_empty());
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn balance_forms_agree_to_second_order() {
        let diff = |nc: usize| {
            let g = periodic2(nc);
            let s = smooth_spatial(&g);
            let m = wavy_metric(&g);
            let f = BundleForm::zeros(&g, 2, ValueKind::Covector);
            let (a_mu, a_m) = spatial_balance_rhs(&g, &m, &s, &f, BalanceForm::Advection).unwrap();
            let (c_mu, c_m) = spatial_balance_rhs(&g, &m, &s, &f, BalanceForm::Conservation).unwrap();
            (a_mu.minus(&c_mu).max_abs(), a_m.minus(&c_m).max_abs())
        };
        let (a, b) = (diff(16), diff(32));
        assert!((a.0 / b.0).log2() > 1.8 && (a.1 / b.1).log2() > 1.8, "{a:?} {b:?}");
        let cdiff = |nc: usize| {
            let g = periodic2(nc);
            let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.2 * (2.0 * PI * x[0]).cos())).unwrap();
            let c = convective_state(&g, &mass);
            let f = BundleForm::zeros(&g, 2, ValueKind::Covector);
            let (ag, am) = convective_balance_rhs(&g, &mass, &c, &f, BalanceForm::Advection).unwrap();
            let (cg, cm) = convective_balance_rhs(&g, &mass, &c, &f, BalanceForm::Conservation).unwrap();
            let dg = ag.iter().zip(&cg).map(|(x, y)| (*x - *y).max_abs()).fold(0.0, f64::max);
            (dg, am.minus(&cm).max_abs())
        };
        let (a, b) = (cdiff(16), cdiff(32));
        // both metric rates are the same centered products, so they agree to roundoff
        assert!(a.0 < 1e-12 && b.0 < 1e-12, "{a:?} {b:?}");
        assert!((a.1 / b.1).log2() > 1.8, "{a:?} {b:?}");
    }

    #[test]
    fn uniform_fields_give_zero_balance_rates() {
        let g = periodic2(8);
        let mass = MassForm::uniform(&g, 2.0).unwrap();
        let c = ConvectiveState { metric: MetricField::euclidean(&g), momentum: BundleForm::covector_top(&g, |_| [0.4, 0.2, 0.0]) };
        let f = BundleForm::zeros(&g, 2, ValueKind::Covector);
        for form in [BalanceForm::Advection, BalanceForm::Conservation] {
            let (dg, dm) = convective_balance_rhs(&g, &mass, &c, &f, form).unwrap();
            assert!(dg.iter().all(|m| m.max_abs() < 1e-14) && dm.max_abs() < 1e-14);
            let s = SpatialState { mass: mass.clone(), momentum: c.momentum.clone() };
            let (dmu, dm) = spatial_balance_rhs(&g, &MetricField::euclidean(&g), &s, &f, form).unwrap();
            assert!(dmu.max_abs() < 1e-14 && dm.max_abs() < 1e-14);
        }
    }

    #[test]
    fn elastic_network_composes_and_balances() {
        let g = Grid::new(&[16, 12], &[1.0, 1.0], &[Topology::Bounded, Topology::Periodic]).unwrap();
        let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.1 * x[0])).unwrap();
        let (net, ext) = elastic_network(Rep::Convective, &g, false).unwrap();
        let c = convective_state(&g, &mass);
        let v = star_c_inv(&g, &c.momentum, &c.metric, &mass).unwrap();
        let mut e = Ports::new();
        for name in &ext {
            let val = match name.as_str() {
                "kinetic.e_g" => PortValue::Bundle(convective_metric_derivative(&g, &v, &mass)),
                "kinetic.e_M" => PortValue::Bundle(v.clone()),
                "kinetic.metric" | "stokes.metric" | "split.metric" => PortValue::Metric(c.metric.clone()),
                "kinetic.momentum" => PortValue::Bundle(c.momentum.clone()),
                "voldev.e_vol" => PortValue::Scalar(ScalarForm::top(&g, g.sample(|x| 0.2 * x[0])).unwrap()),
                "voldev.e_dev" => {
                    let mut t = BundleForm::zeros(&g, 1, ValueKind::Covector);
                    for k in 0..g.len() {
                        t.set_flux(k, &Mat::from_rows(&[&[0.1 * g.x(k)[1].sin(), 0.05], &[0.05, -0.1 * g.x(k)[1].sin()]]));
                    }
                    PortValue::Bundle(t)
                }
                "stokes.f_b1" | "stokes.e_b2" => PortValue::Boundary(BoundaryField::zeros(&g, 2)),
                other => panic!("unexpected external {other}"),
            };
            e.insert(name.clone(), val);
        }
        let out = net.evaluate(&e).unwrap();
        assert!(out.audit.max_residual(TolClass::Algebraic) < 1e-10);
        assert!(out.bundle("kinetic.f_M").unwrap().max_abs() > 0.0);
        assert!(elastic_network(Rep::Spatial, &g, true).is_ok());
        assert!(elastic_network(Rep::Material, &Grid::bounded(&[8], &[1.0]).unwrap(), false).is_ok());
    }
}
