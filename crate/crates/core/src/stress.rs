//! Stress power: the Stokes-Dirac structure with partitioned boundary, the
//! symmetric/antisymmetric and volumetric/deviatoric port splits, rate of strain and
//! the extensive/intensive stress conversion.

use crate::error::{PhcmError, Result};
use crate::fiber::{project_sym_asym_metric, project_sym_asym_metric_dual, project_vol_dev, project_vol_dev_dual, DualMixed, Mat, MetricFiber, MixedTensor};
use crate::mesh::{
    covariant_gradient, exterior_covariant_d, integrate, star_c, star_c_inv, trace_normal, trace_vector, wedge_dot, BoundaryField, BundleForm, FacePort, Grid, MassForm, MetricField,
    ScalarForm, ValueKind,
};
use crate::net::{get_boundary, get_bundle, get_metric, get_scalar, BlockAudit, DiracBlock, OutputSpec, PortKind, PortSpec, PortValue, Ports, Role, TolClass};

/// ∫ f ∧̇ e.
pub fn power(grid: &Grid, flow: &BundleForm, effort: &BundleForm) -> Result<f64> {
    integrate(grid, &wedge_dot(grid, flow, effort)?)
}

/// ∫ |f ∧̇ e|, a magnitude for `power` that does not cancel.
pub fn power_magnitude(grid: &Grid, flow: &BundleForm, effort: &BundleForm) -> Result<f64> {
    let mut density = wedge_dot(grid, flow, effort)?;
    density.data_mut().iter_mut().for_each(|x| *x = x.abs());
    integrate(grid, &density)
}

fn same_faces(grid: &Grid, b: &BoundaryField, what: &str) -> Result<()> {
    let faces = grid.faces();
    if b.faces.len() != faces.len() || b.faces.iter().zip(&faces).any(|(f, &(a, s, _))| f.axis != a || f.side != s || f.comps != grid.n()) {
        return Err(PhcmError::Port(format!("{what}: boundary field does not match the grid faces")));
    }
    Ok(())
}

fn reject_off_partition(b: &BoundaryField, allowed: FacePort, what: &str) -> Result<()> {
    for f in &b.faces {
        if f.port != allowed && f.values.iter().any(|v| *v != 0.0) {
            return Err(PhcmError::Port(format!(
                "{what} supplied on face (axis {}, side {}) which is a {:?} face",
                f.axis, f.side, f.port
            )));
        }
    }
    Ok(())
}

/// Impose a boundary velocity on the velocity faces ∂B₁.
pub fn apply_velocity_input(grid: &Grid, v: &BundleForm, vb: &BoundaryField) -> Result<BundleForm> {
    same_faces(grid, vb, "velocity input")?;
    reject_off_partition(vb, FacePort::Velocity, "velocity input")?;
    let mut out = v.clone();
    for f in vb.faces.iter().filter(|f| f.port == FacePort::Velocity) {
        for (k, &node) in f.nodes.iter().enumerate() {
            for i in 0..grid.n() {
                out.set(node, i, 0, f.value(k, i));
            }
        }
    }
    Ok(out)
}

/// Impose the outward traction 𝒯(n) on the traction faces ∂B₂. Nodes shared with a
/// velocity face belong to ∂B₁ and are left untouched.
pub fn apply_traction_input(grid: &Grid, t: &BundleForm, tb: &BoundaryField) -> Result<BundleForm> {
    same_faces(grid, tb, "traction input")?;
    reject_off_partition(tb, FacePort::Traction, "traction input")?;
    let mut out = t.clone();
    for f in tb.faces.iter().filter(|f| f.port == FacePort::Traction) {
        for (k, &node) in f.nodes.iter().enumerate() {
            if grid.node_port(node) == Some(FacePort::Velocity) {
                continue;
            }
            let mut flux = out.flux_at(node);
            for i in 0..grid.n() {
                flux.set(i, f.axis, f.sign * f.value(k, i));
            }
            out.set_flux(node, &flux);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct StokesOutputs {
    /// f_s = ∇v
    pub grad_v: BundleForm,
    /// e_d = d_∇𝒯
    pub div_t: BundleForm,
    /// 𝒯 restricted to ∂B₁
    pub e_b1: BoundaryField,
    /// v restricted to ∂B₂
    pub f_b2: BoundaryField,
    /// v and 𝒯 after the boundary inputs were imposed.
    pub v: BundleForm,
    pub t: BundleForm,
}

/// Apply the Stokes-Dirac structure to (v, 𝒯) with optional boundary inputs v|∂B₁ and 𝒯|∂B₂.
pub fn stokes_dirac_apply(
    grid: &Grid,
    metric: &MetricField,
    v: &BundleForm,
    t: &BundleForm,
    v_b1: Option<&BoundaryField>,
    t_b2: Option<&BoundaryField>,
) -> Result<StokesOutputs> {
    let n = grid.n();
    v.expect(0, ValueKind::Vector, "Stokes-Dirac velocity")?;
    t.expect(n - 1, ValueKind::Covector, "Stokes-Dirac stress")?;
    let v = match v_b1 {
        Some(b) => apply_velocity_input(grid, v, b)?,
        None => v.clone(),
    };
    let t = match t_b2 {
        Some(b) => apply_traction_input(grid, t, b)?,
        None => t.clone(),
    };
    Ok(StokesOutputs {
        grad_v: covariant_gradient(grid, &v, metric)?,
        div_t: exterior_covariant_d(grid, &t, metric)?,
        e_b1: trace_normal(grid, &t)?.restrict(FacePort::Velocity),
        f_b2: trace_vector(grid, &v)?.restrict(FacePort::Traction),
        v,
        t,
    })
}

/// Terms of ∫∇v∧̇𝒯 + ∫v∧̇d_∇𝒯 − ∮_{∂B₁} − ∮_{∂B₂}, which sum to zero up to O(h²).
pub fn stokes_balance_terms(grid: &Grid, s: &StokesOutputs) -> Result<[f64; 4]> {
    let vb1 = trace_vector(grid, &s.v)?.restrict(FacePort::Velocity);
    let tb2 = trace_normal(grid, &s.t)?.restrict(FacePort::Traction);
    Ok([
        power(grid, &s.grad_v, &s.t)?,
        power(grid, &s.v, &s.div_t)?,
        -s.e_b1.pair(&vb1, Some(FacePort::Velocity))?,
        -tb2.pair(&s.f_b2, Some(FacePort::Traction))?,
    ])
}

fn vector_kind(degree: usize) -> PortKind {
    PortKind::Bundle { degree, kind: ValueKind::Vector }
}

fn covector_kind(degree: usize) -> PortKind {
    PortKind::Bundle { degree, kind: ValueKind::Covector }
}

/// The Stokes-Dirac block. Inputs: `f_d` (v), `e_s` (𝒯), optional `f_b1`, `e_b2`, state `metric`.
/// Outputs: `f_s` = ∇v, `e_d` = d_∇𝒯, `e_b1` = 𝒯|∂B₁, `f_b2` = v|∂B₂.
pub struct StokesDirac {
    pub id: String,
    pub grid: Grid,
}

impl StokesDirac {
    pub fn new(id: &str, grid: &Grid) -> Self {
        StokesDirac { id: id.into(), grid: grid.clone() }
    }

    fn apply(&self, inputs: &Ports) -> Result<StokesOutputs> {
        let zero_t;
        let t = match get_bundle(inputs, "e_s") {
            Ok(t) => t,
            Err(_) => {
                zero_t = BundleForm::zeros(&self.grid, self.grid.n() - 1, ValueKind::Covector);
                &zero_t
            }
        };
        let zero_v;
        let v = match get_bundle(inputs, "f_d") {
            Ok(v) => v,
            Err(_) => {
                zero_v = BundleForm::zeros(&self.grid, 0, ValueKind::Vector);
                &zero_v
            }
        };
        stokes_dirac_apply(&self.grid, get_metric(inputs, "metric")?, v, t, get_boundary(inputs, "f_b1")?, get_boundary(inputs, "e_b2")?)
    }
}

impl DiracBlock for StokesDirac {
    fn id(&self) -> &str {
        &self.id
    }

    fn inputs(&self) -> Vec<PortSpec> {
        let n = self.grid.n();
        vec![
            PortSpec::new("f_d", vector_kind(0), Role::Flow),
            PortSpec::new("e_s", covector_kind(n - 1), Role::Effort),
            PortSpec::new("f_b1", PortKind::Boundary, Role::Flow).optional(),
            PortSpec::new("e_b2", PortKind::Boundary, Role::Effort).optional(),
            PortSpec::new("metric", PortKind::Metric, Role::State),
        ]
    }

    fn outputs(&self) -> Vec<OutputSpec> {
        let n = self.grid.n();
        vec![
            OutputSpec::new("f_s", vector_kind(1), Role::Flow, &["f_d", "f_b1", "metric"]),
            OutputSpec::new("e_d", covector_kind(n), Role::Effort, &["e_s", "e_b2", "metric"]),
            OutputSpec::new("e_b1", PortKind::Boundary, Role::Effort, &["e_s", "e_b2", "metric"]),
            OutputSpec::new("f_b2", PortKind::Boundary, Role::Flow, &["f_d", "f_b1", "metric"]),
        ]
    }

    fn output(&self, name: &str, inputs: &Ports) -> Result<PortValue> {
        let s = self.apply(inputs)?;
        Ok(match name {
            "f_s" => PortValue::Bundle(s.grad_v),
            "e_d" => PortValue::Bundle(s.div_t),
            "e_b1" => PortValue::Boundary(s.e_b1),
            "f_b2" => PortValue::Boundary(s.f_b2),
            _ => return Err(PhcmError::Port(format!("{}: no output `{name}`", self.id))),
        })
    }

    fn audit(&self, inputs: &Ports, _outputs: &Ports) -> Result<Vec<BlockAudit>> {
        let s = self.apply(inputs)?;
        let terms = stokes_balance_terms(&self.grid, &s)?;
        let residual = terms.iter().sum::<f64>().abs();
        let scale = power_magnitude(&self.grid, &s.grad_v, &s.t)? + power_magnitude(&self.grid, &s.v, &s.div_t)? + terms[2].abs() + terms[3].abs();
        Ok(vec![BlockAudit::bound(&self.id, "stress-power", TolClass::Mesh, residual, scale, self.grid.max_h())])
    }
}

/// ε̂ = π̂_sym ∇v̂, ŵ the remainder, and the vol/dev split of ε̂.
#[derive(Clone, Debug)]
pub struct RateOfStrain {
    pub eps: BundleForm,
    pub w: BundleForm,
    pub eps_vol: ScalarForm,
    pub eps_dev: BundleForm,
}

fn fiber_metric(m: &MetricField, node: usize) -> Result<MetricFiber> {
    MetricFiber::from_mat(*m.g(node))
}

/// Metric-twisted symmetric/antisymmetric split of a vector-valued 1-form.
pub fn split_sym_asym(grid: &Grid, x: &BundleForm, metric: &MetricField) -> Result<(BundleForm, BundleForm)> {
    x.expect(1, ValueKind::Vector, "sym/asym split")?;
    let mut s = BundleForm::zeros(grid, 1, ValueKind::Vector);
    let mut a = BundleForm::zeros(grid, 1, ValueKind::Vector);
    for node in 0..grid.len() {
        let (ps, pa) = project_sym_asym_metric(&MixedTensor(x.mixed_at(node)), &fiber_metric(metric, node)?)?;
        s.set_mixed(node, &ps.0);
        a.set_mixed(node, &pa.0);
    }
    Ok((s, a))
}

/// Trace and traceless part of a vector-valued 1-form.
pub fn split_vol_dev(grid: &Grid, x: &BundleForm) -> Result<(ScalarForm, BundleForm)> {
    x.expect(1, ValueKind::Vector, "vol/dev split")?;
    let mut vol = ScalarForm::zeros(grid, 0);
    let mut dev = BundleForm::zeros(grid, 1, ValueKind::Vector);
    for node in 0..grid.len() {
        let (tr, d) = project_vol_dev(&MixedTensor(x.mixed_at(node)));
        vol.set(node, 0, tr);
        dev.set_mixed(node, &d.0);
    }
    Ok((vol, dev))
}

pub fn rate_of_strain(grid: &Grid, v: &BundleForm, metric: &MetricField) -> Result<RateOfStrain> {
    let grad = covariant_gradient(grid, v, metric)?;
    let (eps, w) = split_sym_asym(grid, &grad, metric)?;
    let (eps_vol, eps_dev) = split_vol_dev(grid, &eps)?;
    Ok(RateOfStrain { eps, w, eps_vol, eps_dev })
}

/// The two port splits and their pairing identities.
#[derive(Clone, Debug)]
pub struct PortSplit {
    pub eps: BundleForm,
    pub w: BundleForm,
    pub t_sym: BundleForm,
    pub t_asy: BundleForm,
    pub eps_vol: ScalarForm,
    pub eps_dev: BundleForm,
    /// Volumetric stress as a scalar top form.
    pub t_vol: ScalarForm,
    pub t_dev: BundleForm,
    /// ⟨𝒯|∇v⟩ − ⟨𝒯_sym|ε⟩ − ⟨𝒯_asy|ŵ⟩
    pub sym_residual: f64,
    /// ⟨𝒯_sym|ε⟩ − ⟨𝒯_vol|ε_vol⟩ − ⟨𝒯_dev|ε_dev⟩
    pub voldev_residual: f64,
    pub total_power: f64,
}

pub fn decompose_stress_port(grid: &Grid, grad_v: &BundleForm, t: &BundleForm, metric: &MetricField) -> Result<PortSplit> {
    let n = grid.n();
    t.expect(n - 1, ValueKind::Covector, "stress port")?;
    let (eps, w) = split_sym_asym(grid, grad_v, metric)?;
    let (eps_vol, eps_dev) = split_vol_dev(grid, &eps)?;
    let mut t_sym = BundleForm::zeros(grid, n - 1, ValueKind::Covector);
    let mut t_asy = t_sym.clone();
    let mut t_dev = t_sym.clone();
    let mut t_vol = ScalarForm::zeros(grid, n);
    for node in 0..grid.len() {
        let (s, a) = project_sym_asym_metric_dual(&DualMixed(t.flux_at(node)), &fiber_metric(metric, node)?)?;
        t_sym.set_flux(node, &s.0);
        t_asy.set_flux(node, &a.0);
        let (tv, td) = project_vol_dev_dual(&s);
        t_vol.set(node, 0, tv);
        t_dev.set_flux(node, &td.0);
    }
    let total = power(grid, grad_v, t)?;
    let p_sym = power(grid, &eps, &t_sym)?;
    let p_asy = power(grid, &w, &t_asy)?;
    let p_vol = integrate(grid, &crate::mesh::wedge(grid, &eps_vol, &t_vol)?)?;
    let p_dev = power(grid, &eps_dev, &t_dev)?;
    Ok(PortSplit {
        sym_residual: total - p_sym - p_asy,
        voldev_residual: p_sym - p_vol - p_dev,
        total_power: total,
        eps,
        w,
        t_sym,
        t_asy,
        eps_vol,
        eps_dev,
        t_vol,
        t_dev,
    })
}

/// 𝒯 = ⋆_c τ for a mixed-tensor stress field.
pub fn stress_extensive(grid: &Grid, tau: &[Mat], metric: &MetricField, mass: &MassForm) -> Result<BundleForm> {
    if tau.len() != grid.len() {
        return Err(PhcmError::Dimension { expected: grid.len(), got: tau.len() });
    }
    let mut t = BundleForm::zeros(grid, 1, ValueKind::Vector);
    for (node, m) in tau.iter().enumerate() {
        t.set_mixed(node, m);
    }
    star_c(grid, &t, metric, mass)
}

/// τ = ⋆_c⁻¹ 𝒯.
pub fn stress_intensive(grid: &Grid, t: &BundleForm, metric: &MetricField, mass: &MassForm) -> Result<Vec<Mat>> {
    t.expect(grid.n() - 1, ValueKind::Covector, "extensive stress")?;
    let tau = star_c_inv(grid, t, metric, mass)?;
    Ok((0..grid.len()).map(|node| tau.mixed_at(node)).collect())
}

/// Intensive stress with its volumetric/deviatoric split, τ = τ_vol I + τ_dev.
#[derive(Clone, Debug)]
pub struct StressIntensive {
    pub tau: Vec<Mat>,
    pub vol: Vec<f64>,
    pub dev: Vec<Mat>,
    /// ĝτ symmetric at every node to 1e−12.
    pub symmetric: bool,
}

impl StressIntensive {
    pub fn new(tau: Vec<Mat>, metric: &MetricField) -> Self {
        let mut vol = Vec::with_capacity(tau.len());
        let mut dev = Vec::with_capacity(tau.len());
        let mut symmetric = true;
        for (node, t) in tau.iter().enumerate() {
            let n = t.n();
            let v = t.trace() / n as f64;
            vol.push(v);
            dev.push(*t - Mat::identity(n) * v);
            let gt = *metric.g(node) * *t;
            if (gt - gt.transpose()).max_abs() > 1e-12 * gt.max_abs().max(1.0) {
                symmetric = false;
            }
        }
        StressIntensive { tau, vol, dev, symmetric }
    }
}

/// max over nodes of |(α⊗β♯)∧̇𝒯 − (β⊗α♯)∧̇𝒯| for 1-forms α, β.
pub fn symmetry_residual(grid: &Grid, t: &BundleForm, metric: &MetricField, alpha: &ScalarForm, beta: &ScalarForm) -> Result<f64> {
    let n = grid.n();
    if alpha.degree() != 1 || beta.degree() != 1 {
        return Err(PhcmError::Degree("symmetry test needs 1-forms".into()));
    }
    let mut worst: f64 = 0.0;
    for node in 0..grid.len() {
        let gi = metric.ginv(node);
        let a: Vec<f64> = (0..n).map(|j| alpha.get(node, j)).collect();
        let b: Vec<f64> = (0..n).map(|j| beta.get(node, j)).collect();
        let (au, bu) = (gi.mulv(&a), gi.mulv(&b));
        let y = t.flux_at(node);
        let x1 = Mat::from_fn(n, |i, j| bu[i] * a[j]);
        let x2 = Mat::from_fn(n, |i, j| au[i] * b[j]);
        worst = worst.max((x1.frob(&y) - x2.frob(&y)).abs());
    }
    Ok(worst)
}

/// Sym/asym split block. Inputs: `f` (∇v), `e_sym`, optional `e_asy`, state `metric`.
/// Outputs: `eps` = π̂_sym f, `w` = π̂_asy f, `T` = π̃_sym e_sym + π̃_asy e_asy.
pub struct SymAsym {
    pub id: String,
    pub grid: Grid,
}

impl SymAsym {
    pub fn new(id: &str, grid: &Grid) -> Self {
        SymAsym { id: id.into(), grid: grid.clone() }
    }
}

impl DiracBlock for SymAsym {
    fn id(&self) -> &str {
        &self.id
    }

    fn inputs(&self) -> Vec<PortSpec> {
        let n = self.grid.n();
        vec![
            PortSpec::new("f", vector_kind(1), Role::Flow),
            PortSpec::new("e_sym", covector_kind(n - 1), Role::Effort),
            PortSpec::new("e_asy", covector_kind(n - 1), Role::Effort).optional(),
            PortSpec::new("metric", PortKind::Metric, Role::State),
        ]
    }

    fn outputs(&self) -> Vec<OutputSpec> {
        let n = self.grid.n();
        vec![
            OutputSpec::new("eps", vector_kind(1), Role::Flow, &["f", "metric"]),
            OutputSpec::new("w", vector_kind(1), Role::Flow, &["f", "metric"]),
            OutputSpec::new("T", covector_kind(n - 1), Role::Effort, &["e_sym", "e_asy", "metric"]),
        ]
    }

    fn output(&self, name: &str, inputs: &Ports) -> Result<PortValue> {
        let m = get_metric(inputs, "metric")?;
        match name {
            "eps" | "w" => {
                let (s, a) = split_sym_asym(&self.grid, get_bundle(inputs, "f")?, m)?;
                Ok(PortValue::Bundle(if name == "eps" { s } else { a }))
            }
            "T" => {
                let es = get_bundle(inputs, "e_sym")?;
                let ea = get_bundle(inputs, "e_asy").ok();
                let mut t = BundleForm::zeros(&self.grid, self.grid.n() - 1, ValueKind::Covector);
                for node in 0..self.grid.len() {
                    let g = fiber_metric(m, node)?;
                    let (s, _) = project_sym_asym_metric_dual(&DualMixed(es.flux_at(node)), &g)?;
                    let mut y = s.0;
                    if let Some(ea) = ea {
                        let (_, a) = project_sym_asym_metric_dual(&DualMixed(ea.flux_at(node)), &g)?;
                        y += a.0;
                    }
                    t.set_flux(node, &y);
                }
                Ok(PortValue::Bundle(t))
            }
            _ => Err(PhcmError::Port(format!("{}: no output `{name}`", self.id))),
        }
    }

    fn audit(&self, inputs: &Ports, outputs: &Ports) -> Result<Vec<BlockAudit>> {
        let g = &self.grid;
        let mut terms = vec![
            power(g, get_bundle(inputs, "f")?, get_bundle(outputs, "T")?)?,
            -power(g, get_bundle(outputs, "eps")?, get_bundle(inputs, "e_sym")?)?,
        ];
        if let Ok(ea) = get_bundle(inputs, "e_asy") {
            terms.push(-power(g, get_bundle(outputs, "w")?, ea)?);
        }
        Ok(vec![BlockAudit::balance(&self.id, "sym-asym", TolClass::Algebraic, &terms, 0.0)])
    }
}

/// Vol/dev split block. Inputs: `eps`, `e_vol` (scalar top form), `e_dev`.
/// Outputs: `eps_vol` = tr ε, `eps_dev`, `T` = e_vol I + dev(e_dev).
pub struct VolDev {
    pub id: String,
    pub grid: Grid,
}

impl VolDev {
    pub fn new(id: &str, grid: &Grid) -> Self {
        VolDev { id: id.into(), grid: grid.clone() }
    }
}

impl DiracBlock for VolDev {
    fn id(&self) -> &str {
        &self.id
    }

    fn inputs(&self) -> Vec<PortSpec> {
        let n = self.grid.n();
        vec![
            PortSpec::new("eps", vector_kind(1), Role::Flow),
            PortSpec::new("e_vol", PortKind::Scalar { degree: n }, Role::Effort),
            PortSpec::new("e_dev", covector_kind(n - 1), Role::Effort),
        ]
    }

    fn outputs(&self) -> Vec<OutputSpec> {
        let n = self.grid.n();
        vec![
            OutputSpec::new("eps_vol", PortKind::Scalar { degree: 0 }, Role::Flow, &["eps"]),
            OutputSpec::new("eps_dev", vector_kind(1), Role::Flow, &["eps"]),
            OutputSpec::new("T", covector_kind(n - 1), Role::Effort, &["e_vol", "e_dev"]),
        ]
    }

    fn output(&self, name: &str, inputs: &Ports) -> Result<PortValue> {
        match name {
            "eps_vol" | "eps_dev" => {
                let (v, d) = split_vol_dev(&self.grid, get_bundle(inputs, "eps")?)?;
                Ok(if name == "eps_vol" { PortValue::Scalar(v) } else { PortValue::Bundle(d) })
            }
            "T" => {
                let ev = get_scalar(inputs, "e_vol")?;
                let ed = get_bundle(inputs, "e_dev")?;
                let n = self.grid.n();
                let mut t = BundleForm::zeros(&self.grid, n - 1, ValueKind::Covector);
                for node in 0..self.grid.len() {
                    let (_, d) = project_vol_dev_dual(&DualMixed(ed.flux_at(node)));
                    t.set_flux(node, &(d.0 + Mat::identity(n) * ev.get(node, 0)));
                }
                Ok(PortValue::Bundle(t))
            }
            _ => Err(PhcmError::Port(format!("{}: no output `{name}`", self.id))),
        }
    }

    fn audit(&self, inputs: &Ports, outputs: &Ports) -> Result<Vec<BlockAudit>> {
        let g = &self.grid;
        let p_vol = integrate(g, &crate::mesh::wedge(g, get_scalar(outputs, "eps_vol")?, get_scalar(inputs, "e_vol")?)?)?;
        let terms = [
            power(g, get_bundle(inputs, "eps")?, get_bundle(outputs, "T")?)?,
            -p_vol,
            -power(g, get_bundle(outputs, "eps_dev")?, get_bundle(inputs, "e_dev")?)?,
        ];
        Ok(vec![BlockAudit::balance(&self.id, "vol-dev", TolClass::Algebraic, &terms, 0.0)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Topology;
    use crate::net::evaluate_block;
    use std::f64::consts::PI;

    fn smooth_v(g: &Grid, s: f64) -> BundleForm {
        BundleForm::vector_field(g, |i| {
            let x = g.x(i);
            [(1.3 * x[0] + s).sin() * (0.7 * x[1]).cos(), (x[0] * x[1] + s).cos(), 0.0]
        })
    }

    fn smooth_t(g: &Grid) -> BundleForm {
        let mut t = BundleForm::zeros(g, g.n() - 1, ValueKind::Covector);
        for node in 0..g.len() {
            let x = g.x(node);
            let m = Mat::from_fn(g.n(), |i, j| ((i + 2 * j) as f64 * 0.4 + x[0] - 0.5 * x[1]).sin() + 0.2 * x[0] * x[1]);
            t.set_flux(node, &m);
        }
        t
    }

    fn metric(g: &Grid) -> MetricField {
        MetricField::from_fn(g, |x| Mat::from_rows(&[&[1.2 + 0.2 * x[0], 0.1 * x[1]], &[0.1 * x[1], 0.9 + 0.1 * x[0] * x[1]]])).unwrap()
    }

    fn partitioned(nc: usize) -> Grid {
        Grid::new(&[nc, nc], &[1.0, 0.8], &[Topology::Bounded; 2])
            .unwrap()
            .with_face(1, 0, FacePort::Traction)
            .unwrap()
            .with_face(1, 1, FacePort::Traction)
            .unwrap()
    }

    #[test]
    fn zero_inputs_give_zero_outputs() {
        let g = partitioned(8);
        let s = stokes_dirac_apply(&g, &MetricField::euclidean(&g), &BundleForm::zeros(&g, 0, ValueKind::Vector), &BundleForm::zeros(&g, 1, ValueKind::Covector), None, None)
            .unwrap();
        assert_eq!(s.grad_v.max_abs() + s.div_t.max_abs() + s.e_b1.max_abs() + s.f_b2.max_abs(), 0.0);
    }

    #[test]
    fn constant_stress_has_zero_divergence() {
        let g = partitioned(8);
        let mut t = BundleForm::zeros(&g, 1, ValueKind::Covector);
        for node in 0..g.len() {
            t.set_flux(node, &Mat::from_rows(&[&[1.0, 2.0], &[-0.5, 3.0]]));
        }
        let v = smooth_v(&g, 0.1);
        let s = stokes_dirac_apply(&g, &MetricField::euclidean(&g), &v, &t, None, None).unwrap();
        assert!(s.div_t.max_abs() < 1e-12);
        let terms = stokes_balance_terms(&g, &s).unwrap();
        assert!(terms[1].abs() < 1e-12);
    }

    #[test]
    fn stokes_balance_is_second_order() {
        let res = |nc: usize| {
            let g = partitioned(nc);
            let s = stokes_dirac_apply(&g, &metric(&g), &smooth_v(&g, 0.3), &smooth_t(&g), None, None).unwrap();
            stokes_balance_terms(&g, &s).unwrap().iter().sum::<f64>().abs()
        };
        let (a, b, c) = (res(16), res(32), res(64));
        assert!((a / b).log2() > 1.9 && (b / c).log2() > 1.9, "{a} {b} {c}");
    }

    #[test]
    fn boundary_inputs_are_imposed_and_checked() {
        let g = partitioned(8);
        let mut vb = BoundaryField::zeros(&g, 2);
        let mut tb = BoundaryField::zeros(&g, 2);
        for f in vb.faces.iter_mut().filter(|f| f.port == FacePort::Velocity) {
            f.values.iter_mut().for_each(|v| *v = 0.25);
        }
        for f in tb.faces.iter_mut().filter(|f| f.port == FacePort::Traction) {
            f.values.iter_mut().for_each(|v| *v = -1.5);
        }
        let s = stokes_dirac_apply(&g, &MetricField::euclidean(&g), &smooth_v(&g, 0.0), &smooth_t(&g), Some(&vb), Some(&tb)).unwrap();
        let tr = trace_normal(&g, &s.t).unwrap();
        for f in tr.faces.iter().filter(|f| f.port == FacePort::Traction) {
            for (k, &node) in f.nodes.iter().enumerate() {
                if g.node_port(node) == Some(FacePort::Traction) {
                    assert!((f.value(k, 0) + 1.5).abs() < 1e-14);
                }
            }
        }
        let vt = trace_vector(&g, &s.v).unwrap();
        assert!(vt.faces.iter().filter(|f| f.port == FacePort::Velocity).all(|f| f.values.iter().all(|v| *v == 0.25)));
        // traction on a velocity face is rejected
        let mut bad = BoundaryField::zeros(&g, 2);
        bad.faces[0].values[0] = 1.0;
        assert!(matches!(stokes_dirac_apply(&g, &MetricField::euclidean(&g), &smooth_v(&g, 0.0), &smooth_t(&g), None, Some(&bad)), Err(PhcmError::Port(_))));
    }

    #[test]
    fn stokes_block_reports_mesh_audit() {
        let g = partitioned(32);
        let mut p = Ports::new();
        p.insert("f_d".into(), PortValue::Bundle(smooth_v(&g, 0.2)));
        p.insert("e_s".into(), PortValue::Bundle(smooth_t(&g)));
        p.insert("metric".into(), PortValue::Metric(metric(&g)));
        let (out, audit) = evaluate_block(&StokesDirac::new("s", &g), &p).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(audit.entries[0].class, TolClass::Mesh);
        assert!(!audit.entries[0].flagged);
    }

    #[test]
    fn rate_of_strain_examples() {
        let g = Grid::periodic(&[16, 16], &[1.0, 1.0]).unwrap();
        let e = MetricField::euclidean(&g);
        let r = rate_of_strain(&g, &BundleForm::vector_field(&g, |_| [0.3, -1.0, 0.0]), &e).unwrap();
        assert!(r.eps.max_abs() < 1e-14 && r.w.max_abs() < 1e-14);
        let b = Grid::bounded(&[8], &[1.0]).unwrap();
        let r = rate_of_strain(&b, &BundleForm::vector_field(&b, |i| [b.x(i)[0], 0.0, 0.0]), &MetricField::euclidean(&b)).unwrap();
        for node in 0..b.len() {
            assert!((r.eps.get(node, 0, 0) - 1.0).abs() < 1e-13 && (r.eps_vol.get(node, 0) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn rotation_is_strain_free_in_the_interior() {
        let worst = |nc: usize| {
            let g = Grid::bounded(&[nc, nc], &[1.0, 1.0]).unwrap();
            let v = BundleForm::vector_field(&g, |i| {
                let x = g.x(i);
                [-(x[1] - 0.5), x[0] - 0.5, 0.0]
            });
            let r = rate_of_strain(&g, &v, &MetricField::euclidean(&g)).unwrap();
            assert!(r.w.max_abs() > 0.9);
            r.eps.max_abs()
        };
        assert!(worst(8) < 1e-13 && worst(16) < 1e-13);
    }

    #[test]
    fn trace_of_strain_is_divergence() {
        let g = Grid::periodic(&[32, 32], &[1.0, 1.0]).unwrap();
        let m = MetricField::from_fn(&g, |x| Mat::diag(&[1.0 + 0.2 * (2.0 * PI * x[0]).sin(), 1.0])).unwrap();
        let v = BundleForm::vector_field(&g, |i| {
            let x = g.x(i);
            [(2.0 * PI * x[1]).sin(), (2.0 * PI * x[0]).cos(), 0.0]
        });
        let r = rate_of_strain(&g, &v, &m).unwrap();
        // div v = (1/√g) ∂_i(√g v^i)
        let sq: Vec<f64> = (0..g.len()).map(|i| m.sqrt_det(i)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let x = g.x(i);
            let d = 0.2 * 2.0 * PI * (2.0 * PI * x[0]).cos() / (2.0 * sq[i] * sq[i]) * v.get(i, 0, 0);
            worst = worst.max((r.eps_vol.get(i, 0) - d).abs());
        }
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn port_splits_hold_to_roundoff() {
        let g = Grid::periodic(&[6, 7], &[1.0, 1.0]).unwrap();
        let m = metric(&g);
        let grad = covariant_gradient(&g, &smooth_v(&g, 0.4), &m).unwrap();
        let p = decompose_stress_port(&g, &grad, &smooth_t(&g), &m).unwrap();
        assert!(p.sym_residual.abs() < 1e-12 * p.total_power.abs().max(1.0));
        assert!(p.voldev_residual.abs() < 1e-12);
    }

    #[test]
    fn symmetric_stress_sees_only_strain() {
        let g = Grid::periodic(&[8, 8], &[1.0, 1.0]).unwrap();
        let m = metric(&g);
        let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.3 * x[0])).unwrap();
        let tau: Vec<Mat> = (0..g.len())
            .map(|i| {
                let s = Mat::from_rows(&[&[1.0 + g.x(i)[0], 0.3], &[0.3, -0.4]]);
                m.ginv(i).clone() * s
            })
            .collect();
        let t = stress_extensive(&g, &tau, &m, &mass).unwrap();
        let grad = covariant_gradient(&g, &smooth_v(&g, 0.1), &m).unwrap();
        let p = decompose_stress_port(&g, &grad, &t, &m).unwrap();
        let p_sym = power(&g, &p.eps, &t).unwrap();
        assert!((p.total_power - p_sym).abs() < 1e-12);
        assert!(p.t_asy.max_abs() < 1e-12);
        let alpha = ScalarForm::from_data(&g, 1, (0..g.len() * 2).map(|k| (k as f64 * 0.37).sin()).collect()).unwrap();
        let beta = ScalarForm::from_data(&g, 1, (0..g.len() * 2).map(|k| (k as f64 * 0.91).cos()).collect()).unwrap();
        assert!(symmetry_residual(&g, &t, &m, &alpha, &beta).unwrap() < 1e-12);
        assert!(StressIntensive::new(stress_intensive(&g, &t, &m, &mass).unwrap(), &m).symmetric);
    }

    #[test]
    fn extensive_intensive_round_trip_and_identity_power() {
        let g = Grid::periodic(&[8, 8], &[1.0, 1.0]).unwrap();
        let m = metric(&g);
        let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.3 * x[1])).unwrap();
        let tau: Vec<Mat> = (0..g.len()).map(|i| Mat::from_fn(2, |a, b| ((a * 2 + b + i) as f64).sin())).collect();
        let back = stress_intensive(&g, &stress_extensive(&g, &tau, &m, &mass).unwrap(), &m, &mass).unwrap();
        let err = tau.iter().zip(&back).map(|(a, b)| (*a - *b).max_abs()).fold(0.0, f64::max);
        assert!(err < 1e-13, "{err}");
        // τ = I, unit density, Euclidean: power = ∫ tr ε μ
        let e = MetricField::euclidean(&g);
        let one = MassForm::uniform(&g, 1.0).unwrap();
        let t = stress_extensive(&g, &vec![Mat::identity(2); g.len()], &e, &one).unwrap();
        let r = rate_of_strain(&g, &smooth_v(&g, 0.2), &e).unwrap();
        let lhs = power(&g, &r.eps, &t).unwrap();
        let rhs = g.quadrature(&r.eps_vol.component(0));
        assert!((lhs - rhs).abs() < 1e-13);
        let zero = stress_extensive(&g, &vec![Mat::zeros(2); g.len()], &m, &mass).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn split_blocks_balance() {
        let g = Grid::periodic(&[6, 6], &[1.0, 1.0]).unwrap();
        let m = metric(&g);
        let grad = covariant_gradient(&g, &smooth_v(&g, 0.4), &m).unwrap();
        let mut p = Ports::new();
        p.insert("f".into(), PortValue::Bundle(grad.clone()));
        p.insert("e_sym".into(), PortValue::Bundle(smooth_t(&g)));
        p.insert("e_asy".into(), PortValue::Bundle(smooth_t(&g).scaled(-0.3)));
        p.insert("metric".into(), PortValue::Metric(m.clone()));
        let (out, audit) = evaluate_block(&SymAsym::new("sa", &g), &p).unwrap();
        assert!(audit.flagged().is_empty(), "{:?}", audit);
        let mut q = Ports::new();
        q.insert("eps".into(), out["eps"].clone());
        q.insert("e_vol".into(), PortValue::Scalar(ScalarForm::top(&g, g.sample(|x| x[0] - x[1])).unwrap()));
        q.insert("e_dev".into(), PortValue::Bundle(smooth_t(&g)));
        let (_, audit) = evaluate_block(&VolDev::new("vd", &g), &q).unwrap();
        assert!(audit.flagged().is_empty(), "{:?}", audit);
    }
}
