//! A scenario turned into a right-hand side: state packing, the port network, boundary
//! schedules and the energy bookkeeping of one representation.

use super::config::{ModelSpec, Scenario, Schedule};
use crate::constitutive::{evaluate_hyperelastic, fluid_network, newtonian_efforts, project_divergence_free, Eos, IncompressibilityClosure, Newtonian, Solid};
use crate::error::{PhcmError, Result};
use crate::fiber::{check_spd, Mat};
use crate::kinetic::{convective_metric_derivative, elastic_network, metric_rate_matrices, spatial_mass_derivative, Rep};
use crate::mesh::{star_c_inv, BoundaryField, BundleForm, FacePort, Grid, MassForm, MetricField, Snapshot, ValueKind};
use crate::net::{Network, PortValue, Ports, PowerAudit};
use crate::state::deformation_gradient;

/// Storage closure of the stress port.
#[derive(Clone, Debug)]
pub enum Closure {
    Solid(Solid),
    Fluid { model: Newtonian, exact: bool },
}

/// Configuration-like first state variable of a representation.
#[derive(Clone, Debug)]
pub enum First {
    Disp(BundleForm),
    Mass(MassForm),
    Metric(MetricField),
}

#[derive(Clone, Debug)]
pub struct Unpacked {
    pub first: First,
    pub momentum: BundleForm,
}

/// Rates and power terms from one network evaluation.
#[derive(Clone, Debug)]
pub struct StageEval {
    pub rate: Vec<f64>,
    /// Power supplied through the boundary ports.
    pub p_boundary: f64,
    pub dissipation: f64,
    pub audit: PowerAudit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energies {
    pub h_kin: f64,
    pub psi_or_u: f64,
    pub mass_total: f64,
}

pub struct System {
    pub rep: Rep,
    pub grid: Grid,
    pub closure: Closure,
    pub ambient: Mat,
    pub ambient_field: MetricField,
    pub reference: MetricField,
    /// μ̃ = μ̂ on the body; unused in the spatial representation.
    pub body_mass: MassForm,
    network: Network,
    flux_port: bool,
    schedules: Vec<Option<Schedule>>,
}

/// Projection tolerance relative to the size of the divergence being removed.
const PROJECTION_RTOL: f64 = 1e-13;

fn euclidean_body(grid: &Grid) -> MetricField {
    MetricField::euclidean(grid)
}

impl System {
    pub fn new(s: &Scenario) -> Result<Self> {
        let grid = s.build_grid()?;
        let n = grid.n();
        let ambient = s.ambient()?;
        let ambient_field = MetricField::from_fn(&grid, |_| ambient)?;
        let big_g = s.reference()?;
        let reference = MetricField::from_fn(&grid, |_| big_g)?;
        let rho = s.initial.density.sample(&grid);
        let body_mass = match s.representation {
            Rep::Spatial => MassForm::uniform(&grid, 1.0)?,
            _ => MassForm::new(&grid, rho).map_err(|e| PhcmError::Config { field: "initial.density".into(), msg: e.to_string() })?,
        };
        let closure = match &s.model {
            ModelSpec::Solid { model, penalty } => Closure::Solid(Solid { model: model.clone(), penalty: *penalty }),
            ModelSpec::Fluid { kappa, theta, eos, eos_table, incompressibility } => {
                let eos = match (eos, eos_table) {
                    (Some(e), _) => e.clone(),
                    (None, Some(p)) => Eos::from_csv(p)?,
                    (None, None) => return Err(PhcmError::Config { field: "model.eos".into(), msg: "missing".into() }),
                };
                let model = Newtonian { kappa: *kappa, theta: *theta, eos };
                model.validate()?;
                Closure::Fluid { model, exact: *incompressibility == Some(IncompressibilityClosure::ExactMultiplier) }
            }
        };
        let flux_port = s.representation == Rep::Spatial && !grid.all_periodic();
        let (network, _) = match &closure {
            Closure::Solid(_) => elastic_network(s.representation, &grid, flux_port)?,
            Closure::Fluid { model, .. } => fluid_network(s.representation, &grid, model.clone(), flux_port)?,
        };
        let schedules = grid.faces().iter().map(|&(a, side, _)| s.schedule(a, side).cloned()).collect();
        let _ = n;
        Ok(System { rep: s.representation, grid, closure, ambient, ambient_field, reference, body_mass, network, flux_port, schedules })
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    fn first_len(&self) -> usize {
        let (n, len) = (self.n(), self.grid.len());
        match self.rep {
            Rep::Material => n * len,
            Rep::Spatial => len,
            Rep::Convective => n * n * len,
        }
    }

    pub fn state_len(&self) -> usize {
        self.first_len() + self.n() * self.grid.len()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Build the initial state vector from the scenario's profiles.
    pub fn initial_state(&self, s: &Scenario) -> Result<Vec<f64>> {
        let g = &self.grid;
        let n = self.n();
        let vel: Vec<Vec<f64>> = s.initial.velocity.iter().map(|p| p.sample(g)).collect();
        let v = BundleForm::vector_field(g, |i| {
            let mut u = [0.0; 3];
            for a in 0..n {
                u[a] = vel[a][i];
            }
            u
        });
        let disp = match &s.initial.displacement {
            Some(d) => {
                let comps: Vec<Vec<f64>> = d.iter().map(|p| p.sample(g)).collect();
                BundleForm::vector_field(g, |i| {
                    let mut u = [0.0; 3];
                    for a in 0..n {
                        u[a] = comps[a][i];
                    }
                    u
                })
            }
            None => BundleForm::zeros(g, 0, ValueKind::Vector),
        };
        let lower = |rho: f64, metric: &Mat, u: [f64; 3]| -> [f64; 3] {
            let l = metric.mulv(&u);
            [rho * l[0], rho * l[1], rho * l[2]]
        };
        let mut x = Vec::with_capacity(self.state_len());
        let mut momentum = BundleForm::zeros(g, n, ValueKind::Covector);
        match self.rep {
            Rep::Material => {
                deformation_gradient(g, &disp)?;
                x.extend(disp.data());
                for node in 0..g.len() {
                    momentum.set_vec(node, &lower(self.body_mass.density()[node], &self.ambient, v.vec_at(node))[..n]);
                }
            }
            Rep::Spatial => {
                let rho = s.initial.density.sample(g);
                MassForm::new(g, rho.clone()).map_err(|e| PhcmError::Config { field: "initial.density".into(), msg: e.to_string() })?;
                for node in 0..g.len() {
                    momentum.set_vec(node, &lower(rho[node], &self.ambient, v.vec_at(node))[..n]);
                }
                x.extend(rho);
            }
            Rep::Convective => {
                let f = deformation_gradient(g, &disp)?;
                for node in 0..g.len() {
                    let gh = f[node].transpose() * self.ambient * f[node];
                    for i in 0..n {
                        for j in 0..n {
                            x.push(gh.get(i, j));
                        }
                    }
                    // v̂ = F⁻¹ṽ, ℳ̂ = ρ̂_m ĝ v̂
                    let vh = f[node].inv()?.mulv(&v.vec_at(node));
                    momentum.set_vec(node, &lower(self.body_mass.density()[node], &gh, vh)[..n]);
                }
            }
        }
        x.extend(momentum.data());
        self.impose_velocity(0.0, &mut x)?;
        Ok(x)
    }

    pub fn unpack(&self, x: &[f64], step: usize) -> Result<Unpacked> {
        if x.len() != self.state_len() {
            return Err(PhcmError::Dimension { expected: self.state_len(), got: x.len() });
        }
        let g = &self.grid;
        let n = self.n();
        let (a, b) = x.split_at(self.first_len());
        let momentum = BundleForm::from_data(g, n, ValueKind::Covector, b.to_vec())?;
        let first = match self.rep {
            Rep::Material => First::Disp(BundleForm::from_data(g, 0, ValueKind::Vector, a.to_vec())?),
            Rep::Spatial => First::Mass(MassForm::new(g, a.to_vec())?),
            Rep::Convective => {
                let mut gs = Vec::with_capacity(g.len());
                for node in 0..g.len() {
                    let m = Mat::from_fn(n, |i, j| a[node * n * n + i * n + j]);
                    if check_spd(&m).is_err() {
                        return Err(PhcmError::SpdLoss { node, step });
                    }
                    gs.push(m);
                }
                First::Metric(MetricField::new(g, gs)?)
            }
        };
        Ok(Unpacked { first, momentum })
    }

    /// The velocity field of a state (material, spatial or convective components).
    pub fn velocity(&self, u: &Unpacked) -> Result<BundleForm> {
        match &u.first {
            First::Disp(_) => star_c_inv(&self.grid, &u.momentum, &self.ambient_field, &self.body_mass),
            First::Mass(m) => star_c_inv(&self.grid, &u.momentum, &self.ambient_field, m),
            First::Metric(gh) => star_c_inv(&self.grid, &u.momentum, gh, &self.body_mass),
        }
    }

    /// Metric in which momentum is lowered, and the mass form, at a node.
    fn lowering(&self, u: &Unpacked, node: usize) -> (Mat, f64) {
        match &u.first {
            First::Disp(_) => (self.ambient, self.body_mass.density()[node]),
            First::Mass(m) => (self.ambient, m.density()[node]),
            First::Metric(gh) => (*gh.g(node), self.body_mass.density()[node]),
        }
    }

    /// Velocity inputs at `t` on ∂B₁ and traction inputs on ∂B₂.
    pub fn boundary_inputs(&self, t: f64) -> (BoundaryField, BoundaryField) {
        let n = self.n();
        let mut vb = BoundaryField::zeros(&self.grid, n);
        let mut tb = BoundaryField::zeros(&self.grid, n);
        for (k, sched) in self.schedules.iter().enumerate() {
            let Some(s) = sched else { continue };
            let val = s.value(t);
            let target = match vb.faces[k].port {
                FacePort::Velocity => &mut vb.faces[k],
                FacePort::Traction => &mut tb.faces[k],
            };
            for node in 0..target.nodes.len() {
                for c in 0..n {
                    target.values[node * n + c] = val[c];
                }
            }
        }
        (vb, tb)
    }

    /// Prescribed (value, rate) at every velocity-face node; later faces win at shared nodes.
    fn velocity_nodes(&self, t: f64) -> Vec<(usize, [f64; 3], [f64; 3])> {
        let n = self.n();
        let mut out: Vec<(usize, [f64; 3], [f64; 3])> = Vec::new();
        for (k, (axis, side, _)) in self.grid.faces().into_iter().enumerate() {
            if self.grid.face_port(axis, side) != FacePort::Velocity {
                continue;
            }
            let (mut val, mut rate) = ([0.0; 3], [0.0; 3]);
            if let Some(s) = &self.schedules[k] {
                val[..n].copy_from_slice(&s.value(t));
                rate[..n].copy_from_slice(&s.rate(t));
            }
            for node in self.grid.face_nodes(axis, side) {
                match out.iter_mut().find(|e| e.0 == node) {
                    Some(e) => *e = (node, val, rate),
                    None => out.push((node, val, rate)),
                }
            }
        }
        out
    }

    /// Overwrite momentum (and displacement rate) so velocity-face nodes carry the schedule.
    pub fn impose_velocity(&self, t: f64, x: &mut [f64]) -> Result<()> {
        let nodes = self.velocity_nodes(t);
        if nodes.is_empty() {
            return Ok(());
        }
        let u = self.unpack(x, 0)?;
        let mut m = u.momentum.clone();
        for &(node, val, _) in &nodes {
            let (metric, rho) = self.lowering(&u, node);
            let l = metric.mulv(&val);
            m.set_vec(node, &[rho * l[0], rho * l[1], rho * l[2]][..self.n()]);
        }
        let off = self.first_len();
        x[off..].copy_from_slice(m.data());
        Ok(())
    }

    fn stress_externals(&self, ext: &mut Ports, mass: &MassForm, metric: &MetricField) -> Result<()> {
        match &self.closure {
            Closure::Solid(solid) => {
                let ev = evaluate_hyperelastic(solid, &self.grid, metric, &self.reference, mass)?;
                ext.insert("voldev.e_vol".into(), PortValue::Scalar(ev.e_vol));
                ext.insert("voldev.e_dev".into(), PortValue::Bundle(ev.e_dev));
            }
            Closure::Fluid { .. } => {
                ext.insert("viscous.mass".into(), PortValue::Mass(mass.clone()));
                ext.insert("viscous.metric".into(), PortValue::Metric(metric.clone()));
            }
        }
        ext.insert("stokes.metric".into(), PortValue::Metric(metric.clone()));
        ext.insert("split.metric".into(), PortValue::Metric(metric.clone()));
        Ok(())
    }

    /// Two-point stress 𝒯̃ with flux ρ̃ g F τ ĝ⁻¹ and the stored energy, for a displacement.
    pub fn material_stress(&self, disp: &BundleForm) -> Result<(BundleForm, f64)> {
        let Closure::Solid(solid) = &self.closure else {
            return Err(PhcmError::Constitutive("material representation needs a solid".into()));
        };
        let g = &self.grid;
        let n = self.n();
        let f = deformation_gradient(g, disp)?;
        let mut t = BundleForm::zeros(g, n - 1, ValueKind::Covector);
        let mut dens = vec![0.0; g.len()];
        for node in 0..g.len() {
            let gh = f[node].transpose() * self.ambient * f[node];
            let big_g = self.reference.g(node);
            let tau = solid.stress(&gh, big_g)?;
            let rho = self.body_mass.density()[node];
            t.set_flux(node, &(self.ambient * f[node] * tau * gh.inv()? * rho));
            dens[node] = rho * solid.energy_density(&gh, big_g)?;
        }
        Ok((t, g.quadrature(&dens)))
    }

    /// Evaluate the network on a state. With `constrain`, velocity-face nodes follow their
    /// schedules and the exact incompressibility projection is applied to the rates.
    pub fn eval(&self, t: f64, x: &[f64], step: usize, constrain: bool) -> Result<StageEval> {
        let g = &self.grid;
        let n = self.n();
        let u = self.unpack(x, step)?;
        let v = self.velocity(&u)?;
        let (vb, tb) = self.boundary_inputs(t);
        let mut ext = Ports::new();
        ext.insert("kinetic.e_M".into(), PortValue::Bundle(v.clone()));
        if !g.all_periodic() {
            ext.insert("stokes.f_b1".into(), PortValue::Boundary(vb.clone()));
            ext.insert("stokes.e_b2".into(), PortValue::Boundary(tb.clone()));
        }
        let (viscous_mass, viscous_metric) = match &u.first {
            First::Disp(d) => {
                let (stress, _) = self.material_stress(d)?;
                ext.insert("stokes.e_s".into(), PortValue::Bundle(stress));
                ext.insert("stokes.metric".into(), PortValue::Metric(euclidean_body(g)));
                (None, None)
            }
            First::Mass(m) => {
                ext.insert("kinetic.e_mu".into(), PortValue::Scalar(spatial_mass_derivative(g, &v, &self.ambient_field)));
                ext.insert("kinetic.mass".into(), PortValue::Mass(m.clone()));
                ext.insert("kinetic.momentum".into(), PortValue::Bundle(u.momentum.clone()));
                ext.insert("kinetic.metric".into(), PortValue::Metric(self.ambient_field.clone()));
                self.stress_externals(&mut ext, m, &self.ambient_field)?;
                (Some(m.clone()), Some(self.ambient_field.clone()))
            }
            First::Metric(gh) => {
                ext.insert("kinetic.e_g".into(), PortValue::Bundle(convective_metric_derivative(g, &v, &self.body_mass)));
                ext.insert("kinetic.metric".into(), PortValue::Metric(gh.clone()));
                ext.insert("kinetic.momentum".into(), PortValue::Bundle(u.momentum.clone()));
                self.stress_externals(&mut ext, &self.body_mass, gh)?;
                (Some(self.body_mass.clone()), Some(gh.clone()))
            }
        };
        let ev = self.network.evaluate(&ext)?;

        let mut p_boundary = 0.0;
        if !g.all_periodic() {
            p_boundary += ev.boundary("stokes.e_b1")?.pair(&vb, Some(FacePort::Velocity))?;
            p_boundary += tb.pair(ev.boundary("stokes.f_b2")?, Some(FacePort::Traction))?;
            if self.flux_port {
                p_boundary += ev.boundary("kinetic.e_b")?.pair(ev.boundary("kinetic.f_b")?, None)?;
            }
        }
        let dissipation = match (&self.closure, viscous_mass, viscous_metric) {
            (Closure::Fluid { model, .. }, Some(m), Some(metric)) => {
                newtonian_efforts(g, model, ev.scalar("voldev.eps_vol")?, ev.bundle("voldev.eps_dev")?, &m, &metric)?.dissipation
            }
            _ => 0.0,
        };

        let mut m_rate = ev.bundle("kinetic.f_M")?.clone();
        let mut first_rate: Vec<f64> = match self.rep {
            Rep::Material => ev.bundle("kinetic.f_phi")?.data().to_vec(),
            Rep::Spatial => ev.scalar("kinetic.f_mu")?.data().to_vec(),
            Rep::Convective => metric_rate_matrices(ev.bundle("kinetic.f_g")?)
                .iter()
                .flat_map(|m| (0..n * n).map(move |k| m.get(k / n, k % n)))
                .collect(),
        };

        if constrain {
            if let (Closure::Fluid { exact: true, .. }, First::Mass(m)) = (&self.closure, &u.first) {
                self.project_rate(m, &v, &first_rate, &mut m_rate)?;
            }
            for (node, val, rate) in self.velocity_nodes(t) {
                let (metric, rho) = self.lowering(&u, node);
                let mut r = metric.mulv(&rate);
                match self.rep {
                    Rep::Material => {
                        for i in 0..n {
                            first_rate[node * n + i] = val[i];
                        }
                    }
                    Rep::Spatial => {
                        let l = metric.mulv(&val);
                        for i in 0..n {
                            r[i] += first_rate[node] / rho * l[i];
                        }
                    }
                    Rep::Convective => {
                        let gdot = Mat::from_fn(n, |i, j| first_rate[node * n * n + i * n + j]);
                        let l = gdot.mulv(&val);
                        for i in 0..n {
                            r[i] += l[i];
                        }
                    }
                }
                m_rate.set_vec(node, &[rho * r[0], rho * r[1], rho * r[2]][..n]);
            }
        }
        let mut rate = first_rate;
        rate.extend(m_rate.data());
        Ok(StageEval { rate, p_boundary, dissipation, audit: ev.audit })
    }

    /// Replace the momentum rate by the one whose velocity rate is discretely divergence-free.
    fn project_rate(&self, mass: &MassForm, v: &BundleForm, rho_rate: &[f64], m_rate: &mut BundleForm) -> Result<()> {
        let g = &self.grid;
        let n = self.n();
        let rho = mass.density();
        let mut a = BundleForm::zeros(g, 0, ValueKind::Vector);
        for node in 0..g.len() {
            let (mr, vv) = (m_rate.vec_at(node), v.vec_at(node));
            let acc: Vec<f64> = (0..n).map(|i| (mr[i] - rho_rate[node] * vv[i]) / rho[node]).collect();
            a.set_vec(node, &acc);
        }
        let scale = crate::constitutive::max_divergence(g, &a).max(1.0);
        let p = project_divergence_free(g, &a, rho, PROJECTION_RTOL * scale)?;
        for node in 0..g.len() {
            let (ap, vv) = (p.velocity.vec_at(node), v.vec_at(node));
            let mr: Vec<f64> = (0..n).map(|i| rho[node] * ap[i] + rho_rate[node] * vv[i]).collect();
            m_rate.set_vec(node, &mr);
        }
        Ok(())
    }

    /// Remove accumulated roundoff divergence from a spatial velocity (exact closure only).
    pub fn clean_divergence(&self, x: &mut [f64], tol: f64) -> Result<f64> {
        let (Closure::Fluid { exact: true, .. }, Rep::Spatial) = (&self.closure, self.rep) else { return Ok(0.0) };
        let u = self.unpack(x, 0)?;
        let First::Mass(m) = &u.first else { unreachable!() };
        let v = self.velocity(&u)?;
        let div = crate::constitutive::max_divergence(&self.grid, &v);
        if div <= tol {
            return Ok(div);
        }
        let p = project_divergence_free(&self.grid, &v, m.density(), PROJECTION_RTOL * div.max(1.0))?;
        let n = self.n();
        let off = self.first_len();
        let mut mom = u.momentum.clone();
        for node in 0..self.grid.len() {
            let w = p.velocity.vec_at(node);
            let r = m.density()[node];
            mom.set_vec(node, &(0..n).map(|i| r * w[i]).collect::<Vec<_>>());
        }
        x[off..].copy_from_slice(mom.data());
        Ok(p.div_residual)
    }

    pub fn energies(&self, x: &[f64]) -> Result<Energies> {
        let g = &self.grid;
        let u = self.unpack(x, 0)?;
        let v = self.velocity(&u)?;
        let kinetic = |rho: &[f64], metric: &dyn Fn(usize) -> Mat| -> f64 {
            let dens: Vec<f64> = (0..g.len())
                .map(|node| {
                    let w = v.vec_at(node);
                    let l = metric(node).mulv(&w);
                    0.5 * rho[node] * (0..g.n()).map(|i| w[i] * l[i]).sum::<f64>()
                })
                .collect();
            g.quadrature(&dens)
        };
        let internal = |model: &Newtonian, rho_m: &[f64], metric: &MetricField| -> Result<f64> {
            let mut dens = vec![0.0; g.len()];
            for node in 0..g.len() {
                dens[node] = rho_m[node] * model.eos.eval(rho_m[node] / metric.sqrt_det(node))?.u;
            }
            Ok(g.quadrature(&dens))
        };
        Ok(match (&u.first, &self.closure) {
            (First::Disp(d), _) => Energies {
                h_kin: kinetic(self.body_mass.density(), &|_| self.ambient),
                psi_or_u: self.material_stress(d)?.1,
                mass_total: self.body_mass.total(g),
            },
            (First::Mass(m), Closure::Fluid { model, .. }) => Energies {
                h_kin: kinetic(m.density(), &|_| self.ambient),
                psi_or_u: internal(model, m.density(), &self.ambient_field)?,
                mass_total: m.total(g),
            },
            (First::Metric(gh), closure) => {
                let psi = match closure {
                    Closure::Solid(s) => evaluate_hyperelastic(s, g, gh, &self.reference, &self.body_mass)?.energy,
                    Closure::Fluid { model, .. } => internal(model, self.body_mass.density(), gh)?,
                };
                Energies { h_kin: kinetic(self.body_mass.density(), &|node| *gh.g(node)), psi_or_u: psi, mass_total: self.body_mass.total(g) }
            }
            (First::Mass(_), Closure::Solid(_)) => return Err(PhcmError::Constitutive("spatial solids are not supported".into())),
        })
    }

    /// Largest velocity magnitude in the representation's own metric.
    pub fn max_speed(&self, x: &[f64]) -> Result<f64> {
        let u = self.unpack(x, 0)?;
        let v = self.velocity(&u)?;
        let mut m: f64 = 0.0;
        for node in 0..self.grid.len() {
            let (metric, _) = self.lowering(&u, node);
            let w = v.vec_at(node);
            let l = metric.mulv(&w);
            m = m.max((0..self.n()).map(|i| w[i] * l[i]).sum::<f64>().sqrt());
        }
        Ok(m)
    }

    /// Field snapshots of a state.
    pub fn snapshots(&self, x: &[f64], step: usize, t: f64) -> Result<Vec<Snapshot>> {
        let g = &self.grid;
        let n = self.n();
        let u = self.unpack(x, step)?;
        let v = self.velocity(&u)?;
        let vec_values = |b: &BundleForm| -> Vec<f64> { (0..g.len()).flat_map(|node| b.vec_at(node)[..n].to_vec()).collect() };
        let mut out = Vec::new();
        match &u.first {
            First::Disp(d) => out.push(Snapshot::new(g, "displacement", "vector-valued 0-form", step, t, n, vec_values(d))?),
            First::Mass(m) => out.push(Snapshot::new(g, "density", "top form", step, t, 1, m.density().to_vec())?),
            First::Metric(gh) => {
                let vals = gh.values().iter().flat_map(|m| (0..n * n).map(move |k| m.get(k / n, k % n))).collect();
                out.push(Snapshot::new(g, "metric", "symmetric covariant 2-tensor", step, t, n * n, vals)?);
            }
        }
        out.push(Snapshot::new(g, "momentum", "covector-valued top form", step, t, n, vec_values(&u.momentum))?);
        out.push(Snapshot::new(g, "velocity", "vector-valued 0-form", step, t, n, vec_values(&v))?);
        Ok(out)
    }

    pub fn mass_form(&self, u: &Unpacked) -> MassForm {
        match &u.first {
            First::Mass(m) => m.clone(),
            _ => self.body_mass.clone(),
        }
    }
}
