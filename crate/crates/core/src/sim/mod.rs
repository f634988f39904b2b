//! Scenario runs: time stepping, the energy ledger, snapshots, plots and the
//! independent tensor-calculus right-hand side.

pub mod config;
pub mod integrate;
pub mod oracle;
pub mod output;
pub mod system;

pub use config::{BoundarySpec, GridSpec, InitialSpec, Integrator, ModelSpec, OutputSpec, ParamsSpec, Profile, Scenario, Schedule};
pub use integrate::{implicit_midpoint, rk4, step, StepReport, MIDPOINT_MAX_ITERS, MIDPOINT_TOL};
pub use oracle::{compare_rhs, oracle_rhs, OracleReport};
pub use output::{plot_ledger, read_ledger, write_ledger, LedgerRow, LEDGER_COLUMNS};
pub use system::{Closure, Energies, StageEval, System};

use crate::error::{PhcmError, Result};
use crate::mesh::Snapshot;
use crate::net::PowerAudit;
use std::path::PathBuf;

/// CFL-style factor in Δt ≤ c·h / max|v|.
pub const CFL_C: f64 = 1.0;

/// Tolerance on ‖div v‖∞ kept by the exact incompressibility closure between steps.
pub const DIV_TOL: f64 = 1e-11;

/// A running simulation.
pub struct Simulation {
    pub scenario: Scenario,
    pub system: System,
    pub state: Vec<f64>,
    pub t: f64,
    pub step: usize,
    initial: Energies,
    boundary_work: f64,
    dissipated: f64,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let system = System::new(&scenario)?;
        let mut state = system.initial_state(&scenario)?;
        system.clean_divergence(&mut state, DIV_TOL)?;
        let initial = system.energies(&state)?;
        let sim = Simulation { scenario, system, state, t: 0.0, step: 0, initial, boundary_work: 0.0, dissipated: 0.0 };
        sim.check_cfl()?;
        Ok(sim)
    }

    /// Warn when Δt exceeds c·h/max|v|; returns whether the bound holds.
    pub fn check_cfl(&self) -> Result<bool> {
        let vmax = self.system.max_speed(&self.state)?;
        let bound = CFL_C * self.system.grid.min_h() / vmax;
        let ok = vmax == 0.0 || self.scenario.dt <= bound;
        if !ok {
            log::warn!("{}: dt = {:e} exceeds the CFL bound {:e} (max |v| = {:e})", self.scenario.name, self.scenario.dt, bound, vmax);
        }
        Ok(ok)
    }

    pub fn energies(&self) -> Result<Energies> {
        self.system.energies(&self.state)
    }

    pub fn initial_energies(&self) -> Energies {
        self.initial
    }

    /// Advance one step and return its ledger row.
    pub fn advance(&mut self) -> Result<(LedgerRow, StepReport)> {
        let dt = self.scenario.dt;
        let step = self.step + 1;
        let (mut next, rep) = integrate::step(&self.system, self.scenario.integrator, self.t, &self.state, dt, step)?;
        self.t = step as f64 * dt;
        self.system.impose_velocity(self.t, &mut next)?;
        self.system.clean_divergence(&mut next, DIV_TOL)?;
        self.system.unpack(&next, step)?;
        self.state = next;
        self.step = step;
        self.boundary_work += rep.boundary_work;
        self.dissipated += rep.dissipated;
        let e = self.energies()?;
        let e_total = e.h_kin + e.psi_or_u;
        let e0 = self.initial.h_kin + self.initial.psi_or_u;
        let row = LedgerRow {
            t: self.t,
            h_kin: e.h_kin,
            psi_or_u: e.psi_or_u,
            e_total,
            p_boundary: rep.boundary_work / dt,
            d_dissipation: rep.dissipated / dt,
            mass_total: e.mass_total,
            res_dirac_alg: rep.res_alg,
            res_dirac_mesh: rep.res_mesh,
            res_energy: e_total - e0 - (self.boundary_work - self.dissipated),
        };
        Ok((row, rep))
    }

    pub fn snapshots(&self) -> Result<Vec<Snapshot>> {
        self.system.snapshots(&self.state, self.step, self.t)
    }
}

/// Everything a completed run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub ledger: PathBuf,
    pub rows: Vec<LedgerRow>,
    pub snapshot_sets: usize,
    pub plots: Vec<PathBuf>,
    pub final_audit: PowerAudit,
    /// Energies of the initial state.
    pub initial: Energies,
}

impl RunOutput {
    /// One-paragraph summary of the run.
    pub fn summary(&self) -> String {
        let last = self.rows.last().expect("at least one step");
        let first_e = self.initial.h_kin + self.initial.psi_or_u;
        let drift = if first_e != 0.0 {
            format!("rel. drift {:.3e}", (last.e_total - first_e).abs() / first_e.abs())
        } else {
            format!("abs. drift {:.3e}", last.e_total.abs())
        };
        let flagged = self.final_audit.flagged().len();
        format!(
            "steps {} | t {:.6} | E_total {:.9e} | {drift} | res_energy {:.3e} | max res_alg {:.3e} | max res_mesh {:.3e} | flagged checks in final stage {} | ledger {}",
            self.rows.len(),
            last.t,
            last.e_total,
            last.res_energy,
            self.rows.iter().map(|r| r.res_dirac_alg).fold(0.0, f64::max),
            self.rows.iter().map(|r| r.res_dirac_mesh).fold(0.0, f64::max),
            flagged,
            self.ledger.display()
        )
    }
}

fn write_snapshots(dir: &std::path::Path, snaps: &[Snapshot]) -> Result<()> {
    for s in snaps {
        s.write(&dir.join(format!("snap_{:06}_{}.csv", s.step, s.field)))?;
    }
    Ok(())
}

/// Run a scenario to completion, writing the ledger, snapshots and requested plots.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput> {
    let dir = scenario.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| PhcmError::Config { field: "output.dir".into(), msg: format!("{}: {e}", dir.display()) })?;
    let mut sim = Simulation::new(scenario.clone())?;
    let cadence = scenario.output.cadence;
    let mut sets = 0;
    if cadence > 0 {
        write_snapshots(&dir, &sim.snapshots()?)?;
        sets += 1;
    }
    let mut rows = Vec::with_capacity(scenario.steps);
    let mut audit = PowerAudit::default();
    for _ in 0..scenario.steps {
        let (row, rep) = sim.advance()?;
        rows.push(row);
        audit = rep.audit;
        if cadence > 0 && sim.step % cadence == 0 {
            write_snapshots(&dir, &sim.snapshots()?)?;
            sets += 1;
        }
    }
    let ledger = dir.join("ledger.csv");
    write_ledger(&ledger, &rows)?;
    std::fs::write(dir.join("audit.json"), audit.to_json()?)?;
    let plots = if scenario.output.plots.is_empty() { Vec::new() } else { plot_ledger(&ledger, &scenario.output.plots, &dir)? };
    Ok(RunOutput { dir, ledger, rows, snapshot_sets: sets, plots, final_audit: audit, initial: sim.initial_energies() })
}

/// Scenarios shipped with the crate, as (name, JSON text).
pub const BUNDLED: &[(&str, &str)] = &[
    ("bar1d-hencky", include_str!("../../scenarios/bar1d-hencky.json")),
    ("ns2d-periodic-taylor-green-like", include_str!("../../scenarios/ns2d-periodic-taylor-green-like.json")),
    ("shear2d-penalty-solid", include_str!("../../scenarios/shear2d-penalty-solid.json")),
    ("bar1d-material-ring", include_str!("../../scenarios/bar1d-material-ring.json")),
    ("gas1d-acoustic-pulse", include_str!("../../scenarios/gas1d-acoustic-pulse.json")),
];

pub fn bundled(name: &str) -> Result<Scenario> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| PhcmError::Config { field: "scenario".into(), msg: format!("no bundled scenario named `{name}`") })?;
    Scenario::from_json(text)
}

/// Load a scenario from a path, or by bundled name when no such file exists.
pub fn load(spec: &str) -> Result<Scenario> {
    let p = std::path::Path::new(spec);
    if p.exists() {
        Scenario::from_file(p)
    } else {
        bundled(spec)
    }
}
