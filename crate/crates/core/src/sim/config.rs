//! Scenario documents: JSON parsing, field-level validation and initial-profile sampling.

use crate::constitutive::{Eos, HyperelasticModel, IncompressibilityClosure, Penalty};
use crate::error::{PhcmError, Result};
use crate::fiber::{check_spd, Mat};
use crate::kinetic::Rep;
use crate::mesh::{FacePort, Grid, Topology, MIN_CELLS};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub representation: Rep,
    pub grid: GridSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub params: ParamsSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub boundary: Vec<BoundarySpec>,
    #[serde(default)]
    pub integrator: Integrator,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub cells: Vec<usize>,
    pub length: Vec<f64>,
    pub topology: Vec<Topology>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Mass density: reference density on the body, or current density in space.
    pub density: Profile,
    /// One profile per component. Material components for body-based representations.
    pub velocity: Vec<Profile>,
    /// Initial displacement φ(X) − X; body-based representations only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Vec<Profile>>,
}

/// Constant ambient and reference metrics; both default to the identity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Solid {
        model: HyperelasticModel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        penalty: Option<Penalty>,
    },
    Fluid {
        kappa: f64,
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eos: Option<Eos>,
        /// Path to a two-column (ρ, 𝒰) CSV, relative to the scenario file.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eos_table: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        incompressibility: Option<IncompressibilityClosure>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub axis: usize,
    pub side: usize,
    pub port: FacePort,
    /// Prescribed velocity or traction; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Schedule>,
}

/// A boundary input as a function of time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Constant(Vec<f64>),
    /// Rows `[t, c0, c1, ...]`, linear in between, held constant outside.
    Table(Vec<Vec<f64>>),
}

impl Schedule {
    pub fn comps(&self) -> usize {
        match self {
            Schedule::Constant(v) => v.len(),
            Schedule::Table(rows) => rows.first().map_or(0, |r| r.len().saturating_sub(1)),
        }
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        match self {
            Schedule::Constant(v) => v.clone(),
            Schedule::Table(rows) => {
                let last = rows.len() - 1;
                if t <= rows[0][0] {
                    return rows[0][1..].to_vec();
                }
                if t >= rows[last][0] {
                    return rows[last][1..].to_vec();
                }
                let k = rows.partition_point(|r| r[0] <= t).clamp(1, last);
                let (a, b) = (&rows[k - 1], &rows[k]);
                let s = (t - a[0]) / (b[0] - a[0]);
                (1..a.len()).map(|c| a[c] + s * (b[c] - a[c])).collect()
            }
        }
    }

    /// Time derivative; one-sided slope at table knots.
    pub fn rate(&self, t: f64) -> Vec<f64> {
        match self {
            Schedule::Constant(v) => vec![0.0; v.len()],
            Schedule::Table(rows) => {
                let last = rows.len() - 1;
                if t < rows[0][0] || t >= rows[last][0] {
                    return vec![0.0; rows[0].len() - 1];
                }
                let k = rows.partition_point(|r| r[0] <= t).clamp(1, last);
                let (a, b) = (&rows[k - 1], &rows[k]);
                (1..a.len()).map(|c| (b[c] - a[c]) / (b[0] - a[0])).collect()
            }
        }
    }

    fn validate(&self, n: usize, field: &str) -> Result<()> {
        let bad = |msg: String| Err(PhcmError::Config { field: field.into(), msg });
        if self.comps() != n {
            return bad(format!("expected {n} components, got {}", self.comps()));
        }
        if let Schedule::Table(rows) = self {
            if rows.is_empty() || rows.iter().any(|r| r.len() != n + 1) {
                return bad("every table row must be [t, c0, ..]".into());
            }
            if rows.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return bad("table times must increase".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    Rk4,
    ImplicitMidpoint,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory; `PHCM_OUTPUT_DIR` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Snapshot every this many steps; 0 disables snapshots.
    #[serde(default)]
    pub cadence: usize,
    /// Ledger columns to plot after the run.
    #[serde(default)]
    pub plots: Vec<String>,
}

/// Scalar initial profile over the grid box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// offset + A ∏ₐ sin(2π kₐ xₐ / Lₐ + phaseₐ) over the axes with kₐ ≠ 0 or phaseₐ ≠ 0.
    Sine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        wavenumber: Vec<f64>,
        #[serde(default)]
        phase: Vec<f64>,
    },
    /// offset + A exp(−|x − c|² / (2w²)).
    Gaussian {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// Component of U (cos kx sin ky, −sin kx cos ky), k = 2π/L.
    TaylorGreen {
        amplitude: f64,
        component: usize,
    },
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    fn validate(&self, n: usize, field: &str) -> Result<()> {
        let bad = |msg: &str| Err(PhcmError::Config { field: field.into(), msg: msg.into() });
        match self {
            Profile::Sine { wavenumber, phase, .. } if wavenumber.len() != n || !(phase.is_empty() || phase.len() == n) => bad("wavenumber/phase need one entry per axis"),
            Profile::Gaussian { center, width, .. } if center.len() != n || !(*width > 0.0) => bad("gaussian needs a center per axis and a positive width"),
            Profile::TaylorGreen { component, .. } if n != 2 || *component > 1 => bad("taylor-green profiles are 2D with component 0 or 1"),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, grid: &Grid, x: [f64; 3]) -> f64 {
        let n = grid.n();
        match self {
            Profile::Constant { value } => *value,
            Profile::Sine { offset, amplitude, wavenumber, phase } => {
                let mut p = 1.0;
                for a in 0..n {
                    let ph = phase.get(a).copied().unwrap_or(0.0);
                    if wavenumber[a] != 0.0 || ph != 0.0 {
                        p *= (2.0 * PI * wavenumber[a] * x[a] / grid.length(a) + ph).sin();
                    }
                }
                offset + amplitude * p
            }
            Profile::Gaussian { offset, amplitude, center, width } => {
                let r2: f64 = (0..n).map(|a| (x[a] - center[a]).powi(2)).sum();
                offset + amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            Profile::TaylorGreen { amplitude, component } => {
                let kx = 2.0 * PI * x[0] / grid.length(0);
                let ky = 2.0 * PI * x[1] / grid.length(1);
                match component {
                    0 => amplitude * kx.cos() * ky.sin(),
                    _ => -amplitude * kx.sin() * ky.cos(),
                }
            }
        }
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.sample(|x| self.eval(grid, x))
    }
}

fn cfg(field: &str, msg: impl Into<String>) -> PhcmError {
    PhcmError::Config { field: field.into(), msg: msg.into() }
}

fn matrix(rows: &Option<Vec<Vec<f64>>>, n: usize, field: &str) -> Result<Mat> {
    let Some(rows) = rows else { return Ok(Mat::identity(n)) };
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(cfg(field, format!("expected a {n}×{n} matrix")));
    }
    let m = Mat::from_fn(n, |i, j| rows[i][j]);
    check_spd(&m).map_err(|e| cfg(field, e.to_string()))?;
    Ok(m)
}

impl Scenario {
    /// Parse a JSON document. Errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            let field = match inner.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
                Some(f) if path == "." => f.to_string(),
                Some(f) => format!("{path}.{f}"),
                None => path,
            };
            PhcmError::Config { field, msg: inner }
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_json(&text)?;
        // resolve the EOS table against the scenario's directory
        if let ModelSpec::Fluid { eos_table: Some(p), .. } = &mut s.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n(&self) -> usize {
        self.grid.cells.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.name.trim().is_empty() {
            return Err(cfg("name", "must not be empty"));
        }
        if !(1..=3).contains(&n) {
            return Err(cfg("grid.cells", "one to three axes"));
        }
        if self.grid.length.len() != n {
            return Err(cfg("grid.length", format!("expected {n} entries")));
        }
        if self.grid.topology.len() != n {
            return Err(cfg("grid.topology", format!("expected {n} entries")));
        }
        if self.grid.cells.iter().any(|&c| c < MIN_CELLS) {
            return Err(cfg("grid.cells", format!("at least {MIN_CELLS} cells per axis")));
        }
        if self.grid.length.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(cfg("grid.length", "lengths must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(cfg("dt", "must be positive and finite"));
        }
        if self.steps == 0 {
            return Err(cfg("steps", "must be at least 1"));
        }
        self.initial.density.validate(n, "initial.density")?;
        if self.initial.velocity.len() != n {
            return Err(cfg("initial.velocity", format!("expected {n} component profiles")));
        }
        for (i, p) in self.initial.velocity.iter().enumerate() {
            p.validate(n, &format!("initial.velocity[{i}]"))?;
        }
        if let Some(d) = &self.initial.displacement {
            if self.representation == Rep::Spatial {
                return Err(cfg("initial.displacement", "the spatial representation carries no configuration"));
            }
            if d.len() != n {
                return Err(cfg("initial.displacement", format!("expected {n} component profiles")));
            }
            for (i, p) in d.iter().enumerate() {
                p.validate(n, &format!("initial.displacement[{i}]"))?;
            }
        }
        let ambient = matrix(&self.params.ambient, n, "params.ambient")?;
        matrix(&self.params.reference, n, "params.reference")?;
        let mut seen = Vec::new();
        for (k, b) in self.boundary.iter().enumerate() {
            let field = format!("boundary[{k}]");
            if b.axis >= n || b.side > 1 {
                return Err(cfg(&field, "axis or side out of range"));
            }
            if self.grid.topology[b.axis] == Topology::Periodic {
                return Err(cfg(&field, "face lies on a periodic axis"));
            }
            if seen.contains(&(b.axis, b.side)) {
                return Err(cfg(&field, "face listed twice"));
            }
            seen.push((b.axis, b.side));
            if let Some(s) = &b.value {
                s.validate(n, &format!("{field}.value"))?;
            }
        }
        match &self.model {
            ModelSpec::Solid { model, penalty } => {
                model.validate().map_err(|e| cfg("model.model", e.to_string()))?;
                if penalty.is_some_and(|p| !(p.k >= 0.0)) {
                    return Err(cfg("model.penalty", "k must be nonnegative"));
                }
                if self.representation == Rep::Spatial {
                    return Err(cfg("representation", "solids are simulated in the material or convective representation"));
                }
            }
            ModelSpec::Fluid { kappa, theta, eos, eos_table, incompressibility } => {
                if !(*kappa >= 0.0 && *theta >= 0.0) {
                    return Err(cfg("model", "viscosities must be nonnegative"));
                }
                match (eos, eos_table) {
                    (Some(e), None) => e.validate().map_err(|e| cfg("model.eos", e.to_string()))?,
                    (None, Some(_)) => {}
                    _ => return Err(cfg("model.eos", "give exactly one of `eos` and `eos_table`")),
                }
                if self.representation == Rep::Material {
                    return Err(cfg("representation", "fluids are simulated in the spatial or convective representation"));
                }
                match incompressibility {
                    Some(IncompressibilityClosure::ExactMultiplier) => {
                        let periodic = self.grid.topology.iter().all(|t| *t == Topology::Periodic);
                        if self.representation != Rep::Spatial || !periodic || ambient != Mat::identity(n) {
                            return Err(cfg("model.incompressibility", "the exact multiplier needs a spatial fluid on a periodic Euclidean grid"));
                        }
                    }
                    Some(IncompressibilityClosure::Penalty { .. }) => {
                        return Err(cfg("model.incompressibility", "fluids are penalised through their equation of state"));
                    }
                    None => {}
                }
            }
        }
        Ok(())
    }

    /// The grid with the configured face causalities. Unlisted bounded faces are velocity faces.
    pub fn build_grid(&self) -> Result<Grid> {
        let mut g = Grid::new(&self.grid.cells, &self.grid.length, &self.grid.topology)?;
        for b in &self.boundary {
            g = g.with_face(b.axis, b.side, b.port)?;
        }
        Ok(g)
    }

    pub fn ambient(&self) -> Result<Mat> {
        matrix(&self.params.ambient, self.n(), "params.ambient")
    }

    pub fn reference(&self) -> Result<Mat> {
        matrix(&self.params.reference, self.n(), "params.reference")
    }

    /// The schedule attached to a face, if any.
    pub fn schedule(&self, axis: usize, side: usize) -> Option<&Schedule> {
        self.boundary.iter().find(|b| b.axis == axis && b.side == side).and_then(|b| b.value.as_ref())
    }

    /// Output directory: `PHCM_OUTPUT_DIR`, else `output.dir`, else `out/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = std::env::var_os("PHCM_OUTPUT_DIR").filter(|d| !d.is_empty()) {
            return PathBuf::from(d);
        }
        self.output.dir.clone().unwrap_or_else(|| Path::new("out").join(&self.name))
    }

    /// Same scenario with every axis refined by an integer factor.
    pub fn with_cells(&self, cells: &[usize]) -> Scenario {
        let mut s = self.clone();
        s.grid.cells = cells.to_vec();
        s
    }
}
