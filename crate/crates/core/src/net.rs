//! Power-port networks: Dirac blocks with explicit effort-in/flow-out causality,
//! wiring, evaluation in dependency order and power audits.

use crate::error::{PhcmError, Result};
use crate::mesh::{integrate, wedge, wedge_dot, BoundaryField, BundleForm, Grid, MassForm, MetricField, ScalarForm, ValueKind};
use petgraph::algo::toposort;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

/// A value carried by a port.
#[derive(Clone, Debug)]
pub enum PortValue {
    Scalar(ScalarForm),
    Bundle(BundleForm),
    Boundary(BoundaryField),
    Metric(MetricField),
    Mass(MassForm),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortKind {
    Scalar { degree: usize },
    Bundle { degree: usize, kind: ValueKind },
    Boundary,
    Metric,
    Mass,
}

impl PortValue {
    pub fn kind(&self) -> PortKind {
        match self {
            PortValue::Scalar(s) => PortKind::Scalar { degree: s.degree() },
            PortValue::Bundle(b) => PortKind::Bundle { degree: b.degree(), kind: b.kind() },
            PortValue::Boundary(_) => PortKind::Boundary,
            PortValue::Metric(_) => PortKind::Metric,
            PortValue::Mass(_) => PortKind::Mass,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            PortValue::Scalar(s) => s.max_abs(),
            PortValue::Bundle(b) => b.max_abs(),
            PortValue::Boundary(b) => b.max_abs(),
            PortValue::Metric(_) | PortValue::Mass(_) => 0.0,
        }
    }
}

/// Named port values of one block.
pub type Ports = BTreeMap<String, PortValue>;

fn missing(name: &str) -> PhcmError {
    PhcmError::Port(format!("missing port `{name}`"))
}

fn wrong(name: &str, want: &str) -> PhcmError {
    PhcmError::Port(format!("port `{name}` does not hold a {want}"))
}

pub fn get_scalar<'a>(p: &'a Ports, name: &str) -> Result<&'a ScalarForm> {
    match p.get(name) {
        Some(PortValue::Scalar(s)) => Ok(s),
        Some(_) => Err(wrong(name, "scalar form")),
        None => Err(missing(name)),
    }
}

pub fn get_bundle<'a>(p: &'a Ports, name: &str) -> Result<&'a BundleForm> {
    match p.get(name) {
        Some(PortValue::Bundle(b)) => Ok(b),
        Some(_) => Err(wrong(name, "bundle-valued form")),
        None => Err(missing(name)),
    }
}

pub fn get_boundary<'a>(p: &'a Ports, name: &str) -> Result<Option<&'a BoundaryField>> {
    match p.get(name) {
        Some(PortValue::Boundary(b)) => Ok(Some(b)),
        Some(_) => Err(wrong(name, "boundary field")),
        None => Ok(None),
    }
}

pub fn get_metric<'a>(p: &'a Ports, name: &str) -> Result<&'a MetricField> {
    match p.get(name) {
        Some(PortValue::Metric(m)) => Ok(m),
        Some(_) => Err(wrong(name, "metric")),
        None => Err(missing(name)),
    }
}

pub fn get_mass<'a>(p: &'a Ports, name: &str) -> Result<&'a MassForm> {
    match p.get(name) {
        Some(PortValue::Mass(m)) => Ok(m),
        Some(_) => Err(wrong(name, "mass form")),
        None => Err(missing(name)),
    }
}

/// Power pairing ⟨e, f⟩ = ∫ f ∧̇ e of an effort with a flow of complementary degree.
pub fn pair(grid: &Grid, effort: &PortValue, flow: &PortValue) -> Result<f64> {
    match (effort, flow) {
        (PortValue::Scalar(e), PortValue::Scalar(f)) => integrate(grid, &wedge(grid, f, e)?),
        (PortValue::Bundle(e), PortValue::Bundle(f)) => integrate(grid, &wedge_dot(grid, f, e)?),
        (PortValue::Boundary(e), PortValue::Boundary(f)) => e.pair(f, None),
        _ => Err(PhcmError::Kind("ports cannot be paired".into())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Effort,
    Flow,
    /// Modulating state: not part of any power pairing.
    State,
}

#[derive(Clone, Debug)]
pub struct PortSpec {
    pub name: String,
    pub kind: PortKind,
    pub role: Role,
    pub optional: bool,
}

impl PortSpec {
    pub fn new(name: &str, kind: PortKind, role: Role) -> Self {
        PortSpec { name: name.into(), kind, role, optional: false }
    }
    pub fn optional(mut self) -> Self {
        self.optional = true;
        self
    }
}

/// An output port and the inputs it is computed from.
#[derive(Clone, Debug)]
pub struct OutputSpec {
    pub port: PortSpec,
    pub deps: Vec<String>,
}

impl OutputSpec {
    pub fn new(name: &str, kind: PortKind, role: Role, deps: &[&str]) -> Self {
        OutputSpec { port: PortSpec::new(name, kind, role), deps: deps.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TolClass {
    /// Pointwise algebra, relative tolerance 1e−12.
    Algebraic,
    /// Discrete integration by parts, relative tolerance C·h².
    Mesh,
    /// Sign condition on dissipated power.
    Resistive,
}

pub const ALG_TOL: f64 = 1e-12;
pub const DEFAULT_MESH_C: f64 = 1e3;
/// Residuals below this are roundoff whatever the scale of the terms.
pub const ABS_TOL: f64 = 1e-15;

/// One checked identity of one block evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct BlockAudit {
    pub block: String,
    pub check: String,
    pub class: TolClass,
    /// Absolute residual (signed sum of pairings, or constraint violation).
    pub residual: f64,
    /// Sum of the magnitudes of the terms entering the residual.
    pub scale: f64,
    pub tol: f64,
    pub flagged: bool,
}

impl BlockAudit {
    /// Balance Σ terms = 0; tolerance is relative to Σ|terms|.
    pub fn balance(block: &str, check: &str, class: TolClass, terms: &[f64], h: f64) -> Self {
        let residual: f64 = terms.iter().sum::<f64>().abs();
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        Self::bound(block, check, class, residual, scale, h)
    }

    pub fn bound(block: &str, check: &str, class: TolClass, residual: f64, scale: f64, h: f64) -> Self {
        let rel = match class {
            TolClass::Algebraic | TolClass::Resistive => ALG_TOL,
            TolClass::Mesh => DEFAULT_MESH_C * h * h,
        };
        let tol = (rel * scale).max(ABS_TOL);
        BlockAudit {
            block: block.into(),
            check: check.into(),
            class,
            residual,
            scale,
            tol,
            flagged: !residual.is_finite() || residual > tol,
        }
    }

    /// Dissipated power must be nonnegative.
    pub fn dissipation(block: &str, check: &str, d: f64, scale: f64) -> Self {
        Self::bound(block, check, TolClass::Resistive, (-d).max(0.0), scale, 0.0)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PowerAudit {
    pub entries: Vec<BlockAudit>,
}

impl PowerAudit {
    pub fn aggregate(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).sum()
    }

    pub fn max_residual(&self, class: TolClass) -> f64 {
        self.entries.iter().filter(|e| e.class == class).map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> Vec<&BlockAudit> {
        self.entries.iter().filter(|e| e.flagged).collect()
    }

    pub fn extend(&mut self, other: PowerAudit) {
        self.entries.extend(other.entries);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A Dirac structure written as an explicit map from inputs to outputs.
pub trait DiracBlock: Send + Sync {
    fn id(&self) -> &str;
    fn inputs(&self) -> Vec<PortSpec>;
    fn outputs(&self) -> Vec<OutputSpec>;
    /// Compute one output; `inputs` holds at least that output's dependencies.
    fn output(&self, name: &str, inputs: &Ports) -> Result<PortValue>;
    /// Check the block's power balance on a completed evaluation.
    fn audit(&self, inputs: &Ports, outputs: &Ports) -> Result<Vec<BlockAudit>>;
}

/// Evaluate a single block on a complete set of inputs.
pub fn evaluate_block(block: &dyn DiracBlock, inputs: &Ports) -> Result<(Ports, PowerAudit)> {
    check_inputs(block, inputs)?;
    let mut outputs = Ports::new();
    for o in block.outputs() {
        let v = block.output(&o.port.name, inputs)?;
        check_kind(block.id(), &o.port, &v)?;
        outputs.insert(o.port.name.clone(), v);
    }
    let entries = block.audit(inputs, &outputs)?;
    warn_flagged(&entries);
    Ok((outputs, PowerAudit { entries }))
}

fn check_inputs(block: &dyn DiracBlock, inputs: &Ports) -> Result<()> {
    for spec in block.inputs() {
        match inputs.get(&spec.name) {
            Some(v) => check_kind(block.id(), &spec, v)?,
            None if spec.optional => {}
            None => return Err(PhcmError::Port(format!("{}: missing input `{}`", block.id(), spec.name))),
        }
    }
    Ok(())
}

fn check_kind(block: &str, spec: &PortSpec, v: &PortValue) -> Result<()> {
    if v.kind() != spec.kind {
        return Err(PhcmError::Kind(format!("{block}.{}: expected {:?}, got {:?}", spec.name, spec.kind, v.kind())));
    }
    Ok(())
}

fn warn_flagged(entries: &[BlockAudit]) {
    for e in entries.iter().filter(|e| e.flagged) {
        log::warn!("audit {}::{} residual {:.3e} exceeds {:.3e} ({:?})", e.block, e.check, e.residual, e.tol, e.class);
    }
}

/// A connection from an output port to an input port, as `(block, port)` pairs.
#[derive(Clone, Debug)]
pub struct Wire {
    pub from: (String, String),
    pub to: (String, String),
}

impl Wire {
    pub fn new(from: &str, to: &str) -> Result<Self> {
        Ok(Wire { from: split_port(from)?, to: split_port(to)? })
    }
}

fn split_port(s: &str) -> Result<(String, String)> {
    s.split_once('.')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| PhcmError::Network(format!("port reference `{s}` is not of the form block.port")))
}

#[derive(Clone, Debug)]
enum Source {
    Wire(usize, String),
    External(String),
    Absent,
}

/// Blocks plus wiring, with a precomputed evaluation order over output ports.
pub struct Network {
    blocks: Vec<Box<dyn DiracBlock>>,
    index: HashMap<String, usize>,
    sources: Vec<BTreeMap<String, Source>>,
    order: Vec<(usize, String)>,
}

/// Values of every port after a network evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub inputs: BTreeMap<String, Ports>,
    pub outputs: BTreeMap<String, Ports>,
    pub audit: PowerAudit,
}

impl Evaluation {
    /// Look up `block.port`, outputs first.
    pub fn get(&self, reference: &str) -> Result<&PortValue> {
        let (b, p) = split_port(reference)?;
        self.outputs
            .get(&b)
            .and_then(|o| o.get(&p))
            .or_else(|| self.inputs.get(&b).and_then(|i| i.get(&p)))
            .ok_or_else(|| PhcmError::Port(format!("no value at `{reference}`")))
    }

    pub fn bundle(&self, reference: &str) -> Result<&BundleForm> {
        match self.get(reference)? {
            PortValue::Bundle(b) => Ok(b),
            _ => Err(wrong(reference, "bundle-valued form")),
        }
    }

    pub fn scalar(&self, reference: &str) -> Result<&ScalarForm> {
        match self.get(reference)? {
            PortValue::Scalar(s) => Ok(s),
            _ => Err(wrong(reference, "scalar form")),
        }
    }

    pub fn boundary(&self, reference: &str) -> Result<&BoundaryField> {
        match self.get(reference)? {
            PortValue::Boundary(b) => Ok(b),
            _ => Err(wrong(reference, "boundary field")),
        }
    }
}

impl Network {
    /// Wire blocks together. Every required input must be wired or listed in `externals`
    /// (as `block.port`); wired ports must have identical kinds; the output-level dependency
    /// graph must be acyclic.
    pub fn compose(blocks: Vec<Box<dyn DiracBlock>>, wires: &[Wire], externals: &[&str]) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, b) in blocks.iter().enumerate() {
            if index.insert(b.id().to_string(), i).is_some() {
                return Err(PhcmError::Network(format!("duplicate block id `{}`", b.id())));
            }
        }
        let find = |name: &str| index.get(name).copied().ok_or_else(|| PhcmError::Network(format!("unknown block `{name}`")));
        let ins: Vec<Vec<PortSpec>> = blocks.iter().map(|b| b.inputs()).collect();
        let outs: Vec<Vec<OutputSpec>> = blocks.iter().map(|b| b.outputs()).collect();
        let mut sources: Vec<BTreeMap<String, Source>> = ins.iter().map(|v| v.iter().map(|s| (s.name.clone(), Source::Absent)).collect()).collect();

        for w in wires {
            let (fb, tb) = (find(&w.from.0)?, find(&w.to.0)?);
            let out = outs[fb]
                .iter()
                .find(|o| o.port.name == w.from.1)
                .ok_or_else(|| PhcmError::Network(format!("`{}` has no output `{}`", w.from.0, w.from.1)))?;
            let inp = ins[tb]
                .iter()
                .find(|s| s.name == w.to.1)
                .ok_or_else(|| PhcmError::Network(format!("`{}` has no input `{}`", w.to.0, w.to.1)))?;
            if out.port.kind != inp.kind {
                return Err(PhcmError::Kind(format!(
                    "wire {}.{} -> {}.{}: {:?} vs {:?}",
                    w.from.0, w.from.1, w.to.0, w.to.1, out.port.kind, inp.kind
                )));
            }
            let slot = sources[tb].get_mut(&w.to.1).expect("input exists");
            if !matches!(slot, Source::Absent) {
                return Err(PhcmError::Network(format!("input {}.{} driven twice", w.to.0, w.to.1)));
            }
            *slot = Source::Wire(fb, w.from.1.clone());
        }
        for e in externals {
            let (b, p) = split_port(e)?;
            let bi = find(&b)?;
            match sources[bi].get_mut(&p) {
                None => return Err(PhcmError::Network(format!("`{b}` has no input `{p}`"))),
                Some(Source::Absent) => *sources[bi].get_mut(&p).unwrap() = Source::External(e.to_string()),
                Some(_) => return Err(PhcmError::Network(format!("input {e} is both wired and external"))),
            }
        }
        for (bi, specs) in ins.iter().enumerate() {
            for s in specs {
                if !s.optional && matches!(sources[bi][&s.name], Source::Absent) {
                    return Err(PhcmError::Network(format!("dangling input {}.{}", blocks[bi].id(), s.name)));
                }
            }
        }

        let mut graph = DiGraph::<(usize, String), ()>::new();
        let mut node_of: HashMap<(usize, String), NodeIndex> = HashMap::new();
        for (bi, os) in outs.iter().enumerate() {
            for o in os {
                let key = (bi, o.port.name.clone());
                node_of.insert(key.clone(), graph.add_node(key));
            }
        }
        for (bi, os) in outs.iter().enumerate() {
            for o in os {
                let to = node_of[&(bi, o.port.name.clone())];
                for d in &o.deps {
                    match sources[bi].get(d) {
                        Some(Source::Wire(fb, fp)) => {
                            graph.add_edge(node_of[&(*fb, fp.clone())], to, ());
                        }
                        Some(_) => {}
                        None => {
                            return Err(PhcmError::Network(format!("{}.{} depends on unknown input `{d}`", blocks[bi].id(), o.port.name)))
                        }
                    }
                }
            }
        }
        let order = toposort(&graph, None).map_err(|c| {
            let (b, p) = &graph[c.node_id()];
            PhcmError::Network(format!("algebraic loop through {}.{p}", blocks[*b].id()))
        })?;
        let order = order.into_iter().map(|n| graph[n].clone()).collect();
        Ok(Network { blocks, index, sources, order })
    }

    /// Give the blocks back, e.g. to recompose with extra wiring.
    pub fn into_blocks(self) -> Vec<Box<dyn DiracBlock>> {
        self.blocks
    }

    pub fn block(&self, id: &str) -> Option<&dyn DiracBlock> {
        self.index.get(id).map(|&i| self.blocks[i].as_ref())
    }

    /// External inputs, keyed `block.port`.
    pub fn evaluate(&self, externals: &Ports) -> Result<Evaluation> {
        let nb = self.blocks.len();
        let mut ins: Vec<Ports> = vec![Ports::new(); nb];
        let mut outs: Vec<Ports> = vec![Ports::new(); nb];
        for (bi, src) in self.sources.iter().enumerate() {
            for (port, s) in src {
                if let Source::External(key) = s {
                    match externals.get(key) {
                        Some(v) => {
                            ins[bi].insert(port.clone(), v.clone());
                        }
                        None => {
                            let optional = self.blocks[bi].inputs().iter().any(|p| &p.name == port && p.optional);
                            if !optional {
                                return Err(PhcmError::Port(format!("external input `{key}` not supplied")));
                            }
                        }
                    }
                }
            }
        }
        for key in externals.keys() {
            let known = self.sources.iter().any(|s| s.values().any(|v| matches!(v, Source::External(k) if k == key)));
            if !known {
                return Err(PhcmError::Port(format!("`{key}` is not an external input of this network")));
            }
        }
        let pull = |bi: usize, port: &str, ins: &mut Vec<Ports>, outs: &Vec<Ports>| {
            if ins[bi].contains_key(port) {
                return;
            }
            if let Some(Source::Wire(fb, fp)) = self.sources[bi].get(port) {
                if let Some(v) = outs[*fb].get(fp) {
                    ins[bi].insert(port.to_string(), v.clone());
                }
            }
        };
        for (bi, name) in &self.order {
            let block = &self.blocks[*bi];
            let spec = block.outputs().into_iter().find(|o| &o.port.name == name).expect("declared output");
            for d in &spec.deps {
                pull(*bi, d, &mut ins, &outs);
            }
            let v = block.output(name, &ins[*bi])?;
            check_kind(block.id(), &spec.port, &v)?;
            outs[*bi].insert(name.clone(), v);
        }
        let mut audit = PowerAudit::default();
        for bi in 0..nb {
            let ports: Vec<String> = self.sources[bi].keys().cloned().collect();
            for p in ports {
                pull(bi, &p, &mut ins, &outs);
            }
            check_inputs(self.blocks[bi].as_ref(), &ins[bi])?;
            let entries = self.blocks[bi].audit(&ins[bi], &outs[bi])?;
            warn_flagged(&entries);
            audit.entries.extend(entries);
        }
        let names: Vec<String> = self.blocks.iter().map(|b| b.id().to_string()).collect();
        Ok(Evaluation {
            inputs: names.iter().cloned().zip(ins).collect(),
            outputs: names.into_iter().zip(outs).collect(),
            audit,
        })
    }
}
