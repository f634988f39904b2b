//! Fixed-step integrators over a packed state vector.

use super::config::Integrator;
use super::system::System;
use crate::error::{PhcmError, Result};
use crate::net::{PowerAudit, TolClass};

pub const MIDPOINT_TOL: f64 = 1e-10;
pub const MIDPOINT_MAX_ITERS: usize = 50;

/// What happened during one step besides the state update.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    /// ∫ P_boundary dt over the step.
    pub boundary_work: f64,
    /// ∫ D dt over the step.
    pub dissipated: f64,
    /// Largest algebraic and mesh audit residuals over all stage evaluations.
    pub res_alg: f64,
    pub res_mesh: f64,
    /// Fixed-point iterations (implicit midpoint only).
    pub iterations: usize,
    /// Audit of the last stage evaluation.
    pub audit: PowerAudit,
}

impl StepReport {
    fn absorb(&mut self, a: PowerAudit) {
        self.res_alg = self.res_alg.max(a.max_residual(TolClass::Algebraic)).max(a.max_residual(TolClass::Resistive));
        self.res_mesh = self.res_mesh.max(a.max_residual(TolClass::Mesh));
        self.audit = a;
    }
}

fn axpy(x: &[f64], s: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + s * b).collect()
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Advance `x` from `t` by `dt`.
pub fn step(sys: &System, integrator: Integrator, t: f64, x: &[f64], dt: f64, step: usize) -> Result<(Vec<f64>, StepReport)> {
    match integrator {
        Integrator::Rk4 => rk4(sys, t, x, dt, step),
        Integrator::ImplicitMidpoint => implicit_midpoint(sys, t, x, dt, step),
    }
}

pub fn rk4(sys: &System, t: f64, x: &[f64], dt: f64, step: usize) -> Result<(Vec<f64>, StepReport)> {
    let mut rep = StepReport::default();
    let nodes = [(0.0, 1.0 / 6.0), (0.5, 1.0 / 3.0), (0.5, 1.0 / 3.0), (1.0, 1.0 / 6.0)];
    let mut ks: Vec<Vec<f64>> = Vec::with_capacity(4);
    for (s, &(c, w)) in nodes.iter().enumerate() {
        let xs = match s {
            0 => x.to_vec(),
            _ => axpy(x, c * dt, &ks[s - 1]),
        };
        let e = sys.eval(t + c * dt, &xs, step, true)?;
        rep.boundary_work += w * dt * e.p_boundary;
        rep.dissipated += w * dt * e.dissipation;
        rep.absorb(e.audit);
        ks.push(e.rate);
    }
    let out = (0..x.len()).map(|i| x[i] + dt / 6.0 * (ks[0][i] + 2.0 * ks[1][i] + 2.0 * ks[2][i] + ks[3][i])).collect();
    Ok((out, rep))
}

/// x₊ = x + Δt f(t + Δt/2, (x + x₊)/2) by fixed-point iteration from an explicit Euler guess.
pub fn implicit_midpoint(sys: &System, t: f64, x: &[f64], dt: f64, step: usize) -> Result<(Vec<f64>, StepReport)> {
    let mut rep = StepReport::default();
    let tm = t + 0.5 * dt;
    let e0 = sys.eval(t, x, step, true)?;
    rep.absorb(e0.audit);
    let mut next = axpy(x, dt, &e0.rate);
    let scale = inf_norm(x).max(1.0);
    let mut trace = Vec::new();
    for iter in 1..=MIDPOINT_MAX_ITERS {
        let mid: Vec<f64> = x.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        let e = sys.eval(tm, &mid, step, true)?;
        let cand = axpy(x, dt, &e.rate);
        let change = cand.iter().zip(&next).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs())) / scale;
        trace.push(change);
        next = cand;
        rep.absorb(e.audit);
        if change <= MIDPOINT_TOL {
            rep.boundary_work = dt * e.p_boundary;
            rep.dissipated = dt * e.dissipation;
            rep.iterations = iter;
            return Ok((next, rep));
        }
    }
    Err(PhcmError::NoConvergence { iters: MIDPOINT_MAX_ITERS, trace })
}
