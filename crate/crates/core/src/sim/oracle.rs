//! A second discretization of the equations of motion, written in index notation with
//! product-rule expansions on raw difference stencils. It shares nothing with the form
//! operators except `Grid::diff` and `Grid::diff2`, so agreement with the network's
//! rates is a real consistency check (both are second order, so they differ at O(h²)).

use super::system::{Closure, First, System};
use crate::error::{PhcmError, Result};
use crate::fiber::Mat;
use crate::kinetic::Rep;
use crate::mesh::Grid;
use serde::Serialize;

/// Rates in comparison variables: the first state rate (ρ̇, ĝ̇ or u̇) and the velocity rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Rates {
    pub first: Vec<f64>,
    pub velocity: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldDiff {
    pub field: String,
    /// max over interior nodes of |oracle − network|.
    pub max_diff: f64,
    /// max over interior nodes of |oracle|.
    pub scale: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub rep: &'static str,
    pub h: f64,
    pub fields: Vec<FieldDiff>,
    pub max_diff: f64,
}

const HESS_STEP: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-6;

/// Per-node matrices → component arrays `c[i][j][node]`.
fn components(ms: &[Mat], n: usize) -> Vec<Vec<Vec<f64>>> {
    (0..n).map(|i| (0..n).map(|j| ms.iter().map(|m| m.get(i, j)).collect()).collect()).collect()
}

/// `d[k][i][j][node]` = ∂ₖ of component (i, j).
fn diff_components(grid: &Grid, c: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<Vec<f64>>>> {
    let n = grid.n();
    (0..n).map(|k| (0..n).map(|i| (0..n).map(|j| grid.diff(&c[i][j], k)).collect()).collect()).collect()
}

/// Γ^k_{ij} at one node from metric derivatives.
fn christoffel(ginv: &Mat, dg: &[Vec<Vec<Vec<f64>>>], node: usize, n: usize) -> Vec<Vec<Vec<f64>>> {
    let mut gam = vec![vec![vec![0.0; n]; n]; n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                gam[k][i][j] = 0.5 * (0..n).map(|l| ginv.get(k, l) * (dg[i][l][j][node] + dg[j][l][i][node] - dg[l][i][j][node])).sum::<f64>();
            }
        }
    }
    gam
}

struct Kinematics {
    /// L^i_j = ∂ⱼvⁱ + Γⁱ_{jk}vᵏ per node.
    grad: Vec<Mat>,
    gamma: Vec<Vec<Vec<Vec<f64>>>>,
}

fn kinematics(grid: &Grid, metric: &[Mat], v: &[Vec<f64>]) -> Kinematics {
    let n = grid.n();
    let dg = diff_components(grid, &components(metric, n));
    let dv: Vec<Vec<Vec<f64>>> = (0..n).map(|i| (0..n).map(|j| grid.diff(&v[i], j)).collect()).collect();
    let mut grad = Vec::with_capacity(grid.len());
    let mut gamma = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let gi = metric[node].inverse().expect("metric is invertible");
        let gam = christoffel(&gi, &dg, node, n);
        grad.push(Mat::from_fn(n, |i, j| dv[i][j][node] + (0..n).map(|k| gam[i][j][k] * v[k][node]).sum::<f64>()));
        gamma.push(gam);
    }
    Kinematics { grad, gamma }
}

/// √g (div σ)_i with S = ρ_m g τ g⁻¹ written as ∂ₐ(ρ_m X) − Γᵏ_{ai} S_k^a, X = g τ g⁻¹.
fn stress_divergence(grid: &Grid, rho_m: &[f64], x: &[Mat], gamma: &[Vec<Vec<Vec<f64>>>]) -> Vec<Vec<f64>> {
    let n = grid.n();
    let xc = components(x, n);
    let drho: Vec<Vec<f64>> = (0..n).map(|a| grid.diff(rho_m, a)).collect();
    let mut out = vec![vec![0.0; grid.len()]; n];
    for i in 0..n {
        for a in 0..n {
            let dx = grid.diff(&xc[i][a], a);
            for node in 0..grid.len() {
                out[i][node] += drho[a][node] * xc[i][a][node] + rho_m[node] * dx[node];
            }
        }
        for node in 0..grid.len() {
            let g = &gamma[node];
            out[i][node] -= (0..n).flat_map(|a| (0..n).map(move |k| (a, k))).map(|(a, k)| g[k][a][i] * rho_m[node] * xc[k][a][node]).sum::<f64>();
        }
    }
    out
}

fn sym_in(metric: &Mat, l: &Mat) -> Mat {
    let gi = metric.inverse().expect("metric is invertible");
    (*l + gi * l.transpose() * *metric) * 0.5
}

fn pointwise_tau(sys: &System, metric: &Mat, l: &Mat, rho_phys: f64, node: usize) -> Result<Mat> {
    match &sys.closure {
        Closure::Solid(s) => s.stress(metric, sys.reference.g(node)),
        Closure::Fluid { model, .. } => Ok(model.evaluate(&sym_in(metric, l), rho_phys)?.tau),
    }
}

fn vec_comps(grid: &Grid, b: &crate::mesh::BundleForm) -> Vec<Vec<f64>> {
    (0..grid.n()).map(|i| (0..grid.len()).map(|node| b.vec_at(node)[i]).collect()).collect()
}

fn interleave(c: &[Vec<f64>]) -> Vec<f64> {
    let len = c[0].len();
    (0..len).flat_map(|node| c.iter().map(move |comp| comp[node])).collect()
}

/// The tensor-calculus right-hand side.
pub fn oracle_rhs(sys: &System, x: &[f64]) -> Result<Rates> {
    let g = &sys.grid;
    let n = g.n();
    let u = sys.unpack(x, 0)?;
    let v = vec_comps(g, &sys.velocity(&u)?);
    match &u.first {
        First::Mass(mass) => {
            let rho = mass.density();
            let metric = sys.ambient_field.values().to_vec();
            let k = kinematics(g, &metric, &v);
            // ∂ₜρ = −(v·∇ρ + ρ div v)
            let mut rho_rate = vec![0.0; g.len()];
            for a in 0..n {
                let (dr, dv) = (g.diff(rho, a), g.diff(&v[a], a));
                for node in 0..g.len() {
                    rho_rate[node] -= v[a][node] * dr[node] + rho[node] * dv[node];
                }
            }
            let mut xs = Vec::with_capacity(g.len());
            for node in 0..g.len() {
                let rp = rho[node] / metric[node].det().sqrt();
                let tau = pointwise_tau(sys, &metric[node], &k.grad[node], rp, node)?;
                xs.push(metric[node] * tau * metric[node].inverse().expect("SPD"));
            }
            let div = stress_divergence(g, rho, &xs, &k.gamma);
            let mut vr = vec![vec![0.0; g.len()]; n];
            for node in 0..g.len() {
                let gi = metric[node].inverse().expect("SPD");
                for i in 0..n {
                    let adv: f64 = (0..n).map(|a| v[a][node] * k.grad[node].get(i, a)).sum();
                    let force: f64 = (0..n).map(|j| gi.get(i, j) * div[j][node]).sum::<f64>() / rho[node];
                    vr[i][node] = -adv + force;
                }
            }
            Ok(Rates { first: rho_rate, velocity: interleave(&vr) })
        }
        First::Metric(gh) => {
            let rho = sys.body_mass.density();
            let metric = gh.values().to_vec();
            let k = kinematics(g, &metric, &v);
            let dg = diff_components(g, &components(&metric, n));
            let low: Vec<Vec<f64>> = (0..n).map(|j| (0..g.len()).map(|node| (0..n).map(|l| metric[node].get(j, l) * v[l][node]).sum()).collect()).collect();
            let dlow: Vec<Vec<Vec<f64>>> = (0..n).map(|i| (0..n).map(|j| g.diff(&low[j], i)).collect()).collect();
            let q: Vec<f64> = (0..g.len()).map(|node| (0..n).map(|j| v[j][node] * low[j][node]).sum()).collect();
            let dq: Vec<Vec<f64>> = (0..n).map(|a| g.diff(&q, a)).collect();
            let mut g_rate = vec![Mat::zeros(n); g.len()];
            let mut xs = Vec::with_capacity(g.len());
            for node in 0..g.len() {
                // ℒ_v ĝ with ĝ_{KJ}∂_I v^K rewritten as ∂_I(v_J) − v^K ∂_I ĝ_{KJ}
                g_rate[node] = Mat::from_fn(n, |i, j| {
                    (0..n)
                        .map(|kk| v[kk][node] * (dg[kk][i][j][node] - dg[i][kk][j][node] - dg[j][i][kk][node]))
                        .sum::<f64>()
                        + dlow[i][j][node]
                        + dlow[j][i][node]
                });
                let rp = rho[node] / metric[node].det().sqrt();
                let tau = pointwise_tau(sys, &metric[node], &k.grad[node], rp, node)?;
                xs.push(metric[node] * tau * metric[node].inverse().expect("SPD"));
            }
            let div = stress_divergence(g, rho, &xs, &k.gamma);
            let mut vr = vec![vec![0.0; g.len()]; n];
            for node in 0..g.len() {
                let gi = metric[node].inverse().expect("SPD");
                let vv: Vec<f64> = (0..n).map(|i| v[i][node]).collect();
                let gv = g_rate[node].mulv(&vv);
                // ∂ₜℳ̂_I = ½ρ_m ∂_I|v|² + √ĝ(div σ)_I
                let m_rate: Vec<f64> = (0..n).map(|i| 0.5 * rho[node] * dq[i][node] + div[i][node]).collect();
                for i in 0..n {
                    vr[i][node] = (0..n).map(|j| gi.get(i, j) * (m_rate[j] / rho[node] - gv[j])).sum();
                }
            }
            let first = g_rate.iter().flat_map(|m| (0..n * n).map(move |kk| m.get(kk / n, kk % n))).collect();
            Ok(Rates { first, velocity: interleave(&vr) })
        }
        First::Disp(d) => {
            let Closure::Solid(solid) = &sys.closure else {
                return Err(PhcmError::Constitutive("material representation needs a solid".into()));
            };
            let rho = sys.body_mass.density();
            let uc = vec_comps(g, d);
            let du: Vec<Vec<Vec<f64>>> = (0..n).map(|j| (0..n).map(|b| g.diff(&uc[j], b)).collect()).collect();
            // ∂_A F_{jB} = ∂_A ∂_B u_j
            let mut ddu = vec![vec![vec![Vec::new(); n]; n]; n];
            for j in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        ddu[j][a][b] = if a == b { g.diff2(&uc[j], a) } else { g.diff(&du[j][b], a) };
                    }
                }
            }
            let drho: Vec<Vec<f64>> = (0..n).map(|a| g.diff(rho, a)).collect();
            let amb = sys.ambient;
            let gi = amb.inverse().expect("SPD");
            let mut vr = vec![vec![0.0; g.len()]; n];
            for node in 0..g.len() {
                let big_g = *sys.reference.g(node);
                let f0 = Mat::from_fn(n, |j, b| if j == b { 1.0 } else { 0.0 } + du[j][b][node]);
                let psi = |f: &Mat| -> Result<f64> { solid.energy_density(&(f.transpose() * amb * *f), &big_g) };
                let bump = |f: &Mat, p: usize, s: f64| {
                    let mut m = *f;
                    m.add_at(p / n, p % n, s);
                    m
                };
                let nn = n * n;
                let mut grad = vec![0.0; nn];
                for p in 0..nn {
                    grad[p] = (psi(&bump(&f0, p, GRAD_STEP))? - psi(&bump(&f0, p, -GRAD_STEP))?) / (2.0 * GRAD_STEP);
                }
                let hs = HESS_STEP;
                let mut div = vec![0.0; n];
                for p in 0..nn {
                    let (i, a) = (p / n, p % n);
                    div[i] += drho[a][node] * grad[p];
                    for q in 0..nn {
                        let (j, b) = (q / n, q % n);
                        let curv = ddu[j][a][b][node];
                        if curv == 0.0 {
                            continue;
                        }
                        let pp = bump(&f0, p, hs);
                        let pm = bump(&f0, p, -hs);
                        let h = (psi(&bump(&pp, q, hs))? - psi(&bump(&pp, q, -hs))? - psi(&bump(&pm, q, hs))? + psi(&bump(&pm, q, -hs))?) / (4.0 * hs * hs);
                        div[i] += rho[node] * h * curv;
                    }
                }
                for i in 0..n {
                    vr[i][node] = (0..n).map(|j| gi.get(i, j) * div[j]).sum::<f64>() / rho[node];
                }
            }
            Ok(Rates { first: interleave(&v), velocity: interleave(&vr) })
        }
    }
}

/// The network's rates (boundary inputs and projections switched off) in comparison variables.
pub fn network_rates(sys: &System, x: &[f64]) -> Result<Rates> {
    let g = &sys.grid;
    let n = g.n();
    let u = sys.unpack(x, 0)?;
    let v = sys.velocity(&u)?;
    let e = sys.eval(0.0, x, 0, false)?;
    let split = e.rate.len() - n * g.len();
    let (first, m_rate) = e.rate.split_at(split);
    let mut vr = Vec::with_capacity(n * g.len());
    for node in 0..g.len() {
        let mr = &m_rate[node * n..(node + 1) * n];
        let vv = v.vec_at(node);
        let (metric, rho, correction): (Mat, f64, Vec<f64>) = match &u.first {
            First::Disp(_) => (sys.ambient, sys.body_mass.density()[node], vec![0.0; n]),
            First::Mass(m) => {
                let low = sys.ambient.mulv(&vv);
                (sys.ambient, m.density()[node], (0..n).map(|i| first[node] * low[i]).collect())
            }
            First::Metric(gh) => {
                let gdot = Mat::from_fn(n, |i, j| first[node * n * n + i * n + j]);
                let rho = sys.body_mass.density()[node];
                let c = gdot.mulv(&vv);
                (*gh.g(node), rho, (0..n).map(|i| rho * c[i]).collect())
            }
        };
        let gi = metric.inverse().expect("SPD");
        for i in 0..n {
            vr.push((0..n).map(|j| gi.get(i, j) * (mr[j] - correction[j])).sum::<f64>() / rho);
        }
    }
    Ok(Rates { first: first.to_vec(), velocity: vr })
}

/// Compare the two right-hand sides over interior nodes.
pub fn compare_rhs(sys: &System, x: &[f64]) -> Result<OracleReport> {
    let g = &sys.grid;
    let o = oracle_rhs(sys, x)?;
    let b = network_rates(sys, x)?;
    let interior: Vec<bool> = (0..g.len()).map(|node| !g.is_boundary_node(node)).collect();
    let field = |name: &str, a: &[f64], c: &[f64]| -> FieldDiff {
        let per = a.len() / g.len();
        let (mut d, mut s) = (0.0f64, 0.0f64);
        for k in 0..a.len() {
            if interior[k / per] {
                d = d.max((a[k] - c[k]).abs());
                s = s.max(a[k].abs());
            }
        }
        FieldDiff { field: name.into(), max_diff: d, scale: s }
    };
    let first_name = match sys.rep {
        Rep::Material => "displacement rate",
        Rep::Spatial => "density rate",
        Rep::Convective => "metric rate",
    };
    let fields = vec![field(first_name, &o.first, &b.first), field("velocity rate", &o.velocity, &b.velocity)];
    let max_diff = fields.iter().map(|f| f.max_diff).fold(0.0, f64::max);
    Ok(OracleReport { rep: sys.rep.name(), h: g.max_h(), fields, max_diff })
}
