use super::forms::{basis, binom, interior_sign, wedge_sign, BundleForm, MassForm, MetricField, ScalarForm, ValueKind};
use super::grid::Grid;
use crate::error::{PhcmError, Result};
use crate::fiber::Mat;

fn degree_below_top(k: usize, n: usize, what: &str) -> Result<()> {
    if k >= n {
        return Err(PhcmError::Degree(format!("{what} of a {k}-form in dimension {n}")));
    }
    Ok(())
}

/// Exterior derivative by centered differences.
pub fn exterior_d(grid: &Grid, a: &ScalarForm) -> Result<ScalarForm> {
    a.check(grid)?;
    let n = grid.n();
    let k = a.degree();
    degree_below_top(k, n, "exterior derivative")?;
    let src = basis(n, k);
    let dst = basis(n, k + 1);
    let mut out = ScalarForm::zeros(grid, k + 1);
    for (bj, &j) in src.iter().enumerate() {
        let comp = a.component(bj);
        for ax in 0..n {
            let bit = 1u8 << ax;
            if j & bit != 0 {
                continue;
            }
            let sign = wedge_sign(bit, j);
            let pos = dst.iter().position(|&m| m == j | bit).unwrap();
            let d = grid.diff(&comp, ax);
            for node in 0..grid.len() {
                out.add(node, pos, sign * d[node]);
            }
        }
    }
    Ok(out)
}

/// Exterior covariant derivative; the Levi-Civita connection of `m` supplies the correction.
pub fn exterior_covariant_d(grid: &Grid, phi: &BundleForm, m: &MetricField) -> Result<BundleForm> {
    phi.check(grid)?;
    m.check(grid)?;
    let n = grid.n();
    let k = phi.degree();
    degree_below_top(k, n, "exterior covariant derivative")?;
    let src = basis(n, k);
    let dst = basis(n, k + 1);
    let mut out = BundleForm::zeros(grid, k + 1, phi.kind());
    for i in 0..n {
        let d = exterior_d(grid, &phi.value_slice(grid, i))?;
        for node in 0..grid.len() {
            for b in 0..dst.len() {
                out.add(node, i, b, d.get(node, b));
            }
        }
    }
    // connection term: ± Γ dx^j ∧ Φ
    for node in 0..grid.len() {
        for (bj, &jm) in src.iter().enumerate() {
            for jx in 0..n {
                let bit = 1u8 << jx;
                if jm & bit != 0 {
                    continue;
                }
                let sign = wedge_sign(bit, jm);
                let pos = dst.iter().position(|&mm| mm == jm | bit).unwrap();
                for i in 0..n {
                    let mut s = 0.0;
                    for kk in 0..n {
                        s += match phi.kind() {
                            ValueKind::Vector => m.gamma(node, i, jx, kk) * phi.get(node, kk, bj),
                            ValueKind::Covector => -m.gamma(node, kk, jx, i) * phi.get(node, kk, bj),
                        };
                    }
                    out.add(node, i, pos, sign * s);
                }
            }
        }
    }
    Ok(out)
}

/// ∇u for a vector field u: the degree-0 case of the exterior covariant derivative.
pub fn covariant_gradient(grid: &Grid, u: &BundleForm, m: &MetricField) -> Result<BundleForm> {
    u.expect(0, ValueKind::Vector, "covariant gradient")?;
    exterior_covariant_d(grid, u, m)
}

fn minor(m: &Mat, rows: u8, cols: u8) -> f64 {
    let r: Vec<usize> = (0..3).filter(|i| rows & (1 << i) != 0).collect();
    let c: Vec<usize> = (0..3).filter(|i| cols & (1 << i) != 0).collect();
    match r.len() {
        0 => 1.0,
        1 => m.get(r[0], c[0]),
        2 => m.get(r[0], c[0]) * m.get(r[1], c[1]) - m.get(r[0], c[1]) * m.get(r[1], c[0]),
        _ => Mat::from_fn(3, |i, j| m.get(r[i], c[j])).det(),
    }
}

fn hodge_node(n: usize, k: usize, coeffs: &[f64], ginv: &Mat, scale: f64) -> Vec<f64> {
    let src = basis(n, k);
    let dst = basis(n, n - k);
    let full = ((1u16 << n) - 1) as u8;
    let mut out = vec![0.0; dst.len()];
    for (bj, &jp) in dst.iter().enumerate() {
        let i = full & !jp;
        let raised: f64 = src.iter().enumerate().map(|(bk, &km)| minor(ginv, i, km) * coeffs[bk]).sum();
        out[bj] = scale * wedge_sign(i, jp) * raised;
    }
    out
}

/// Metric Hodge star on scalar forms, α ∧ ⋆β = ⟨α, β⟩ ω_g.
pub fn hodge(grid: &Grid, a: &ScalarForm, m: &MetricField) -> Result<ScalarForm> {
    a.check(grid)?;
    m.check(grid)?;
    let n = grid.n();
    let k = a.degree();
    let nb = binom(n, k);
    let mut out = ScalarForm::zeros(grid, n - k);
    let nbo = binom(n, n - k);
    for node in 0..grid.len() {
        let c: Vec<f64> = (0..nb).map(|b| a.get(node, b)).collect();
        let r = hodge_node(n, k, &c, m.ginv(node), m.sqrt_det(node));
        for b in 0..nbo {
            out.set(node, b, r[b]);
        }
    }
    Ok(out)
}

/// Inverse of [`hodge`].
pub fn hodge_inv(grid: &Grid, a: &ScalarForm, m: &MetricField) -> Result<ScalarForm> {
    let n = grid.n();
    let k = n - a.degree();
    let sign = if (k * (n - k)) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(hodge(grid, a, m)?.scaled(sign))
}

/// Complementary star: vector-valued k-form → covector-valued (n−k)-form,
/// (⋆_c Φ)_i = (ρ/√g) ⋆(g_ij Φ^j), so that Φ ∧̇ ⋆_c Φ ≥ 0.
pub fn star_c(grid: &Grid, phi: &BundleForm, m: &MetricField, mass: &MassForm) -> Result<BundleForm> {
    phi.check(grid)?;
    m.check(grid)?;
    if phi.kind() != ValueKind::Vector {
        return Err(PhcmError::Kind("star_c expects a vector-valued form".into()));
    }
    let n = grid.n();
    let k = phi.degree();
    let nb = binom(n, k);
    let mut out = BundleForm::zeros(grid, n - k, ValueKind::Covector);
    let nbo = binom(n, n - k);
    for node in 0..grid.len() {
        let g = m.g(node);
        let scale = mass.density()[node];
        for i in 0..n {
            let low: Vec<f64> = (0..nb).map(|b| (0..n).map(|j| g.get(i, j) * phi.get(node, j, b)).sum()).collect();
            let r = hodge_node(n, k, &low, m.ginv(node), scale);
            for b in 0..nbo {
                out.set(node, i, b, r[b]);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`star_c`].
pub fn star_c_inv(grid: &Grid, psi: &BundleForm, m: &MetricField, mass: &MassForm) -> Result<BundleForm> {
    psi.check(grid)?;
    m.check(grid)?;
    if psi.kind() != ValueKind::Covector {
        return Err(PhcmError::Kind("star_c_inv expects a covector-valued form".into()));
    }
    let n = grid.n();
    let kin = psi.degree();
    let k = n - kin;
    let sign = if (k * kin) % 2 == 0 { 1.0 } else { -1.0 };
    let nb = binom(n, kin);
    let nbo = binom(n, k);
    let mut out = BundleForm::zeros(grid, k, ValueKind::Vector);
    for node in 0..grid.len() {
        let rho = mass.density()[node];
        // the unscaled star H satisfies H_{n-k} H_k = ±1/det g
        let gi = m.ginv(node);
        let scale = m.sqrt_det(node).powi(2) / rho;
        let mut parts = vec![vec![0.0; nbo]; n];
        for j in 0..n {
            let c: Vec<f64> = (0..nb).map(|b| psi.get(node, j, b)).collect();
            parts[j] = hodge_node(n, kin, &c, gi, scale);
        }
        for i in 0..n {
            for b in 0..nbo {
                let s: f64 = (0..n).map(|j| gi.get(i, j) * parts[j][b]).sum();
                out.set(node, i, b, sign * s);
            }
        }
    }
    Ok(out)
}

/// α ∧ β for scalar forms.
pub fn wedge(grid: &Grid, a: &ScalarForm, b: &ScalarForm) -> Result<ScalarForm> {
    a.check(grid)?;
    b.check(grid)?;
    let n = grid.n();
    let (k, l) = (a.degree(), b.degree());
    if k + l > n {
        return Err(PhcmError::Degree(format!("wedge of degrees {k}+{l} exceeds {n}")));
    }
    let (ba, bb, bo) = (basis(n, k), basis(n, l), basis(n, k + l));
    let mut out = ScalarForm::zeros(grid, k + l);
    for node in 0..grid.len() {
        for (ia, &ma) in ba.iter().enumerate() {
            for (ib, &mb) in bb.iter().enumerate() {
                let s = wedge_sign(ma, mb);
                if s == 0.0 {
                    continue;
                }
                let pos = bo.iter().position(|&m| m == ma | mb).unwrap();
                out.add(node, pos, s * a.get(node, ia) * b.get(node, ib));
            }
        }
    }
    Ok(out)
}

/// a ∧̇ b: contract the value indices of dual-kind bundle forms and wedge form parts in order.
pub fn wedge_dot(grid: &Grid, a: &BundleForm, b: &BundleForm) -> Result<ScalarForm> {
    a.check(grid)?;
    b.check(grid)?;
    if a.kind() == b.kind() {
        return Err(PhcmError::Kind("wedge-dot needs a vector-valued and a covector-valued form".into()));
    }
    let n = grid.n();
    let mut out: Option<ScalarForm> = None;
    for i in 0..n {
        let w = wedge(grid, &a.value_slice(grid, i), &b.value_slice(grid, i))?;
        match out.as_mut() {
            None => out = Some(w),
            Some(o) => o.axpy(1.0, &w),
        }
    }
    Ok(out.expect("n ≥ 1"))
}

fn interior_node(n: usize, k: usize, u: &[f64], coeffs: &[f64]) -> Vec<f64> {
    let src = basis(n, k);
    let dst = basis(n, k - 1);
    let mut out = vec![0.0; dst.len()];
    for (bj, &j) in dst.iter().enumerate() {
        for a in 0..n {
            let bit = 1u8 << a;
            if j & bit != 0 {
                continue;
            }
            let full = j | bit;
            let pos = src.iter().position(|&m| m == full).unwrap();
            out[bj] += u[a] * interior_sign(a, full) * coeffs[pos];
        }
    }
    out
}

fn check_vector_field(grid: &Grid, u: &BundleForm) -> Result<()> {
    u.check(grid)?;
    u.expect(0, ValueKind::Vector, "interior product direction")
}

/// ι_u α for a scalar form of degree ≥ 1.
pub fn interior(grid: &Grid, u: &BundleForm, a: &ScalarForm) -> Result<ScalarForm> {
    check_vector_field(grid, u)?;
    a.check(grid)?;
    let n = grid.n();
    let k = a.degree();
    if k == 0 {
        return Err(PhcmError::Degree("interior product of a 0-form".into()));
    }
    let nb = binom(n, k);
    let nbo = binom(n, k - 1);
    let mut out = ScalarForm::zeros(grid, k - 1);
    for node in 0..grid.len() {
        let c: Vec<f64> = (0..nb).map(|b| a.get(node, b)).collect();
        let r = interior_node(n, k, &u.vec_at(node), &c);
        for b in 0..nbo {
            out.set(node, b, r[b]);
        }
    }
    Ok(out)
}

/// ι_u acting on the form part of a bundle-valued form.
pub fn interior_bundle(grid: &Grid, u: &BundleForm, phi: &BundleForm) -> Result<BundleForm> {
    check_vector_field(grid, u)?;
    phi.check(grid)?;
    let n = grid.n();
    let k = phi.degree();
    if k == 0 {
        return Err(PhcmError::Degree("interior product of a 0-form".into()));
    }
    let nb = binom(n, k);
    let nbo = binom(n, k - 1);
    let mut out = BundleForm::zeros(grid, k - 1, phi.kind());
    for node in 0..grid.len() {
        let uv = u.vec_at(node);
        for i in 0..n {
            let c: Vec<f64> = (0..nb).map(|b| phi.get(node, i, b)).collect();
            let r = interior_node(n, k, &uv, &c);
            for b in 0..nbo {
                out.set(node, i, b, r[b]);
            }
        }
    }
    Ok(out)
}

/// Lie derivative of a scalar form by Cartan's formula, d ι_u α + ι_u dα.
pub fn lie_scalar(grid: &Grid, u: &BundleForm, a: &ScalarForm) -> Result<ScalarForm> {
    let n = grid.n();
    let k = a.degree();
    let mut out = ScalarForm::zeros(grid, k);
    if k > 0 {
        out.axpy(1.0, &exterior_d(grid, &interior(grid, u, a)?)?);
    }
    if k < n {
        out.axpy(1.0, &interior(grid, u, &exterior_d(grid, a)?)?);
    }
    Ok(out)
}

/// Lie derivative of a covector-valued top form ℳ = μ ⊗ v♭ by the identity
/// ℒ_η ℳ = d_∇(ι_η ℳ) + μ ⊗ (∇η ∧̇ v♭).
pub fn lie_covector_top(grid: &Grid, eta: &BundleForm, mom: &BundleForm, m: &MetricField) -> Result<BundleForm> {
    let n = grid.n();
    mom.expect(n, ValueKind::Covector, "Lie derivative target")?;
    let mut out = exterior_covariant_d(grid, &interior_bundle(grid, eta, mom)?, m)?;
    let grad = covariant_gradient(grid, eta, m)?;
    for node in 0..grid.len() {
        for i in 0..n {
            let s: f64 = (0..n).map(|j| grad.get(node, j, i) * mom.get(node, j, 0)).sum();
            out.add(node, i, 0, s);
        }
    }
    Ok(out)
}

/// Coordinate formula for the same Lie derivative, η^j∂_jM_i + M_i∂_jη^j + M_j∂_iη^j.
pub fn lie_covector_top_direct(grid: &Grid, eta: &BundleForm, mom: &BundleForm) -> Result<BundleForm> {
    check_vector_field(grid, eta)?;
    let n = grid.n();
    mom.expect(n, ValueKind::Covector, "Lie derivative target")?;
    let de = jacobian(grid, eta);
    let mut out = BundleForm::zeros(grid, n, ValueKind::Covector);
    for i in 0..n {
        let mi = mom.component(i, 0);
        let dmi: Vec<Vec<f64>> = (0..n).map(|j| grid.diff(&mi, j)).collect();
        for node in 0..grid.len() {
            let e = eta.vec_at(node);
            let div: f64 = (0..n).map(|j| de[node].get(j, j)).sum();
            let mut s = mi[node] * div;
            for j in 0..n {
                s += e[j] * dmi[j][node] + mom.get(node, j, 0) * de[node].get(j, i);
            }
            out.set(node, i, 0, s);
        }
    }
    Ok(out)
}

/// Coordinate Lie derivative of a density, η^j∂_jρ + ρ∂_jη^j.
pub fn lie_top_direct(grid: &Grid, eta: &BundleForm, rho: &ScalarForm) -> Result<ScalarForm> {
    check_vector_field(grid, eta)?;
    let n = grid.n();
    if rho.degree() != n {
        return Err(PhcmError::Degree("density must be a top form".into()));
    }
    let de = jacobian(grid, eta);
    let r = rho.component(0);
    let dr: Vec<Vec<f64>> = (0..n).map(|j| grid.diff(&r, j)).collect();
    let mut out = ScalarForm::zeros(grid, n);
    for node in 0..grid.len() {
        let e = eta.vec_at(node);
        let mut s = r[node] * de[node].trace();
        for j in 0..n {
            s += e[j] * dr[j][node];
        }
        out.set(node, 0, s);
    }
    Ok(out)
}

/// Coordinate Lie derivative of a symmetric (0,2) field,
/// η^K∂_K g_IJ + g_KJ ∂_I η^K + g_IK ∂_J η^K.
pub fn lie_metric_direct(grid: &Grid, eta: &BundleForm, g: &MetricField) -> Result<Vec<Mat>> {
    check_vector_field(grid, eta)?;
    g.check(grid)?;
    let n = grid.n();
    let de = jacobian(grid, eta);
    let mut dg = vec![[Mat::zeros(n); 3]; grid.len()];
    for i in 0..n {
        for j in 0..n {
            let c: Vec<f64> = (0..grid.len()).map(|node| g.g(node).get(i, j)).collect();
            for k in 0..n {
                let d = grid.diff(&c, k);
                for node in 0..grid.len() {
                    dg[node][k].set(i, j, d[node]);
                }
            }
        }
    }
    Ok((0..grid.len())
        .map(|node| {
            let e = eta.vec_at(node);
            let gm = g.g(node);
            // de[node].get(k, i) = ∂_i η^k
            Mat::from_fn(n, |i, j| {
                let mut s = 0.0;
                for k in 0..n {
                    s += e[k] * dg[node][k].get(i, j) + gm.get(k, j) * de[node].get(k, i) + gm.get(i, k) * de[node].get(k, j);
                }
                s
            })
        })
        .collect())
}

/// Plain partial-derivative matrix ∂_j u^i per node (row i, column j).
pub fn jacobian(grid: &Grid, u: &BundleForm) -> Vec<Mat> {
    let n = grid.n();
    let mut out = vec![Mat::zeros(n); grid.len()];
    for i in 0..n {
        let c = u.component(i, 0);
        for j in 0..n {
            let d = grid.diff(&c, j);
            for node in 0..grid.len() {
                out[node].set(i, j, d[node]);
            }
        }
    }
    out
}

/// ∫ α for a top-degree form.
pub fn integrate(grid: &Grid, a: &ScalarForm) -> Result<f64> {
    a.check(grid)?;
    if a.degree() != grid.n() {
        return Err(PhcmError::Degree(format!("cannot integrate a {}-form over dimension {}", a.degree(), grid.n())));
    }
    Ok(grid.quadrature(a.data()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::forms::flux_slot;
    use std::f64::consts::PI;

    fn smooth(x: [f64; 3], s: f64) -> f64 {
        (2.0 * PI * x[0] + s).sin() * (1.0 + 0.3 * (2.0 * PI * x[1] - s).cos()) + 0.2 * (2.0 * PI * x[2]).cos()
    }

    fn wavy_metric(grid: &Grid) -> MetricField {
        let n = grid.n();
        MetricField::from_fn(grid, |x| {
            let mut m = Mat::identity(n);
            for a in 0..n {
                m.set(a, a, 1.0 + 0.2 * (2.0 * PI * x[(a + 1) % n]).sin());
            }
            if n > 1 {
                let o = 0.1 * (2.0 * PI * x[0]).cos();
                m.set(0, 1, o);
                m.set(1, 0, o);
            }
            m
        })
        .unwrap()
    }

    #[test]
    fn d_of_constant_is_zero() {
        let g = Grid::periodic(&[6, 5], &[1.0, 1.0]).unwrap();
        let f = ScalarForm::function(&g, vec![3.0; g.len()]).unwrap();
        assert_eq!(exterior_d(&g, &f).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn dd_vanishes() {
        for topo in [crate::mesh::Topology::Periodic, crate::mesh::Topology::Bounded] {
            let g = Grid::new(&[6, 7, 5], &[1.0, 1.0, 1.0], &[topo; 3]).unwrap();
            let f = ScalarForm::function(&g, g.sample(|x| smooth(x, 0.3))).unwrap();
            let dd = exterior_d(&g, &exterior_d(&g, &f).unwrap()).unwrap();
            assert!(dd.max_abs() < 1e-11, "{:?}: {}", topo, dd.max_abs());
            let mut one = ScalarForm::zeros(&g, 1);
            for node in 0..g.len() {
                for b in 0..3 {
                    one.set(node, b, smooth(g.x(node), b as f64));
                }
            }
            let dd1 = exterior_d(&g, &exterior_d(&g, &one).unwrap()).unwrap();
            assert!(dd1.max_abs() < 1e-10);
        }
        assert!(exterior_d(&Grid::periodic(&[4], &[1.0]).unwrap(), &ScalarForm::zeros(&Grid::periodic(&[4], &[1.0]).unwrap(), 1)).is_err());
    }

    #[test]
    fn hodge_round_trip_and_inner_product() {
        for n in 1..=3 {
            let cells = vec![5; n];
            let g = Grid::periodic(&cells, &vec![1.0; n]).unwrap();
            let m = wavy_metric(&g);
            for k in 0..=n {
                let nb = binom(n, k);
                let mut a = ScalarForm::zeros(&g, k);
                for node in 0..g.len() {
                    for b in 0..nb {
                        a.set(node, b, smooth(g.x(node), 0.7 * b as f64 + k as f64));
                    }
                }
                let back = hodge_inv(&g, &hodge(&g, &a, &m).unwrap(), &m).unwrap();
                let err = back.data().iter().zip(a.data()).fold(0.0f64, |e, (x, y)| e.max((x - y).abs()));
                assert!(err < 1e-13, "n={n} k={k}: {err}");
                let aa = wedge(&g, &a, &hodge(&g, &a, &m).unwrap()).unwrap();
                assert!(aa.data().iter().all(|&v| v >= -1e-14));
            }
        }
    }

    #[test]
    fn star_c_round_trip_and_positivity() {
        for n in 1..=3 {
            let g = Grid::periodic(&vec![5; n], &vec![1.0; n]).unwrap();
            let m = wavy_metric(&g);
            let mass = MassForm::new(&g, g.sample(|x| 1.5 + 0.5 * (2.0 * PI * x[0]).sin())).unwrap();
            for k in 0..=n {
                let mut v = BundleForm::zeros(&g, k, ValueKind::Vector);
                for (t, val) in v.data_mut().iter_mut().enumerate() {
                    *val = ((t as f64) * 0.37).sin();
                }
                let s = star_c(&g, &v, &m, &mass).unwrap();
                let back = star_c_inv(&g, &s, &m, &mass).unwrap();
                let err = back.data().iter().zip(v.data()).fold(0.0f64, |e, (x, y)| e.max((x - y).abs()));
                assert!(err < 1e-13, "n={n} k={k}: {err}");
                let p = wedge_dot(&g, &v, &s).unwrap();
                assert!(p.data().iter().all(|&x| x >= -1e-14));
            }
        }
    }

    #[test]
    fn star_c_of_unit_vector() {
        let g = Grid::periodic(&[4, 4], &[1.0, 1.0]).unwrap();
        let m = MetricField::euclidean(&g);
        let mass = MassForm::uniform(&g, 1.0).unwrap();
        let v = BundleForm::vector_field(&g, |_| [1.0, 0.0, 0.0]);
        let s = star_c(&g, &v, &m, &mass).unwrap();
        assert_eq!(s.degree(), 2);
        for node in 0..g.len() {
            assert_eq!(s.vec_at(node)[..2], [1.0, 0.0]);
        }
        assert!(star_c(&g, &BundleForm::zeros(&g, 0, ValueKind::Vector), &m, &mass).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn kinetic_integrand_matches_quadrature() {
        let g = Grid::periodic(&[8, 8], &[1.0, 1.0]).unwrap();
        let m = wavy_metric(&g);
        let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.3 * (2.0 * PI * x[1]).cos())).unwrap();
        let v = BundleForm::vector_field(&g, |i| {
            let x = g.x(i);
            [smooth(x, 0.1), smooth(x, 1.3), 0.0]
        });
        let vv = wedge_dot(&g, &v, &star_c(&g, &v, &m, &mass).unwrap()).unwrap();
        let lhs = integrate(&g, &vv).unwrap();
        let mut rhs = 0.0;
        for node in 0..g.len() {
            let vn = v.vec_at(node);
            let gm = m.g(node);
            let mut q = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    q += gm.get(i, j) * vn[i] * vn[j];
                }
            }
            rhs += g.weight(node) * q * mass.density()[node];
        }
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
    }

    #[test]
    fn interior_twice_is_zero() {
        let g = Grid::periodic(&[5, 5, 5], &[1.0; 3]).unwrap();
        let u = BundleForm::vector_field(&g, |i| {
            let x = g.x(i);
            [smooth(x, 0.0), smooth(x, 1.0), smooth(x, 2.0)]
        });
        for k in 2..=3 {
            let mut a = ScalarForm::zeros(&g, k);
            for (t, v) in a.data_mut().iter_mut().enumerate() {
                *v = (t as f64 * 0.11).cos();
            }
            let ii = interior(&g, &u, &interior(&g, &u, &a).unwrap()).unwrap();
            assert!(ii.max_abs() < 1e-14);
        }
        assert!(interior(&g, &u, &ScalarForm::zeros(&g, 0)).is_err());
    }

    #[test]
    fn transport_of_density_is_second_order() {
        let err = |nc: usize| {
            let g = Grid::periodic(&[nc], &[1.0]).unwrap();
            let c = 0.7;
            let u = BundleForm::vector_field(&g, |_| [c, 0.0, 0.0]);
            let rho = ScalarForm::top(&g, g.sample(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin())).unwrap();
            let l = lie_scalar(&g, &u, &rho).unwrap();
            (0..g.len())
                .map(|i| (l.get(i, 0) - c * PI * (2.0 * PI * g.x(i)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        assert!((err(32) / err(64)).log2() > 1.95);
    }

    #[test]
    fn lie_identity_matches_direct_formula() {
        let err = |nc: usize| {
            let g = Grid::periodic(&[nc, nc], &[1.0, 1.0]).unwrap();
            let m = wavy_metric(&g);
            let eta = BundleForm::vector_field(&g, |i| {
                let x = g.x(i);
                [smooth(x, 0.4), smooth(x, 2.1), 0.0]
            });
            let mom = BundleForm::covector_top(&g, |i| {
                let x = g.x(i);
                [smooth(x, 1.1), smooth(x, -0.5), 0.0]
            });
            let a = lie_covector_top(&g, &eta, &mom, &m).unwrap();
            let b = lie_covector_top_direct(&g, &eta, &mom).unwrap();
            a.data().iter().zip(b.data()).fold(0.0f64, |e, (x, y)| e.max((x - y).abs()))
        };
        let (e1, e2) = (err(24), err(48));
        assert!((e1 / e2).log2() > 1.9, "{e1} {e2}");
    }

    #[test]
    fn covariant_gradient_matches_christoffel_oracle_1d() {
        let g = Grid::periodic(&[16], &[1.0]).unwrap();
        let m = MetricField::from_fn(&g, |x| Mat::diag(&[2.0 + (2.0 * PI * x[0]).sin()])).unwrap();
        let u = BundleForm::vector_field(&g, |i| [(2.0 * PI * g.x(i)[0]).cos(), 0.0, 0.0]);
        let grad = covariant_gradient(&g, &u, &m).unwrap();
        let uc = u.component(0, 0);
        let du = g.diff(&uc, 0);
        let gc: Vec<f64> = (0..g.len()).map(|i| m.g(i).get(0, 0)).collect();
        let dg = g.diff(&gc, 0);
        for i in 0..g.len() {
            let expect = du[i] + 0.5 * dg[i] / gc[i] * uc[i];
            assert!((grad.get(i, 0, 0) - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn integration_by_parts_closed_domain() {
        let g = Grid::periodic(&[12, 10], &[1.0, 1.0]).unwrap();
        let m = wavy_metric(&g);
        let v = BundleForm::vector_field(&g, |i| {
            let x = g.x(i);
            [smooth(x, 0.3), smooth(x, 0.9), 0.0]
        });
        let mut t = BundleForm::zeros(&g, 1, ValueKind::Covector);
        for node in 0..g.len() {
            let x = g.x(node);
            let f = Mat::from_fn(2, |i, a| smooth(x, (i * 2 + a) as f64));
            t.set_flux(node, &f);
        }
        let a = wedge_dot(&g, &covariant_gradient(&g, &v, &m).unwrap(), &t).unwrap();
        let b = wedge_dot(&g, &v, &exterior_covariant_d(&g, &t, &m).unwrap()).unwrap();
        let total = integrate(&g, &a).unwrap() + integrate(&g, &b).unwrap();
        assert!(total.abs() < 1e-12, "{total}");
        let _ = flux_slot(2, 0);
    }
}
