//! Pointwise tensor algebra: metric-twisted and trace splits, logarithmic strain.

use phcm::fiber::*;

fn main() -> phcm::Result<()> {
    let g = MetricFiber::from_mat(Mat::from_rows(&[&[2.0, 0.3, 0.0], &[0.3, 1.0, 0.1], &[0.0, 0.1, 1.5]]))?;
    let x = MixedTensor(Mat::from_rows(&[&[0.1, 0.4, -0.2], &[0.0, 0.3, 0.5], &[0.2, -0.1, -0.6]]));
    let y = DualMixed(Mat::from_rows(&[&[1.0, 0.0, 0.3], &[0.2, -0.5, 0.0], &[0.0, 0.7, 0.4]]));

    let (xs, xa) = project_sym_asym_metric(&x, &g)?;
    let (ys, ya) = project_sym_asym_metric_dual(&y, &g)?;
    println!("⟨y, x⟩ = {:.15}", duality_pair(&y, &x)?);
    println!("⟨y_sym, x_sym⟩ + ⟨y_asym, x_asym⟩ = {:.15}", duality_pair(&ys, &xs)? + duality_pair(&ya, &xa)?);

    let (xv, xd) = project_vol_dev(&x);
    let (yv, yd) = project_vol_dev_dual(&y);
    println!("y_vol x_vol + ⟨y_dev, x_dev⟩ = {:.15}  (tr x_dev = {:.1e})", yv * xv + duality_pair(&yd, &xd)?, xd.0.trace());

    // conformal stretch by e^{2a} gives ζ = a I
    let gh = MetricFiber::from_mat(*g.mat() * 1.2f64.exp())?;
    let zeta = strain_log(&g, &gh)?;
    println!("ζ for a conformal stretch: diag {:.6} {:.6} {:.6}", zeta.0.get(0, 0), zeta.0.get(1, 1), zeta.0.get(2, 2));
    let (i1, i2, i3) = rotational_invariants(&zeta);
    println!("invariants {i1:.6} {i2:.6} {i3:.6}");
    let lc = log_c(&g, &gh)?;
    println!("tr ln Ĉ = {:.15}, ln det Ĉ = {:.15}", lc.0.trace(), (gh.mat().det() / g.mat().det()).ln());
    Ok(())
}
