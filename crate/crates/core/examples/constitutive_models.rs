//! Hyperelastic stresses and equations of state, one read from CSV, followed by the pressure projection.

use phcm::constitutive::*;
use phcm::fiber::Mat;
use phcm::mesh::{BundleForm, Grid};
use std::f64::consts::PI;
use std::path::Path;

fn main() -> phcm::Result<()> {
    let big_g = Mat::identity(2);
    let g_hat = Mat::from_rows(&[&[1.21, 0.1], &[0.1, 0.95]]);
    for m in [
        HyperelasticModel::HenckyFinite { kappa: 1.0, theta: 0.5 },
        HyperelasticModel::StvkInfinitesimal { kappa: 1.0, theta: 0.5 },
        HyperelasticModel::MooneyRivlin { c1: 0.4, c2: 0.1, c3: 0.0 },
        HyperelasticModel::NeoHookean { c1: 0.5, c3: 0.0 },
    ] {
        let tau = m.stress(&g_hat, &big_g)?;
        println!("{:<19} ψ = {:.6}  τ = [{:.5} {:.5}; {:.5} {:.5}]", m.name(), m.energy_density(&g_hat, &big_g)?, tau.get(0, 0), tau.get(0, 1), tau.get(1, 0), tau.get(1, 1));
    }

    let table = Eos::from_csv(&Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/isentropic-table.csv"))?;
    let law = Eos::Isentropic { a: 1.0, gamma: 1.4 };
    for rho in [0.8, 1.0, 1.25] {
        let (a, b) = (law.eval(rho)?, table.eval(rho)?);
        println!("ρ = {rho:<5} p analytic {:.6}  p tabulated {:.6}", a.p, b.p);
    }

    let g = Grid::periodic(&[64, 64], &[1.0, 1.0])?;
    let v = BundleForm::vector_field(&g, |k| {
        let x = g.x(k);
        [(2.0 * PI * x[0]).sin() + 0.2, (2.0 * PI * x[1]).sin() * (2.0 * PI * x[0]).cos(), 0.0]
    });
    let rho = g.sample(|x| 1.0 + 0.2 * (2.0 * PI * x[1]).cos());
    let p = project_divergence_free(&g, &v, &rho, 1e-13)?;
    println!("projection: ‖div v‖∞ {:.3e} → {:.3e} in {} CG iterations", max_divergence(&g, &v), max_divergence(&g, &p.velocity), p.iterations);
    Ok(())
}
