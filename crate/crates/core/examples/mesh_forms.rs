//! Exterior calculus on a grid: Stokes' theorem under refinement and the complementary Hodge star.

use phcm::fiber::Mat;
use phcm::mesh::*;
use std::f64::consts::PI;

fn main() -> phcm::Result<()> {
    let g = Grid::periodic(&[32, 32], &[1.0, 1.0])?;
    let f = ScalarForm::function(&g, g.sample(|x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()))?;
    let df = exterior_d(&g, &f)?;
    println!("periodic 32²: max |d d f| = {:.2e}", exterior_d(&g, &df)?.max_abs());

    // ∫_B d(α) = ∫_∂B α for a 1-form on a bounded square
    for nc in [16, 32, 64] {
        let b = Grid::bounded(&[nc, nc], &[1.0, 1.0])?;
        let mut alpha = ScalarForm::zeros(&b, 1);
        for node in 0..b.len() {
            let x = b.x(node);
            alpha.set(node, 0, x[0] * x[1] * x[1]);
            alpha.set(node, 1, (x[0] + x[1]).sin());
        }
        let lhs = integrate(&b, &exterior_d(&b, &alpha)?)?;
        let rhs = boundary_integral(&b, &alpha)?;
        println!("bounded {nc}²: ∫ dα = {lhs:.10}, ∮ α = {rhs:.10}");
    }

    // ⋆_c maps a velocity to a momentum flux density and back
    let m = MetricField::from_fn(&g, |x| Mat::from_rows(&[&[1.0 + 0.2 * (2.0 * PI * x[0]).sin(), 0.1], &[0.1, 1.3]]))?;
    let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.3 * (2.0 * PI * x[1]).cos()))?;
    let v = BundleForm::vector_field(&g, |k| [g.x(k)[1], 0.5, 0.0]);
    let mom = star_c(&g, &v, &m, &mass)?;
    let back = star_c_inv(&g, &mom, &m, &mass)?;
    println!("⋆_c⁻¹ ⋆_c round trip error {:.2e}", back.minus(&v).max_abs());
    println!("kinetic energy ½∫ v ∧̇ ⋆_c v = {:.10}", 0.5 * integrate(&g, &wedge_dot(&g, &v, &mom)?)?);
    Ok(())
}
