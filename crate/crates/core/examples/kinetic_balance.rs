//! Variational derivatives of the kinetic energy and the agreement of the two balance-law forms.

use phcm::fiber::Mat;
use phcm::kinetic::*;
use phcm::mesh::*;
use phcm::state::{Params, SpatialState};
use std::f64::consts::PI;

fn main() -> phcm::Result<()> {
    for nc in [16, 32, 64] {
        let g = Grid::periodic(&[nc, nc], &[1.0, 1.0])?;
        let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.3 * (2.0 * PI * x[0]).sin()))?;
        let momentum = BundleForm::covector_top(&g, |k| {
            let x = g.x(k);
            let r = mass.density()[k];
            [r * (2.0 * PI * x[1]).sin(), 0.5 * r * (2.0 * PI * x[0]).cos(), 0.0]
        });
        let s = SpatialState { mass, momentum };
        let p = Params::euclidean(&g, MassForm::uniform(&g, 1.0)?)?;
        let h = kinetic_energy(&KinState::Spatial(s.clone()), &p)?;
        let d = variational_derivatives(&KinState::Spatial(s.clone()), &p)?;
        let FirstDerivative::Mass(e_mu) = &d.first else { unreachable!() };
        let m = MetricField::from_fn(&g, |x| Mat::diag(&[1.0 + 0.1 * (2.0 * PI * x[1]).cos(), 1.0]))?;
        let zero = BundleForm::zeros(&g, 2, ValueKind::Covector);
        let (a_mu, a_m) = spatial_balance_rhs(&g, &m, &s, &zero, BalanceForm::Advection)?;
        let (c_mu, c_m) = spatial_balance_rhs(&g, &m, &s, &zero, BalanceForm::Conservation)?;
        println!(
            "{nc:>3}²: H = {h:.8}, min e_μ = {:.4}; advection − conservation: mass {:.2e}, momentum {:.2e}",
            e_mu.data().iter().cloned().fold(f64::INFINITY, f64::min),
            a_mu.minus(&c_mu).max_abs(),
            a_m.minus(&c_m).max_abs()
        );
    }
    Ok(())
}
