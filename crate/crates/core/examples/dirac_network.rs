//! Compose the elastic Dirac network and print each block's power audit.

use phcm::fiber::Mat;
use phcm::kinetic::{convective_metric_derivative, elastic_network, Rep};
use phcm::mesh::*;
use phcm::net::PortValue;
use std::collections::BTreeMap;
use std::f64::consts::PI;

fn main() -> phcm::Result<()> {
    let g = Grid::new(&[24, 16], &[1.0, 1.0], &[Topology::Bounded, Topology::Periodic])?;
    let mass = MassForm::new(&g, g.sample(|x| 1.0 + 0.1 * x[0]))?;
    let metric = MetricField::from_fn(&g, |x| Mat::from_rows(&[&[1.0 + 0.1 * (PI * x[0]).sin(), 0.05], &[0.05, 1.1]]))?;
    let v = BundleForm::vector_field(&g, |k| {
        let x = g.x(k);
        [(PI * x[0]).sin(), 0.2 * (2.0 * PI * x[1]).cos(), 0.0]
    });
    let momentum = star_c(&g, &v, &metric, &mass)?;
    let (net, externals) = elastic_network(Rep::Convective, &g, false)?;
    let mut e = BTreeMap::new();
    for name in &externals {
        let val = match name.as_str() {
            "kinetic.e_g" => PortValue::Bundle(convective_metric_derivative(&g, &v, &mass)),
            "kinetic.e_M" => PortValue::Bundle(v.clone()),
            "kinetic.momentum" => PortValue::Bundle(momentum.clone()),
            "voldev.e_vol" => PortValue::Scalar(ScalarForm::top(&g, g.sample(|x| 0.1 * x[0]))?),
            "voldev.e_dev" => {
                let mut t = BundleForm::zeros(&g, 1, ValueKind::Covector);
                for k in 0..g.len() {
                    t.set_flux(k, &Mat::from_rows(&[&[0.05, 0.02], &[0.02, -0.05]]));
                }
                PortValue::Bundle(t)
            }
            "stokes.f_b1" | "stokes.e_b2" => PortValue::Boundary(BoundaryField::zeros(&g, 2)),
            _ => PortValue::Metric(metric.clone()),
        };
        e.insert(name.clone(), val);
    }
    let out = net.evaluate(&e.into_iter().collect())?;
    println!("{:<10} {:<24} {:<10} {:>11} {:>11}", "block", "check", "class", "residual", "tolerance");
    for a in &out.audit.entries {
        println!("{:<10} {:<24} {:<10} {:>11.3e} {:>11.3e}{}", a.block, a.check, format!("{:?}", a.class), a.residual, a.tol, if a.flagged { "  !" } else { "" });
    }
    println!("max |f_M| = {:.4}", out.bundle("kinetic.f_M")?.max_abs());
    Ok(())
}
