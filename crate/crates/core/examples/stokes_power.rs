//! Stokes-Dirac stress power on a square with velocity and traction faces.

use phcm::fiber::Mat;
use phcm::mesh::*;
use phcm::stress::*;

fn main() -> phcm::Result<()> {
    println!("{:>5} {:>14} {:>14} {:>14} {:>14} {:>12}", "cells", "∫dv∧̇t", "∫v∧̇dt", "bnd velocity", "bnd traction", "|sum|");
    let mut prev = None;
    for nc in [16, 32, 64, 128] {
        let g = Grid::bounded(&[nc, nc], &[1.0, 1.0])?.with_face(1, 0, FacePort::Traction)?.with_face(1, 1, FacePort::Traction)?;
        let v = BundleForm::vector_field(&g, |k| {
            let x = g.x(k);
            [(1.3 * x[0]).sin() * x[1].cos(), (x[0] * x[1]).cos(), 0.0]
        });
        let mut t = BundleForm::zeros(&g, 1, ValueKind::Covector);
        for k in 0..g.len() {
            let x = g.x(k);
            t.set_flux(k, &Mat::from_rows(&[&[1.0 + x[0], 0.3 * x[1]], &[0.2 * x[0] * x[1], (x[0] - x[1]).sin()]]));
        }
        let s = stokes_dirac_apply(&g, &MetricField::euclidean(&g), &v, &t, None, None)?;
        let terms = stokes_balance_terms(&g, &s)?;
        let sum = terms.iter().sum::<f64>().abs();
        let rate = prev.map_or(String::new(), |p: f64| format!("  order {:.2}", (p / sum).log2()));
        println!("{nc:>5} {:>14.8} {:>14.8} {:>14.8} {:>14.8} {sum:>12.3e}{rate}", terms[0], terms[1], terms[2], terms[3]);
        prev = Some(sum);
    }
    Ok(())
}
