//! Material, spatial and convective states of one motion, and the duality of the reduction maps.

use phcm::kinetic::{kinetic_energy, KinState};
use phcm::mesh::{BundleForm, Grid, MassForm, ScalarForm};
use phcm::state::reduction::*;
use phcm::state::{to_convective, to_spatial, MaterialState, Params};
use std::f64::consts::PI;

fn main() -> phcm::Result<()> {
    for nc in [32, 64, 128] {
        let g = Grid::periodic(&[nc], &[1.0])?;
        let p = Params::euclidean(&g, MassForm::new(&g, g.sample(|x| 1.0 + 0.2 * (2.0 * PI * x[0]).sin()))?)?;
        let disp = BundleForm::vector_field(&g, |k| [0.03 * (2.0 * PI * g.x(k)[0]).sin(), 0.0, 0.0]);
        let vel = BundleForm::vector_field(&g, |k| [(2.0 * PI * g.x(k)[0]).cos() + 0.1, 0.0, 0.0]);
        let m = MaterialState::from_velocity(&p, disp, &vel)?;
        let h = |s: KinState| kinetic_energy(&s, &p);
        let (hm, hs, hc) = (h(KinState::Material(m.clone()))?, h(KinState::Spatial(to_spatial(&m, &p)?))?, h(KinState::Convective(to_convective(&m, &p)?))?);

        let t = MaterialTangent {
            dphi: BundleForm::vector_field(&g, |k| [(2.0 * PI * g.x(k)[0]).cos() + 0.3, 0.0, 0.0]),
            dmom: BundleForm::covector_top(&g, |k| [(2.0 * PI * g.x(k)[0]).sin(), 0.0, 0.0]),
        };
        let e = SpatialCotangent {
            e_mass: ScalarForm::function(&p.space, p.space.sample(|x| (2.0 * PI * x[0]).cos()))?,
            e_mom: BundleForm::vector_field(&p.space, |k| [(2.0 * PI * p.space.x(k)[0]).sin() + 0.2, 0.0, 0.0]),
        };
        let d = spatial_duality(&m, &p, &t, &e)?;
        println!("{nc:>4} cells: H material {hm:.8} spatial {hs:.8} convective {hc:.8} | ⟨e, Φ_* f⟩ − ⟨Φ* e, f⟩ = {:.2e}", d.residual());
    }
    Ok(())
}
