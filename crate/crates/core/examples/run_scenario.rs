//! Run a bundled scenario after comparing its initial right-hand side with the tensor-calculus oracle.
//!
//! `cargo run --release --example run_scenario -- ns2d-periodic-taylor-green-like`

use phcm::sim::{self, Simulation};

fn main() -> phcm::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "bar1d-material-ring".into());
    let scenario = sim::load(&name)?;

    let simu = Simulation::new(scenario.clone())?;
    let oracle = sim::compare_rhs(&simu.system, &simu.state)?;
    for f in &oracle.fields {
        println!("oracle {:<18} max diff {:.3e} of {:.3e}", f.field, f.max_diff, f.scale);
    }

    let out = sim::run_scenario(&scenario)?;
    println!("{}", out.summary());
    for p in sim::plot_ledger(&out.ledger, &["E_total".to_string(), "res_energy".to_string()], &out.dir)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
