use clap::{Parser, Subcommand};
use phcm::sim::{self, Simulation};
use std::path::PathBuf;
use std::process::ExitCode;

/// Port-Hamiltonian continuum mechanics on structured grids.
#[derive(Parser)]
#[command(name = "phcm", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario (file path or bundled name) and write its ledger and snapshots.
    Run { config: String },
    /// Take one step and print every audit residual.
    Audit { config: String },
    /// Compare the network right-hand side with the tensor-calculus one on the initial state.
    Oracle { config: String },
    /// Plot ledger columns, one SVG per column.
    Plot {
        ledger: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        columns: Vec<String>,
        /// Directory for the images; defaults to the ledger's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios.
    ListScenarios,
}

fn run(cmd: Cmd) -> phcm::Result<()> {
    match cmd {
        Cmd::Run { config } => {
            let s = sim::load(&config)?;
            let out = sim::run_scenario(&s)?;
            println!("{}: {}", s.name, out.summary());
            println!("snapshot sets: {}, plots: {}", out.snapshot_sets, out.plots.len());
        }
        Cmd::Audit { config } => {
            let s = sim::load(&config)?;
            let mut simu = Simulation::new(s)?;
            let (row, rep) = simu.advance()?;
            println!("{:<12} {:<26} {:<10} {:>12} {:>12} {:>12}  flag", "block", "check", "class", "residual", "scale", "tol");
            for e in &rep.audit.entries {
                println!(
                    "{:<12} {:<26} {:<10} {:>12.3e} {:>12.3e} {:>12.3e}  {}",
                    e.block,
                    e.check,
                    format!("{:?}", e.class),
                    e.residual,
                    e.scale,
                    e.tol,
                    if e.flagged { "!" } else { "" }
                );
            }
            println!("step 1: E_total {:.9e}, res_energy {:.3e}, res_alg {:.3e}, res_mesh {:.3e}", row.e_total, row.res_energy, row.res_dirac_alg, row.res_dirac_mesh);
        }
        Cmd::Oracle { config } => {
            let s = sim::load(&config)?;
            let simu = Simulation::new(s)?;
            let r = sim::compare_rhs(&simu.system, &simu.state)?;
            println!("representation {} (h = {:.4e})", r.rep, r.h);
            for f in &r.fields {
                println!("  {:<18} max |oracle − network| {:.3e}   max |oracle| {:.3e}", f.field, f.max_diff, f.scale);
            }
        }
        Cmd::Plot { ledger, columns, out } => {
            let dir = out.unwrap_or_else(|| ledger.parent().map(PathBuf::from).unwrap_or_default());
            for p in sim::plot_ledger(&ledger, &columns, &dir)? {
                println!("{}", p.display());
            }
        }
        Cmd::ListScenarios => {
            for (name, text) in sim::BUNDLED {
                let s = sim::Scenario::from_json(text)?;
                println!("{name:<34} {:<11} cells {:?} steps {} dt {}", s.representation.name(), s.grid.cells, s.steps, s.dt);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
