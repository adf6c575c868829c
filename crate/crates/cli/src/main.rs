//! `wflow`: runs the library's experiments from JSON scenario files.
//!
//! Exit status: 0 when every property check passes, 2 when one fails,
//! 1 on any error.

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "wflow", version, about = "Lagrangian flows of probability vector fields on discrete measures")]
struct Cli {
    /// Directory for CSV/JSON artifacts (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for randomized steps; overrides the scenario's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solver tolerance (relative tolerance for `decompose`).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact W2 distance between two measure files; writes plan.csv.
    W2 {
        a: PathBuf,
        b: PathBuf,
        /// Also enumerate all matchings and compare (small inputs only).
        #[arg(long)]
        bruteforce: bool,
    },
    /// Exact W-infinity distance between two measure files.
    WInf { a: PathBuf, b: PathBuf },
    /// Geodesic decomposition of a coupling file; writes decomposition.csv.
    Decompose { coupling: PathBuf },
    /// Evolves `measures[0]`; writes trajectory.csv and diagnostics.json.
    Simulate { scenario: PathBuf },
    /// JKO steps of a `pw` functional; writes jko.json.
    Jko { scenario: PathBuf },
    /// Yosida norms `(1 − λτ)|B_τ X|` on a halving step grid.
    Yosida { scenario: PathBuf },
    /// Total dissipativity of a field on `measures[0..2]`.
    Verify { scenario: PathBuf },
    /// EVI residuals along a flow; writes evi.csv.
    Evi { scenario: PathBuf },
    /// Contraction ratios of two flows; writes contraction.csv.
    Contraction { scenario: PathBuf },
    /// Implicit Euler error table; writes euler_study.csv.
    EulerStudy { scenario: PathBuf },
    /// Mean-field convergence table; writes meanfield.csv.
    Meanfield { scenario: PathBuf },
    /// Injectivity perturbation of a point set; writes perturbed.json.
    Perturb { scenario: PathBuf },
    /// Runs the scenario named by its `experiment` field.
    Run { scenario: PathBuf },
}

fn main() -> ExitCode {
    // usage errors exit 1, keeping 2 for failed property checks
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(&cli) {
        Ok(commands::Verdict::Pass) => ExitCode::SUCCESS,
        Ok(commands::Verdict::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
