//! `dualqp` — dual first-order solver for box- and cone-constrained convex
//! quadratic programs.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use dualqp_cli::commands::{
    parse_epsilon_in, parse_method, parse_recovery, parse_rho, run_oracle, run_solve, SolveOptions,
    EXIT_ILL_POSED, EXIT_OK,
};
use dualqp_cli::experiments::{run_eq_timing, run_last_vs_average, run_sensitivity, BenchSpec};

#[derive(Parser)]
#[command(
    name = "dualqp",
    version,
    about = "Dual first-order methods for convex quadratic programs",
    long_about = "Solves min 0.5 u'Qu + q'u over a box subject to rows of Gu + g pinned to \
                  zero or kept nonpositive, by projected (fast) gradient ascent on an exact or \
                  augmented dual with inexact inner solves on certified accuracy schedules."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file (exit 0 converged, 2 iteration cap, 3 ill-posed)
    Solve(SolveArgs),
    /// Print the exact optimum of a small problem file by enumeration
    Oracle {
        /// Problem file (JSON)
        file: PathBuf,
    },
    /// Run a benchmark experiment and write CSV tables
    Bench(BenchArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file (JSON)
    file: PathBuf,
    /// Outer method: dgm (plain) or dfgm (accelerated)
    #[arg(long, default_value = "dfgm")]
    method: String,
    /// Target accuracy for objective error and infeasibility
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Penalty weight: "auto" or a number (0 forces the ordinary Lagrangian)
    #[arg(long, default_value = "auto")]
    rho: String,
    /// Inner accuracy: "auto" (certified schedule) or a number
    #[arg(long = "epsilon-in", default_value = "auto")]
    epsilon_in: String,
    /// Monitored primal candidate: "last" or "average"
    #[arg(long, default_value = "average")]
    recovery: String,
    /// Upper estimate of the distance from the initial multiplier to the
    /// nearest dual solution (schedules certify only when this dominates it)
    #[arg(long = "dual-radius", default_value_t = 1.0)]
    dual_radius: f64,
    /// Outer-iteration override: below the certified budget caps the run,
    /// above extends it
    #[arg(long = "max-outer")]
    max_outer: Option<u64>,
    /// Write the per-iteration trace to this CSV file
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print how the constants and schedules were derived before solving
    #[arg(long)]
    explain: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment: sensitivity, eq-timing, last-vs-avg, or all
    experiment: String,
    /// Base seed for instance generation
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory for the CSV tables
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Record wall time per run (makes output nondeterministic)
    #[arg(long)]
    timing: bool,
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => {
            let opts = SolveOptions {
                file: args.file,
                method: parse_method(&args.method)?,
                epsilon: args.epsilon,
                rho: parse_rho(&args.rho)?,
                epsilon_in: parse_epsilon_in(&args.epsilon_in)?,
                recovery: parse_recovery(&args.recovery)?,
                dual_radius: args.dual_radius,
                max_outer: args.max_outer,
                trace: args.trace,
                explain: args.explain,
            };
            run_solve(&opts)
        }
        Command::Oracle { file } => run_oracle(&file),
        Command::Bench(args) => {
            let spec = BenchSpec {
                seed: args.seed,
                out_dir: args.out,
                timing: args.timing,
            };
            match args.experiment.as_str() {
                "sensitivity" => {
                    run_sensitivity(&spec)?;
                }
                "eq-timing" => {
                    run_eq_timing(&spec)?;
                }
                "last-vs-avg" => {
                    run_last_vs_average(&spec)?;
                }
                "all" => {
                    run_sensitivity(&BenchSpec {
                        out_dir: spec.out_dir.join("sensitivity"),
                        ..spec.clone()
                    })?;
                    run_eq_timing(&BenchSpec {
                        out_dir: spec.out_dir.join("eq-timing"),
                        ..spec.clone()
                    })?;
                    run_last_vs_average(&BenchSpec {
                        out_dir: spec.out_dir.join("last-vs-avg"),
                        ..spec.clone()
                    })?;
                }
                other => bail!(
                    "unknown experiment {other:?}; expected sensitivity, eq-timing, \
                     last-vs-avg, or all"
                ),
            }
            println!("wrote {}", spec.out_dir.display());
            Ok(EXIT_OK)
        }
    }
}

/// Dying quietly when the reader closes the pipe (`dualqp ... | head`)
/// beats the default panic-with-backtrace on EPIPE.
fn reset_sigpipe() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ILL_POSED as u8)
        }
    }
}
