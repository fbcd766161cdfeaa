//! The `solve` and `oracle` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use dualqp_core::dual::trace_csv;
use dualqp_core::io::from_json;
use dualqp_core::oracle::{
    multiplier_is_unique, oracle_dual_radius, oracle_solve, UNIQUENESS_MARGIN,
};
use dualqp_core::tuning::explain;
use dualqp_core::{
    solve, DualMethod, EpsilonInPolicy, QpProblem, Recovery, RhoPolicy, SolveStatus, SolverConfig,
    StoppingRule,
};

/// The run met its target accuracy (or the reference solver succeeded).
pub const EXIT_OK: i32 = 0;
/// A caller-imposed iteration cap stopped the run before certification.
pub const EXIT_ITERATION_CAP: i32 = 2;
/// The problem is infeasible, ill-posed, unreadable, or numerics failed.
pub const EXIT_ILL_POSED: i32 = 3;

/// Everything the `solve` command needs, already parsed and validated.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub file: PathBuf,
    pub method: DualMethod,
    pub epsilon: f64,
    pub rho: RhoPolicy,
    pub epsilon_in: EpsilonInPolicy,
    pub recovery: Recovery,
    pub dual_radius: f64,
    pub max_outer: Option<u64>,
    pub trace: Option<PathBuf>,
    pub explain: bool,
}

/// Parses `dgm` / `dfgm` (case-insensitive).
pub fn parse_method(text: &str) -> Result<DualMethod> {
    match text.to_ascii_lowercase().as_str() {
        "dgm" => Ok(DualMethod::Dgm),
        "dfgm" => Ok(DualMethod::Dfgm),
        other => bail!("unknown method {other:?}; expected \"dgm\" or \"dfgm\""),
    }
}

/// Parses `auto` or a nonnegative penalty weight (`0` selects the ordinary
/// Lagrangian).
pub fn parse_rho(text: &str) -> Result<RhoPolicy> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(RhoPolicy::Auto);
    }
    let value: f64 = text
        .parse()
        .with_context(|| format!("penalty weight {text:?} is neither \"auto\" nor a number"))?;
    if !value.is_finite() || value < 0.0 {
        bail!("penalty weight must be finite and nonnegative, got {value}");
    }
    Ok(RhoPolicy::Fixed(value))
}

/// Parses `auto` (theory schedule) or a positive inner accuracy.
pub fn parse_epsilon_in(text: &str) -> Result<EpsilonInPolicy> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(EpsilonInPolicy::Theory);
    }
    let value: f64 = text
        .parse()
        .with_context(|| format!("inner accuracy {text:?} is neither \"auto\" nor a number"))?;
    if !value.is_finite() || value <= 0.0 {
        bail!("inner accuracy must be finite and positive, got {value}");
    }
    Ok(EpsilonInPolicy::Fixed(value))
}

/// Parses `last` / `average` (case-insensitive).
pub fn parse_recovery(text: &str) -> Result<Recovery> {
    match text.to_ascii_lowercase().as_str() {
        "last" => Ok(Recovery::Last),
        "average" | "avg" => Ok(Recovery::Average),
        other => bail!("unknown recovery {other:?}; expected \"last\" or \"average\""),
    }
}

fn load_problem(path: &PathBuf) -> Result<QpProblem> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read problem file {}", path.display()))?;
    let raw = from_json(&text)?;
    Ok(raw.ingest()?)
}

fn preview(values: &[f64], limit: usize) -> String {
    let mut out = String::from("[");
    for (i, v) in values.iter().take(limit).enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{v:.6}");
    }
    if values.len() > limit {
        let _ = write!(out, ", … ({} entries)", values.len());
    }
    out.push(']');
    out
}

/// Runs the solver on a problem file and prints a human-readable report.
///
/// Returns the process exit code: [`EXIT_OK`] when the run certified its
/// target, [`EXIT_ITERATION_CAP`] when a caller-imposed cap stopped it early,
/// and [`EXIT_ILL_POSED`] when numerics failed mid-run. Structural errors
/// (unreadable file, inconsistent bounds, non-convex objective) surface as
/// `Err` and the binary maps them to [`EXIT_ILL_POSED`].
pub fn run_solve(opts: &SolveOptions) -> Result<i32> {
    let prob = load_problem(&opts.file)?;

    let mut config = SolverConfig::new(opts.method, opts.epsilon);
    config.rho = opts.rho;
    config.epsilon_in = opts.epsilon_in;
    config.recovery = opts.recovery;
    config.dual_radius_estimate = opts.dual_radius;
    config.max_outer = opts.max_outer;
    config.stopping = StoppingRule::Surrogate;
    config.record_trace = opts.trace.is_some();

    let report = solve(&prob, &config)?;

    if opts.explain {
        println!(
            "{}",
            explain(
                &report.constants,
                &report.schedule,
                prob.bounds().diameter()
            )
        );
    }

    let (obj_sel, infeas_sel, u_sel) = match opts.recovery {
        Recovery::Last => (report.primal_obj_last, report.infeas_last, &report.u_last),
        Recovery::Average => (report.primal_obj_avg, report.infeas_avg, &report.u_avg),
    };
    let status_text = match report.status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIterations => "iteration cap reached",
        SolveStatus::InnerFailure => "inner solve failed (partial result)",
    };

    println!(
        "problem: {} variables, {} dualized rows ({})",
        prob.n(),
        prob.p(),
        opts.file.display()
    );
    println!(
        "method: {} with {} Lagrangian (rho = {}), epsilon = {:e}, inner accuracy = {:e}, outer budget = {}",
        opts.method,
        match report.schedule.case {
            dualqp_core::LagrangianCase::Ordinary => "ordinary",
            dualqp_core::LagrangianCase::Augmented => "augmented",
        },
        report.schedule.rho,
        report.schedule.epsilon,
        report.schedule.epsilon_in,
        report.schedule.k_out,
    );
    println!("status: {status_text}");
    println!(
        "candidate ({}): objective = {:.9e}, infeasibility = {:.3e}",
        opts.recovery, obj_sel, infeas_sel
    );
    println!("dual value estimate: {:.9e}", report.dual_value_estimate);
    println!(
        "iterations: {} outer, {} inner projected steps",
        report.outer_iters, report.total_inner_iters
    );
    println!(
        "matrix-vector products: {} total (setup {}, inner {}, outer {}, recovery {})",
        report.total_matvecs,
        report.matvecs_setup,
        report.matvecs_inner,
        report.matvecs_outer,
        report.matvecs_recovery
    );
    println!("solution: {}", preview(u_sel, 16));

    if let Some(path) = &opts.trace {
        fs::write(path, trace_csv(&report.trace))
            .with_context(|| format!("cannot write trace file {}", path.display()))?;
        println!(
            "trace: {} rows written to {}",
            report.trace.len(),
            path.display()
        );
    }

    Ok(match report.status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::MaxIterations => EXIT_ITERATION_CAP,
        SolveStatus::InnerFailure => EXIT_ILL_POSED,
    })
}

/// Solves a small problem file exactly by active-set enumeration and prints
/// the certified optimum, multipliers, and dual geometry.
pub fn run_oracle(file: &PathBuf) -> Result<i32> {
    let prob = load_problem(file)?;
    let sol = oracle_solve(&prob)?;

    println!("exact optimum of {}", file.display());
    println!("objective: {:.12e}", sol.f_star);
    println!("solution: {}", preview(&sol.u_star, 16));
    println!("row multipliers: {}", preview(&sol.lambda_star, 16));
    let active_bounds = sol
        .active_set
        .coords
        .iter()
        .filter(|s| !matches!(s, dualqp_core::oracle::CoordState::Free))
        .count();
    let active_rows = sol.active_set.rows.iter().filter(|&&a| a).count();
    println!("active box sides: {active_bounds}, active rows: {active_rows}");
    println!("stationarity residual: {:.3e}", sol.kkt_residual);
    let origin = vec![0.0; sol.lambda_star.len()];
    println!(
        "distance from the origin to the multiplier: {:.6e}",
        oracle_dual_radius(&sol, &origin)
    );
    println!(
        "multiplier certified unique: {}",
        if multiplier_is_unique(&prob, &sol, UNIQUENESS_MARGIN) {
            "yes"
        } else {
            "no"
        }
    );
    Ok(EXIT_OK)
}
