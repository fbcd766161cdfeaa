//! Benchmark experiments behind `dualqp bench`.
//!
//! Every experiment writes a `summary.csv` with one fixed schema plus an
//! experiment-specific detail file into the requested output directory, and
//! returns its records so tests can assert on them. All randomness flows
//! through [`instance_seed`], so a fixed `--seed` reproduces every file
//! byte for byte; wall-clock columns are written as `0` unless timing was
//! requested, keeping untimed output deterministic.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use dualqp_core::oracle::oracle_solve;
use dualqp_core::{
    instance_seed, seeded_instance, solve, BenchFamily, DualMethod, EpsilonInPolicy, QpProblem,
    Recovery, RhoPolicy, SolveReport, SolverConfig, StoppingRule,
};

/// Shared knobs of every `bench` experiment.
#[derive(Debug, Clone)]
pub struct BenchSpec {
    /// Base seed; per-instance seeds are mixed from it.
    pub seed: u64,
    /// Directory the CSV files go to (created if absent).
    pub out_dir: PathBuf,
    /// Measure wall time per run. Off by default so output files are
    /// byte-for-byte reproducible.
    pub timing: bool,
}

/// One solver run inside an experiment; one `summary.csv` row.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub family: BenchFamily,
    pub n: usize,
    pub seed: u64,
    pub method: DualMethod,
    pub recovery: Recovery,
    pub outer_iters: u64,
    pub inner_iters: u64,
    pub matvecs: u64,
    pub wall_ns: u128,
    /// Signed objective error against the best available reference: the
    /// enumerated or high-accuracy optimum when one exists, otherwise the
    /// run's own certified dual value estimate.
    pub final_gap: f64,
    /// Cone violation of the candidate the run monitored.
    pub final_infeas: f64,
}

/// Column schema of `summary.csv` (identical across experiments).
pub const SUMMARY_HEADER: &str =
    "family,n,seed,method,recovery,outer_iters,inner_iters,matvecs,wall_ns,final_gap,final_infeas";

/// Renders the shared summary schema.
pub fn summary_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.family,
            r.n,
            r.seed,
            r.method,
            r.recovery,
            r.outer_iters,
            r.inner_iters,
            r.matvecs,
            r.wall_ns,
            r.final_gap,
            r.final_infeas
        );
    }
    out
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Runs one configured solve, timing it only when asked.
fn timed_solve(
    prob: &QpProblem,
    config: &SolverConfig,
    timing: bool,
) -> Result<(SolveReport, u128)> {
    let started = Instant::now();
    let report = solve(prob, config)?;
    let wall_ns = if timing {
        started.elapsed().as_nanos()
    } else {
        0
    };
    Ok((report, wall_ns))
}

fn record_from(
    family: BenchFamily,
    n: usize,
    seed: u64,
    config: &SolverConfig,
    report: &SolveReport,
    wall_ns: u128,
    final_gap: f64,
) -> RunRecord {
    let final_infeas = match config.recovery {
        Recovery::Last => report.infeas_last,
        Recovery::Average => report.infeas_avg,
    };
    RunRecord {
        family,
        n,
        seed,
        method: config.method,
        recovery: config.recovery,
        outer_iters: report.outer_iters,
        inner_iters: report.total_inner_iters,
        matvecs: report.total_matvecs,
        wall_ns,
        final_gap,
        final_infeas,
    }
}

// ---------------------------------------------------------------------------
// Inner-accuracy sensitivity
// ---------------------------------------------------------------------------

/// Spread of the final objective error across the inner-accuracy grid for
/// one instance, per outer method.
#[derive(Debug, Clone)]
pub struct InstanceSpread {
    pub seed: u64,
    pub dgm_spread: f64,
    pub dfgm_spread: f64,
}

/// Results of [`run_sensitivity`].
#[derive(Debug)]
pub struct SensitivityReport {
    pub records: Vec<RunRecord>,
    pub spreads: Vec<InstanceSpread>,
}

const SENSITIVITY_INSTANCES: usize = 10;
const SENSITIVITY_N: usize = 20;
const SENSITIVITY_P: usize = 10;
const SENSITIVITY_BUDGET: u64 = 200;
const SENSITIVITY_EPSILON: f64 = 1e-2;
const SENSITIVITY_GRID: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// How strongly each outer method's final objective error reacts to the
/// inner accuracy.
///
/// For each instance, both methods run a fixed 200-iteration outer budget
/// once per inner accuracy in `{1e-1, 1e-2, 1e-3, 1e-4}`, monitoring the
/// freshly recovered candidate at the final multiplier (no terminal
/// averaging step, so the plain method's multiplier is the raw iterate).
/// The per-method spread is `max - min` of the absolute objective error
/// across the grid; the error reference is a separate high-accuracy
/// accelerated run. The accelerated outer method feeds inner errors back
/// into its extrapolation, so its spread is expected to dominate.
pub fn run_sensitivity(spec: &BenchSpec) -> Result<SensitivityReport> {
    let family = BenchFamily::StronglyConvexIneq;
    let mut records = Vec::new();
    let mut spreads = Vec::new();
    let mut detail = String::from("seed,method,eps_in,budget,abs_error,final_infeas\n");

    for idx in 0..SENSITIVITY_INSTANCES {
        let seed = instance_seed(spec.seed, family, SENSITIVITY_N, idx);
        let gen = seeded_instance(family, SENSITIVITY_N, SENSITIVITY_P, seed);
        let prob = &gen.problem;

        // Objective reference: a certified high-accuracy accelerated run.
        let mut tight = SolverConfig::new(DualMethod::Dfgm, 1e-5);
        tight.recovery = Recovery::Average;
        tight.stopping = StoppingRule::Surrogate;
        let f_ref = solve(prob, &tight)?.primal_obj_avg;

        let mut spread = InstanceSpread {
            seed,
            dgm_spread: 0.0,
            dfgm_spread: 0.0,
        };
        for method in [DualMethod::Dgm, DualMethod::Dfgm] {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for eps_in in SENSITIVITY_GRID {
                let mut config = SolverConfig::new(method, SENSITIVITY_EPSILON);
                config.epsilon_in = EpsilonInPolicy::Fixed(eps_in);
                config.recovery = Recovery::Last;
                config.dgm_final_averaging = false;
                config.stopping = StoppingRule::BudgetOnly;
                config.max_outer = Some(SENSITIVITY_BUDGET);

                let (report, wall_ns) = timed_solve(prob, &config, spec.timing)?;
                let err = (report.primal_obj_last - f_ref).abs();
                lo = lo.min(err);
                hi = hi.max(err);
                let _ = writeln!(
                    detail,
                    "{seed},{method},{eps_in},{SENSITIVITY_BUDGET},{err},{}",
                    report.infeas_last
                );
                records.push(record_from(
                    family,
                    SENSITIVITY_N,
                    seed,
                    &config,
                    &report,
                    wall_ns,
                    err,
                ));
            }
            let delta = hi - lo;
            match method {
                DualMethod::Dgm => spread.dgm_spread = delta,
                DualMethod::Dfgm => spread.dfgm_spread = delta,
            }
        }
        spreads.push(spread);
    }

    write_out(&spec.out_dir, "summary.csv", &summary_csv(&records))?;
    write_out(&spec.out_dir, "sensitivity.csv", &detail)?;
    Ok(SensitivityReport { records, spreads })
}

// ---------------------------------------------------------------------------
// Equality-constrained timing table
// ---------------------------------------------------------------------------

/// Results of [`run_eq_timing`].
#[derive(Debug)]
pub struct EqTimingReport {
    pub records: Vec<RunRecord>,
}

const EQ_SIZES: [(usize, usize); 4] = [(4, 2), (8, 4), (16, 8), (32, 16)];
const EQ_SEEDS_PER_SIZE: usize = 2;
const EQ_EPSILON: f64 = 5e-2;
const EQ_SAFETY_CAP: u64 = 8_000;
/// Random `A'A` objectives are almost surely positive definite but so badly
/// conditioned that the ordinary dual is useless; a moderate fixed penalty
/// puts the run in the augmented regime these instances call for without
/// the work-balancing weight's degenerate one-iteration outer loop.
const EQ_PENALTY: f64 = 1.0;

/// Work table for equality-constrained instances across problem sizes.
///
/// Both outer methods solve the same instances on the augmented dual,
/// monitoring the averaged candidate. Small instances stop against their
/// enumerated optimum; larger ones use the certified surrogate test. A
/// generous outer cap keeps pathologically conditioned draws from running
/// unbounded — capped rows keep their partial metrics and are recognizable
/// by hitting the cap.
pub fn run_eq_timing(spec: &BenchSpec) -> Result<EqTimingReport> {
    let family = BenchFamily::PsdEq;
    let mut records = Vec::new();
    let mut detail =
        String::from("family,n,seed,method,stopping,outer_iters,inner_iters,matvecs,wall_ns,final_gap,final_infeas\n");

    for (n, p) in EQ_SIZES {
        for idx in 0..EQ_SEEDS_PER_SIZE {
            let seed = instance_seed(spec.seed, family, n, idx);
            let gen = seeded_instance(family, n, p, seed);
            let prob = &gen.problem;

            // The enumeration is exact but exponential in n; use it where it
            // is cheap and fall back to the surrogate test elsewhere.
            let f_star = if n <= 8 {
                Some(oracle_solve(prob)?.f_star)
            } else {
                None
            };

            for method in [DualMethod::Dgm, DualMethod::Dfgm] {
                let mut config = SolverConfig::new(method, EQ_EPSILON);
                config.rho = RhoPolicy::Fixed(EQ_PENALTY);
                config.recovery = Recovery::Average;
                config.stopping = match f_star {
                    Some(f) => StoppingRule::KnownOptimum(f),
                    None => StoppingRule::Surrogate,
                };
                config.max_outer = Some(EQ_SAFETY_CAP);

                let (report, wall_ns) = timed_solve(prob, &config, spec.timing)?;
                let gap = match f_star {
                    Some(f) => (report.primal_obj_avg - f).abs(),
                    None => report.primal_obj_avg - report.dual_value_estimate,
                };
                let _ = writeln!(
                    detail,
                    "{family},{n},{seed},{method},{},{},{},{},{wall_ns},{gap},{}",
                    if f_star.is_some() {
                        "known-optimum"
                    } else {
                        "surrogate"
                    },
                    report.outer_iters,
                    report.total_inner_iters,
                    report.total_matvecs,
                    report.infeas_avg
                );
                records.push(record_from(family, n, seed, &config, &report, wall_ns, gap));
            }
        }
    }

    write_out(&spec.out_dir, "summary.csv", &summary_csv(&records))?;
    write_out(&spec.out_dir, "eq_timing.csv", &detail)?;
    Ok(EqTimingReport { records })
}

// ---------------------------------------------------------------------------
// Last-iterate versus average-iterate stopping
// ---------------------------------------------------------------------------

/// Results of [`run_last_vs_average`].
#[derive(Debug)]
pub struct LastVsAverageReport {
    pub records: Vec<RunRecord>,
}

const LVA_SIZES: [usize; 3] = [10, 50, 100];
const LVA_INSTANCES_PER_SIZE: usize = 25;
const LVA_EPSILON: f64 = 5e-2;
/// Plain-method cap: its certified budget at this accuracy is far larger
/// than what the comparison needs, and capped counts still order correctly.
const LVA_DGM_CAP: u64 = 4_000;

impl LastVsAverageReport {
    fn pairs(&self, key: impl Fn(&RunRecord) -> bool) -> Vec<(&RunRecord, &RunRecord)> {
        let a: Vec<&RunRecord> = self.records.iter().filter(|r| key(r)).collect();
        let b: Vec<&RunRecord> = self.records.iter().filter(|r| !key(r)).collect();
        a.into_iter().zip(b).collect()
    }

    /// Fraction of (instance, method) pairs where stopping on the fresh
    /// candidate at the final multiplier needed no more outer iterations
    /// than stopping on the averaged candidate.
    pub fn last_le_average_fraction(&self) -> f64 {
        let pairs = self.pairs(|r| r.recovery == Recovery::Last);
        let hits = pairs
            .iter()
            .filter(|(last, avg)| {
                debug_assert_eq!(last.seed, avg.seed);
                debug_assert_eq!(last.method, avg.method);
                last.outer_iters <= avg.outer_iters
            })
            .count();
        hits as f64 / pairs.len() as f64
    }

    /// Fraction of (instance, recovery) pairs where the accelerated outer
    /// method stopped in strictly fewer outer iterations than the plain one.
    pub fn dfgm_beats_dgm_fraction(&self) -> f64 {
        let pairs = self.pairs(|r| r.method == DualMethod::Dfgm);
        let hits = pairs
            .iter()
            .filter(|(fast, plain)| {
                debug_assert_eq!(fast.seed, plain.seed);
                debug_assert_eq!(fast.recovery, plain.recovery);
                fast.outer_iters < plain.outer_iters
            })
            .count();
        hits as f64 / pairs.len() as f64
    }
}

/// Outer iterations to stop when monitoring the fresh candidate at the
/// final multiplier versus the averaged candidate.
///
/// Every instance is solved four ways (two outer methods times two
/// monitored candidates) under the certified surrogate test. The plain
/// method gets an outer cap well above typical stopping points; the
/// accelerated method runs at most its certified budget. Record order is
/// fixed: for each instance the four runs appear as (plain, last),
/// (plain, average), (accelerated, last), (accelerated, average).
pub fn run_last_vs_average(spec: &BenchSpec) -> Result<LastVsAverageReport> {
    let family = BenchFamily::StronglyConvexIneq;
    let mut records = Vec::new();

    for n in LVA_SIZES {
        let p = (n / 4).max(1);
        for idx in 0..LVA_INSTANCES_PER_SIZE {
            let seed = instance_seed(spec.seed, family, n, idx);
            let gen = seeded_instance(family, n, p, seed);
            let prob = &gen.problem;

            for method in [DualMethod::Dgm, DualMethod::Dfgm] {
                for recovery in [Recovery::Last, Recovery::Average] {
                    let mut config = SolverConfig::new(method, LVA_EPSILON);
                    config.recovery = recovery;
                    config.stopping = StoppingRule::Surrogate;
                    config.max_outer = match method {
                        DualMethod::Dgm => Some(LVA_DGM_CAP),
                        DualMethod::Dfgm => None,
                    };

                    let (report, wall_ns) = timed_solve(prob, &config, spec.timing)?;
                    let obj = match recovery {
                        Recovery::Last => report.primal_obj_last,
                        Recovery::Average => report.primal_obj_avg,
                    };
                    let gap = obj - report.dual_value_estimate;
                    records.push(record_from(family, n, seed, &config, &report, wall_ns, gap));
                }
            }
        }
    }

    write_out(&spec.out_dir, "summary.csv", &summary_csv(&records))?;
    Ok(LastVsAverageReport { records })
}
