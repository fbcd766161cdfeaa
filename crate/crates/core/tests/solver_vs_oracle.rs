//! End-to-end agreement between the iterative solver and the enumeration
//! reference on seeded random instances with verified unique multipliers.

use dualqp_core::generate::{instance_seed, seeded_instance, BenchFamily, GeneratedQp};
use dualqp_core::oracle::{multiplier_is_unique, oracle_dual_radius, oracle_solve, OracleSolution};
use dualqp_core::{
    solve, trace_csv, DualMethod, Recovery, SolveStatus, SolverConfig, StoppingRule,
};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Deterministic stream of instances whose optimal multiplier is unique,
/// with sizes cycling over small (n, p) pairs.
fn accepted_instances(
    family: BenchFamily,
    count: usize,
    base_seed: u64,
) -> Vec<(GeneratedQp, OracleSolution)> {
    let mut out = Vec::new();
    let mut index = 0usize;
    while out.len() < count {
        let n = 2 + index % 5;
        let p = 1 + index % 3;
        let seed = instance_seed(base_seed, family, n, index);
        index += 1;
        let inst = seeded_instance(family, n, p, seed);
        let sol = match oracle_solve(&inst.problem) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if multiplier_is_unique(&inst.problem, &sol, 1e-6) {
            out.push((inst, sol));
        }
        assert!(index < 40 * count, "instance stream rejected too many");
    }
    out
}

#[test]
fn solver_matches_reference_on_seeded_instances() {
    // The plain scheme needs on the order of 1/epsilon outer iterations, so
    // it gets a looser target to keep the sweep fast; the accelerated one
    // needs 1/sqrt(epsilon) and can afford a tight target.
    let targets = [(DualMethod::Dgm, 1e-2), (DualMethod::Dfgm, 1e-3)];
    for family in [BenchFamily::PsdEq, BenchFamily::StronglyConvexIneq] {
        for (inst, sol) in accepted_instances(family, 6, 7_777) {
            let r_d = oracle_dual_radius(&sol, &vec![0.0; inst.problem.p()]).max(1.0);
            for (method, epsilon) in targets {
                let mut config = SolverConfig::new(method, epsilon);
                config.dual_radius_estimate = r_d;
                config.recovery = Recovery::Average;
                config.record_trace = false;
                let report = solve(&inst.problem, &config).unwrap();
                assert_eq!(report.status, SolveStatus::Converged);
                let err = (report.primal_obj_avg - sol.f_star).abs();
                let allowed = 10.0 * epsilon * (1.0 + sol.f_star.abs());
                assert!(
                    err <= allowed,
                    "objective error {err} above {allowed} ({method:?}, {family}, n = {})",
                    inst.problem.n()
                );
                assert!(
                    report.infeas_avg <= 10.0 * epsilon,
                    "violation {} above {} ({method:?}, {family})",
                    report.infeas_avg,
                    10.0 * epsilon
                );
            }
        }
    }
}

#[test]
fn tighter_targets_give_tighter_answers() {
    let (inst, sol) = accepted_instances(BenchFamily::StronglyConvexIneq, 1, 5_150)
        .pop()
        .unwrap();
    let r_d = oracle_dual_radius(&sol, &vec![0.0; inst.problem.p()]).max(1.0);
    let mut errs = Vec::new();
    for epsilon in [1e-1, 1e-2, 1e-3, 1e-4] {
        let mut config = SolverConfig::new(DualMethod::Dfgm, epsilon);
        config.dual_radius_estimate = r_d;
        config.recovery = Recovery::Average;
        config.stopping = StoppingRule::BudgetOnly;
        config.record_trace = false;
        let report = solve(&inst.problem, &config).unwrap();
        let combined = (report.primal_obj_avg - sol.f_star).abs() + report.infeas_avg;
        errs.push(combined);
        assert!(
            combined <= 10.0 * epsilon * (1.0 + sol.f_star.abs()),
            "combined error {combined} too large at epsilon {epsilon}"
        );
    }
    assert!(
        errs.last().unwrap() < errs.first().unwrap(),
        "error did not shrink: {errs:?}"
    );
}

#[test]
fn trace_output_is_deterministic() {
    let inst = seeded_instance(BenchFamily::StronglyConvexIneq, 6, 4, 4_242);
    let mut config = SolverConfig::new(DualMethod::Dfgm, 1e-3);
    config.stopping = StoppingRule::BudgetOnly;
    config.max_outer = Some(40);
    let a = solve(&inst.problem, &config).unwrap();
    let b = solve(&inst.problem, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(trace_csv(&a.trace), trace_csv(&b.trace));
    assert!(!a.trace.is_empty());
}

#[test]
fn capped_runs_report_partial_progress() {
    let inst = seeded_instance(BenchFamily::StronglyConvexIneq, 6, 4, 99);
    let mut config = SolverConfig::new(DualMethod::Dgm, 1e-6);
    config.max_outer = Some(3);
    let report = solve(&inst.problem, &config).unwrap();
    assert_eq!(report.status, SolveStatus::MaxIterations);
    assert_eq!(report.outer_iters, 3);
    assert!(report.primal_obj_last.is_finite());
    assert!(report.infeas_last.is_finite());
    assert!(norm(&report.lambda_final) >= 0.0);
}
