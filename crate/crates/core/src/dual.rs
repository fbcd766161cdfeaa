//! Outer dual loop: projected (fast) gradient ascent with inexact gradients.
//!
//! The dual function of the (augmented) Lagrangian relaxation is concave with
//! a `2 L_d`-Lipschitz gradient; every gradient is computed inexactly by an
//! inner box-constrained solve at accuracy `epsilon_in`. The loop runs either
//! the plain ascent scheme (zero momentum) or the accelerated one (the
//! theta-recurrence), projects multipliers onto the dual cone, and maintains
//! two primal candidates: the latest inner solution and a weighted running
//! average. All signs are kept in ascent orientation here; descent-style
//! reasoning applies to the negated dual and is not exposed.

use serde::{Deserialize, Serialize};

use crate::inner::{
    auto_momentum, default_stop_policy, iteration_cap, solve_inner, InnerObjective, MomentumKind,
    ThetaSequence,
};
use crate::linalg::{distance, MatvecCounter};
use crate::model::{dist_cone, lagrangian_penalty, slack_from_residual, ConeKind, QpProblem};
use crate::tuning::{
    rho_star, schedule, select_case, DualMethod, LagrangianCase, ProblemConstants, Schedule,
    SolveConstants,
};
use crate::SolverError;

/// Per-row projection for multiplier vectors.
///
/// Inequality multipliers are clamped to `[0, inf)` when the ordinary
/// Lagrangian is used; with a positive penalty weight the dual domain is the
/// whole space (the slack absorbs the sign constraint), and equality rows are
/// never clamped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualCone {
    clamped: Vec<bool>,
}

impl DualCone {
    /// Builds the projection mask from the row cones and the penalty weight.
    pub fn new(cones: &[ConeKind], rho: f64) -> Self {
        let clamped = cones
            .iter()
            .map(|&c| rho == 0.0 && c == ConeKind::NonPos)
            .collect();
        Self { clamped }
    }

    /// Number of rows.
    pub fn p(&self) -> usize {
        self.clamped.len()
    }

    /// Rows on which the projection clamps at zero.
    pub fn clamped_rows(&self) -> &[bool] {
        &self.clamped
    }

    /// Componentwise projection, in place.
    pub fn project_in_place(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.clamped.len());
        for (vi, &c) in v.iter_mut().zip(&self.clamped) {
            if c && *vi < 0.0 {
                *vi = 0.0;
            }
        }
    }

    /// Componentwise projection.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.project_in_place(&mut out);
        out
    }

    /// Whether `v` already lies in the dual domain.
    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter().zip(&self.clamped).all(|(&vi, &c)| !c || vi >= 0.0)
    }
}

/// How the penalty weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RhoPolicy {
    /// Ordinary Lagrangian when the Hessian is certified positive definite,
    /// otherwise the augmented one with the work-balancing weight
    /// `8 R_d^2 / epsilon`.
    Auto,
    /// Use exactly this weight; zero selects the ordinary Lagrangian.
    Fixed(f64),
    /// Always augment, with the work-balancing weight.
    ForceAugmented,
}

/// How the inner accuracy is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpsilonInPolicy {
    /// The closed-form value that certifies the outer target accuracy.
    Theory,
    /// A caller-supplied value; the outer budget keeps its theory value.
    Fixed(f64),
}

/// Which primal candidate the stopping test monitors and the report
/// recommends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recovery {
    /// A fresh inner solve at the final multiplier.
    Last,
    /// The weighted running average of the inner solutions.
    Average,
}

impl std::fmt::Display for Recovery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Recovery::Last => write!(f, "last"),
            Recovery::Average => write!(f, "average"),
        }
    }
}

/// Early-termination rule checked once per outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StoppingRule {
    /// Stop when the monitored candidate is `epsilon`-feasible and its
    /// objective is within `epsilon * (1 + |F|)` of a certified lower bound
    /// on the dual value at the current multiplier.
    Surrogate,
    /// Stop when the monitored candidate is `epsilon`-feasible and its
    /// objective is within `epsilon * (1 + |F*|)` of this known optimal
    /// value (benchmark mode).
    KnownOptimum(f64),
    /// Never stop early; run the full outer budget.
    BudgetOnly,
}

/// Terminal condition of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// The stopping test fired, or the certified outer budget completed.
    Converged,
    /// A caller-imposed cap below the certified budget ran out first.
    MaxIterations,
    /// An iteration produced non-finite values; the report carries the last
    /// usable iterates.
    InnerFailure,
}

/// Everything a solve needs besides the problem itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Plain or accelerated outer updates.
    pub method: DualMethod,
    /// Target accuracy for the primal-dual pair.
    pub epsilon: f64,
    /// Penalty-weight policy.
    pub rho: RhoPolicy,
    /// Inner-accuracy policy.
    pub epsilon_in: EpsilonInPolicy,
    /// Monitored primal candidate.
    pub recovery: Recovery,
    /// Upper estimate of the distance from the initial multiplier to the
    /// nearest dual solution. All schedules and diagnostic bounds are valid
    /// only when this dominates the true distance; there is no computable
    /// a-priori value, so callers with better knowledge should override the
    /// default of 1.
    pub dual_radius_estimate: f64,
    /// Initial multiplier; the origin when absent. Overrides are projected
    /// onto the dual cone.
    pub lambda0: Option<Vec<f64>>,
    /// For the plain scheme, replace the final multiplier by one ascent step
    /// from the running dual average before recovery (the form for which the
    /// dual rate is stated). On by default.
    pub dgm_final_averaging: bool,
    /// Early-termination rule.
    pub stopping: StoppingRule,
    /// Outer-iteration budget override. Values below the certified budget
    /// cap the run (status [`SolveStatus::MaxIterations`] if nothing fired);
    /// larger values extend it.
    pub max_outer: Option<u64>,
    /// Force a particular inner method instead of the automatic choice.
    pub momentum_override: Option<MomentumKind>,
    /// Record the per-iteration trace (adds two products per outer iteration
    /// for the average candidate's metrics).
    pub record_trace: bool,
}

impl SolverConfig {
    /// A configuration with production defaults.
    pub fn new(method: DualMethod, epsilon: f64) -> Self {
        Self {
            method,
            epsilon,
            rho: RhoPolicy::Auto,
            epsilon_in: EpsilonInPolicy::Theory,
            recovery: Recovery::Last,
            dual_radius_estimate: 1.0,
            lambda0: None,
            dgm_final_averaging: true,
            stopping: StoppingRule::Surrogate,
            max_outer: None,
            momentum_override: None,
            record_trace: true,
        }
    }

    fn validate(&self, prob: &QpProblem) -> Result<(), SolverError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SolverError::InvalidConfig(format!(
                "target accuracy must be a positive finite number, got {}",
                self.epsilon
            )));
        }
        if !(self.dual_radius_estimate > 0.0 && self.dual_radius_estimate.is_finite()) {
            return Err(SolverError::InvalidConfig(format!(
                "dual radius estimate must be a positive finite number, got {}",
                self.dual_radius_estimate
            )));
        }
        if let EpsilonInPolicy::Fixed(v) = self.epsilon_in {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidConfig(format!(
                    "inner accuracy must be a positive finite number, got {v}"
                )));
            }
        }
        if let RhoPolicy::Fixed(r) = self.rho {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(SolverError::InvalidConfig(format!(
                    "penalty weight must be a nonnegative finite number, got {r}"
                )));
            }
        }
        if self.max_outer == Some(0) {
            return Err(SolverError::InvalidConfig(
                "outer iteration budget must be at least 1".into(),
            ));
        }
        if let Some(l0) = &self.lambda0 {
            if l0.len() != prob.p() {
                return Err(SolverError::InvalidConfig(format!(
                    "initial multiplier has length {}, expected {}",
                    l0.len(),
                    prob.p()
                )));
            }
            if l0.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::InvalidConfig(
                    "initial multiplier has non-finite entries".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Mutable state of the outer loop.
#[derive(Debug, Clone)]
pub struct DualState {
    method: DualMethod,
    /// Latest projected multiplier.
    lambda: Vec<f64>,
    /// Previous projected multiplier.
    lambda_prev: Vec<f64>,
    /// Extrapolated point at which the next inner problem is solved.
    mu: Vec<f64>,
    theta: ThetaSequence,
    /// Completed outer steps.
    k: u64,
    /// Warm start for the next inner solve (the latest inner solution).
    u_warm: Vec<f64>,
    /// Weighted sum of inner solutions.
    avg_num: Vec<f64>,
    /// Sum of the weights.
    s_k: f64,
    /// Sum of all projected multipliers, including the initial one.
    lambda_sum: Vec<f64>,
    /// Number of terms in `lambda_sum`.
    lambda_count: u64,
}

impl DualState {
    /// Starts at multiplier `lambda0` with inner warm start `u_warm`.
    pub fn new(method: DualMethod, lambda0: Vec<f64>, u_warm: Vec<f64>) -> Self {
        let n = u_warm.len();
        Self {
            method,
            lambda: lambda0.clone(),
            lambda_prev: lambda0.clone(),
            mu: lambda0.clone(),
            theta: ThetaSequence::new(),
            k: 0,
            u_warm,
            avg_num: vec![0.0; n],
            s_k: 0.0,
            lambda_sum: lambda0,
            lambda_count: 1,
        }
    }

    /// Latest projected multiplier.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Previous projected multiplier.
    pub fn lambda_prev(&self) -> &[f64] {
        &self.lambda_prev
    }

    /// Point of the next inner solve.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Completed outer steps.
    pub fn k(&self) -> u64 {
        self.k
    }

    /// Warm start for the next inner solve.
    pub fn u_warm(&self) -> &[f64] {
        &self.u_warm
    }

    /// Sum of the averaging weights so far.
    pub fn weight_sum(&self) -> f64 {
        self.s_k
    }

    /// Current averaging weight (the value the next step will use).
    pub fn theta(&self) -> f64 {
        match self.method {
            DualMethod::Dgm => 1.0,
            DualMethod::Dfgm => self.theta.theta(),
        }
    }

    /// One outer update: projected ascent step from `mu`, running averages,
    /// and the momentum extrapolation for the next inner solve.
    pub fn outer_step(
        &mut self,
        u_bar: &[f64],
        grad_bar: &[f64],
        l_dual: f64,
        cone: &DualCone,
    ) -> Result<(), SolverError> {
        debug_assert_eq!(u_bar.len(), self.avg_num.len());
        debug_assert_eq!(grad_bar.len(), self.mu.len());
        let theta_now = self.theta();

        // Ascent with projection: the dual is concave and maximized, so the
        // gradient is added.
        let step = if l_dual > 0.0 { 0.5 / l_dual } else { 0.0 };
        let mut lam_new: Vec<f64> = self
            .mu
            .iter()
            .zip(grad_bar)
            .map(|(&m, &g)| m + step * g)
            .collect();
        cone.project_in_place(&mut lam_new);
        if lam_new.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidProblem(
                "dual iterate became non-finite".into(),
            ));
        }

        for (a, &u) in self.avg_num.iter_mut().zip(u_bar) {
            *a += theta_now * u;
        }
        self.s_k += theta_now;
        if self.method == DualMethod::Dfgm {
            // Weight-sum identity of the theta recurrence.
            debug_assert!((self.s_k - theta_now * theta_now).abs() <= 1e-9 * self.s_k.max(1.0));
        }
        for (s, &l) in self.lambda_sum.iter_mut().zip(&lam_new) {
            *s += l;
        }
        self.lambda_count += 1;
        self.u_warm.clear();
        self.u_warm.extend_from_slice(u_bar);

        let beta = match self.method {
            DualMethod::Dgm => 0.0,
            DualMethod::Dfgm => self.theta.advance(),
        };
        let mu_next: Vec<f64> = lam_new
            .iter()
            .zip(&self.lambda)
            .map(|(&ln, &lo)| ln + beta * (ln - lo))
            .collect();
        self.lambda_prev = std::mem::replace(&mut self.lambda, lam_new);
        self.mu = mu_next;
        self.k += 1;
        Ok(())
    }

    /// Weighted average of the inner solutions seen so far.
    pub fn recover_average(&self) -> Result<Vec<f64>, SolverError> {
        if self.s_k <= 0.0 {
            return Err(SolverError::InvalidConfig(
                "no outer iterations have run; there is nothing to average".into(),
            ));
        }
        Ok(self.avg_num.iter().map(|&a| a / self.s_k).collect())
    }

    /// Plain average of all projected multipliers, including the initial one.
    pub fn lambda_average(&self) -> Vec<f64> {
        let c = self.lambda_count as f64;
        self.lambda_sum.iter().map(|&s| s / c).collect()
    }
}

/// The inexact dual gradient `G u_bar + g - s(u_bar, mu)` at an approximate
/// inner solution `u_bar`. One counted product.
pub fn inexact_dual_gradient(
    u_bar: &[f64],
    mu: &[f64],
    prob: &QpProblem,
    rho: f64,
    counter: &MatvecCounter,
) -> Vec<f64> {
    let residual = prob.residual(u_bar, counter);
    let s = slack_from_residual(&residual, mu, prob.cones(), rho);
    residual.iter().zip(&s).map(|(&r, &si)| r - si).collect()
}

/// One per-iteration record of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Outer iteration number, starting at 1.
    pub k: u64,
    /// Approximate dual value at the iteration's extrapolated multiplier.
    pub dual_val: f64,
    /// Objective of the iteration's inner solution.
    pub f_last: f64,
    /// Objective of the weighted average candidate.
    pub f_avg: f64,
    /// Cone-constraint violation of the inner solution.
    pub infeas_last: f64,
    /// Cone-constraint violation of the average candidate.
    pub infeas_avg: f64,
    /// Projected steps the inner solve took this iteration.
    pub inner_iters: u64,
    /// Counted matrix-vector products so far, including this row's metrics.
    pub cum_matvecs: u64,
}

/// Renders trace rows as CSV with a fixed header.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out =
        String::from("k,dual_val,f_last,f_avg,infeas_last,infeas_avg,inner_iters,cum_matvecs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.k,
            r.dual_val,
            r.f_last,
            r.f_avg,
            r.infeas_last,
            r.infeas_avg,
            r.inner_iters,
            r.cum_matvecs
        ));
    }
    out
}

/// Everything a solve produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Fresh inner solution at the final multiplier.
    pub u_last: Vec<f64>,
    /// Weighted average of the per-iteration inner solutions.
    pub u_avg: Vec<f64>,
    /// Final multiplier (after the optional plain-scheme redefinition).
    pub lambda_final: Vec<f64>,
    /// Objective value at `u_last`.
    pub primal_obj_last: f64,
    /// Objective value at `u_avg`.
    pub primal_obj_avg: f64,
    /// Cone violation at `u_last`.
    pub infeas_last: f64,
    /// Cone violation at `u_avg`.
    pub infeas_avg: f64,
    /// Approximate dual value at the final multiplier.
    pub dual_value_estimate: f64,
    /// Completed outer iterations.
    pub outer_iters: u64,
    /// Projected steps across all inner solves, including recovery.
    pub total_inner_iters: u64,
    /// All counted matrix-vector products.
    pub total_matvecs: u64,
    /// Products spent on constants, eigen-estimates, and setup.
    pub matvecs_setup: u64,
    /// Products spent inside inner solves during the outer loop.
    pub matvecs_inner: u64,
    /// Products spent on per-iteration finalization and metrics.
    pub matvecs_outer: u64,
    /// Products spent after the loop on final recovery and metrics.
    pub matvecs_recovery: u64,
    /// Terminal condition.
    pub status: SolveStatus,
    /// Per-iteration records (empty when trace recording is off).
    pub trace: Vec<TraceRow>,
    /// The accuracy/budget schedule the run used.
    pub schedule: Schedule,
    /// The smoothness/convexity constants the run used.
    pub constants: SolveConstants,
}

fn resolve_case(
    constants: &ProblemConstants,
    config: &SolverConfig,
) -> Result<(LagrangianCase, f64), SolverError> {
    match config.rho {
        RhoPolicy::Auto => match select_case(constants) {
            LagrangianCase::Ordinary => Ok((LagrangianCase::Ordinary, 0.0)),
            LagrangianCase::Augmented => Ok((
                LagrangianCase::Augmented,
                rho_star(config.dual_radius_estimate, config.epsilon),
            )),
        },
        RhoPolicy::ForceAugmented => Ok((
            LagrangianCase::Augmented,
            rho_star(config.dual_radius_estimate, config.epsilon),
        )),
        RhoPolicy::Fixed(r) => {
            if r == 0.0 {
                Ok((LagrangianCase::Ordinary, 0.0))
            } else {
                Ok((LagrangianCase::Augmented, r))
            }
        }
    }
}

/// Runs the full outer loop on `prob` and recovers both primal candidates.
///
/// Termination is the earliest of the configured stopping rule, the
/// certified outer budget, and the caller's cap. Completing the certified
/// budget counts as convergence: the schedule is constructed so that the
/// budget itself certifies the target accuracy (given a dominating dual
/// radius estimate). Numeric breakdown inside an iteration yields a partial
/// report with [`SolveStatus::InnerFailure`] instead of an error.
pub fn solve(prob: &QpProblem, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    config.validate(prob)?;
    let counter = MatvecCounter::new();

    // Setup: constants, case/penalty resolution, schedule, inner machinery.
    let constants = ProblemConstants::compute(prob, &counter)?;
    let (case, rho) = resolve_case(&constants, config)?;
    let fused = if rho > 0.0 && prob.p() > 0 && prob.all_rows_zero() {
        Some(prob.fused_hessian(rho, &counter))
    } else {
        None
    };
    let sc = SolveConstants::build(prob, constants, case, rho, fused.as_ref(), &counter)?;
    let diameter = prob.bounds().diameter();
    let mut sched = schedule(
        &sc,
        config.method,
        config.epsilon,
        config.dual_radius_estimate,
        diameter,
    )?;
    if let EpsilonInPolicy::Fixed(v) = config.epsilon_in {
        sched.epsilon_in = v;
        sched
            .notes
            .push("inner accuracy overridden; the outer budget keeps its theory value".into());
    }
    let eps_in = sched.epsilon_in;
    let budget = config.max_outer.unwrap_or(sched.k_out).max(1);

    let momentum = match config.momentum_override {
        Some(kind) => {
            if kind == MomentumKind::FgmStrong && sc.sigma_inner <= 0.0 {
                return Err(SolverError::InvalidConfig(
                    "the strongly convex inner method needs a positive convexity constant".into(),
                ));
            }
            kind
        }
        None => auto_momentum(sc.sigma_inner, sc.tau_pd()),
    };
    let stop = default_stop_policy(sc.l_inner, sc.sigma_inner, diameter, eps_in)?;
    let cap = iteration_cap(sc.l_inner, sc.sigma_inner, diameter, eps_in);

    let cone = DualCone::new(prob.cones(), rho);
    let lambda0 = match &config.lambda0 {
        Some(v) => cone.project(v),
        None => vec![0.0; prob.p()],
    };
    let u_warm0 = prob.bounds().project(&vec![0.0; prob.n()]);
    let mut obj = InnerObjective::new(prob, rho, fused.as_ref(), &lambda0, &counter)?;
    let mut state = DualState::new(config.method, lambda0, u_warm0);

    let monitor_average = config.recovery == Recovery::Average
        && !matches!(config.stopping, StoppingRule::BudgetOnly);
    let need_avg_metrics = config.record_trace || monitor_average;

    let matvecs_setup = counter.total();
    let mut matvecs_inner = 0u64;
    let mut matvecs_outer = 0u64;
    let mut total_inner_iters = 0u64;
    let mut trace = Vec::new();
    let mut fired = false;
    let mut failed = false;

    for k in 1..=budget {
        // Inner solve at the extrapolated multiplier.
        let before_inner = counter.total();
        if k > 1 {
            obj.set_multiplier(state.mu());
        }
        let outcome = match solve_inner(
            &obj,
            state.u_warm(),
            sc.l_inner,
            sc.sigma_inner,
            momentum,
            &stop,
            cap,
        ) {
            Ok(o) => o,
            Err(_) => {
                failed = true;
                break;
            }
        };
        total_inner_iters += outcome.iters;
        matvecs_inner += counter.total() - before_inner;

        // Finalize the iteration: objective, residual, dual value and
        // gradient estimates, then the outer update.
        let before_outer = counter.total();
        let u_bar = &outcome.u;
        let qu = prob.q_mat().matvec(u_bar, &counter);
        let residual = prob.residual(u_bar, &counter);
        let f_last = prob.objective_from_qu(u_bar, &qu);
        let dual_val = f_last + lagrangian_penalty(&residual, state.mu(), prob.cones(), rho);
        let slack = slack_from_residual(&residual, state.mu(), prob.cones(), rho);
        let grad_bar: Vec<f64> = residual.iter().zip(&slack).map(|(&r, &s)| r - s).collect();
        let infeas_last = dist_cone(&residual, prob.cones());

        let mu_snapshot = state.mu().to_vec();
        if state
            .outer_step(u_bar, &grad_bar, sc.l_dual, &cone)
            .is_err()
        {
            failed = true;
            matvecs_outer += counter.total() - before_outer;
            break;
        }

        // Certified lower bound on the dual value at the new multiplier:
        // the linearization around the extrapolation point minus its
        // curvature-and-inexactness slack.
        let dist_mu = distance(state.lambda(), &mu_snapshot);
        let shift: f64 = state
            .lambda()
            .iter()
            .zip(&mu_snapshot)
            .zip(&grad_bar)
            .map(|((&l, &m), &g)| (l - m) * g)
            .sum();
        let dual_lower = dual_val + shift - sc.l_dual * dist_mu * dist_mu - 2.0 * eps_in;

        let (f_avg, infeas_avg) = if need_avg_metrics {
            let u_avg = state
                .recover_average()
                .expect("at least one iteration has run");
            let qu_avg = prob.q_mat().matvec(&u_avg, &counter);
            let res_avg = prob.residual(&u_avg, &counter);
            (
                prob.objective_from_qu(&u_avg, &qu_avg),
                dist_cone(&res_avg, prob.cones()),
            )
        } else {
            (f64::NAN, f64::NAN)
        };

        if config.record_trace {
            trace.push(TraceRow {
                k,
                dual_val,
                f_last,
                f_avg,
                infeas_last,
                infeas_avg,
                inner_iters: outcome.iters,
                cum_matvecs: counter.total(),
            });
        }
        matvecs_outer += counter.total() - before_outer;

        let (f_sel, infeas_sel) = match config.recovery {
            Recovery::Last => (f_last, infeas_last),
            Recovery::Average => (f_avg, infeas_avg),
        };
        let stop_now = match config.stopping {
            StoppingRule::Surrogate => {
                infeas_sel <= config.epsilon
                    && (f_sel - dual_lower).abs() <= config.epsilon * (1.0 + f_sel.abs())
            }
            StoppingRule::KnownOptimum(f_star) => {
                infeas_sel <= config.epsilon
                    && (f_sel - f_star).abs() <= config.epsilon * (1.0 + f_star.abs())
            }
            StoppingRule::BudgetOnly => false,
        };
        if stop_now {
            fired = true;
            break;
        }
    }

    // Recovery: optional redefinition of the final multiplier for the plain
    // scheme, a fresh inner solve at the final multiplier, and metrics for
    // both candidates.
    let recovery_start = counter.total();
    let mut lambda_final = state.lambda().to_vec();
    if !failed && config.method == DualMethod::Dgm && config.dgm_final_averaging && prob.p() > 0 {
        let lambda_hat = state.lambda_average();
        obj.set_multiplier(&lambda_hat);
        match solve_inner(
            &obj,
            state.u_warm(),
            sc.l_inner,
            sc.sigma_inner,
            momentum,
            &stop,
            cap,
        ) {
            Ok(o) => {
                total_inner_iters += o.iters;
                let grad_hat = inexact_dual_gradient(&o.u, &lambda_hat, prob, rho, &counter);
                let step = if sc.l_dual > 0.0 {
                    0.5 / sc.l_dual
                } else {
                    0.0
                };
                let mut lam: Vec<f64> = lambda_hat
                    .iter()
                    .zip(&grad_hat)
                    .map(|(&h, &g)| h + step * g)
                    .collect();
                cone.project_in_place(&mut lam);
                if lam.iter().all(|v| v.is_finite()) {
                    lambda_final = lam;
                } else {
                    failed = true;
                }
            }
            Err(_) => failed = true,
        }
    }

    let u_last = if failed {
        state.u_warm().to_vec()
    } else {
        obj.set_multiplier(&lambda_final);
        match solve_inner(
            &obj,
            state.u_warm(),
            sc.l_inner,
            sc.sigma_inner,
            momentum,
            &stop,
            cap,
        ) {
            Ok(o) => {
                total_inner_iters += o.iters;
                o.u
            }
            Err(_) => {
                failed = true;
                state.u_warm().to_vec()
            }
        }
    };
    let qu_last = prob.q_mat().matvec(&u_last, &counter);
    let res_last = prob.residual(&u_last, &counter);
    let primal_obj_last = prob.objective_from_qu(&u_last, &qu_last);
    let infeas_last = dist_cone(&res_last, prob.cones());
    let dual_value_estimate =
        primal_obj_last + lagrangian_penalty(&res_last, &lambda_final, prob.cones(), rho);

    let u_avg = state.recover_average().unwrap_or_else(|_| u_last.clone());
    let qu_avg = prob.q_mat().matvec(&u_avg, &counter);
    let res_avg = prob.residual(&u_avg, &counter);
    let primal_obj_avg = prob.objective_from_qu(&u_avg, &qu_avg);
    let infeas_avg = dist_cone(&res_avg, prob.cones());

    let matvecs_recovery = counter.total() - recovery_start;
    let status = if failed {
        SolveStatus::InnerFailure
    } else if fired || state.k() >= sched.k_out {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIterations
    };
    let total_matvecs = counter.total();
    debug_assert_eq!(
        matvecs_setup + matvecs_inner + matvecs_outer + matvecs_recovery,
        total_matvecs
    );

    Ok(SolveReport {
        u_last,
        u_avg,
        lambda_final,
        primal_obj_last,
        primal_obj_avg,
        infeas_last,
        infeas_avg,
        dual_value_estimate,
        outer_iters: state.k(),
        total_inner_iters,
        total_matvecs,
        matvecs_setup,
        matvecs_inner,
        matvecs_outer,
        matvecs_recovery,
        status,
        trace,
        schedule: sched,
        constants: sc,
    })
}

/// A fresh inner solve at `lambda_final` under the same policies `solve`
/// would use; the warm start defaults to the projected origin. Calling this
/// with the multiplier, warm start, and policies of an in-loop iteration
/// reproduces that iteration's inner solution bit for bit.
pub fn recover_last(
    lambda_final: &[f64],
    prob: &QpProblem,
    config: &SolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<Vec<f64>, SolverError> {
    config.validate(prob)?;
    if lambda_final.len() != prob.p() {
        return Err(SolverError::InvalidConfig(format!(
            "multiplier has length {}, expected {}",
            lambda_final.len(),
            prob.p()
        )));
    }
    let counter = MatvecCounter::new();
    let constants = ProblemConstants::compute(prob, &counter)?;
    let (case, rho) = resolve_case(&constants, config)?;
    let fused = if rho > 0.0 && prob.p() > 0 && prob.all_rows_zero() {
        Some(prob.fused_hessian(rho, &counter))
    } else {
        None
    };
    let sc = SolveConstants::build(prob, constants, case, rho, fused.as_ref(), &counter)?;
    let diameter = prob.bounds().diameter();
    let sched = schedule(
        &sc,
        config.method,
        config.epsilon,
        config.dual_radius_estimate,
        diameter,
    )?;
    let eps_in = match config.epsilon_in {
        EpsilonInPolicy::Theory => sched.epsilon_in,
        EpsilonInPolicy::Fixed(v) => v,
    };
    let momentum = config
        .momentum_override
        .unwrap_or_else(|| auto_momentum(sc.sigma_inner, sc.tau_pd()));
    let stop = default_stop_policy(sc.l_inner, sc.sigma_inner, diameter, eps_in)?;
    let cap = iteration_cap(sc.l_inner, sc.sigma_inner, diameter, eps_in);
    let obj = InnerObjective::new(prob, rho, fused.as_ref(), lambda_final, &counter)?;
    let warm = match warm_start {
        Some(w) => w.to_vec(),
        None => prob.bounds().project(&vec![0.0; prob.n()]),
    };
    let outcome = solve_inner(
        &obj,
        &warm,
        sc.l_inner,
        sc.sigma_inner,
        momentum,
        &stop,
        cap,
    )?;
    Ok(outcome.u)
}

/// Closed-form worst-case bounds that accompany a run's measured values.
///
/// All bounds take the iteration count `k` as the number of completed outer
/// steps (the first generated multiplier has `k = 1`) and are valid when the
/// dual radius estimate dominates the true distance from the initial
/// multiplier to the nearest dual solution.
pub mod diagnostics {
    use crate::tuning::DualMethod;

    /// Worst-case gap between the optimal value and the dual value at the
    /// `k`-th multiplier: `4 L_d R_d^2/(k+1)^p + 2 (k+1)^(p-1) eps_in`,
    /// with `p = 1` for the plain scheme and `p = 2` for the accelerated one.
    pub fn dual_gap_bound(method: DualMethod, l_dual: f64, r_d: f64, eps_in: f64, k: u64) -> f64 {
        let t = (k + 1) as f64;
        match method {
            DualMethod::Dgm => 4.0 * l_dual * r_d * r_d / t + 2.0 * eps_in,
            DualMethod::Dfgm => 4.0 * l_dual * r_d * r_d / (t * t) + 2.0 * t * eps_in,
        }
    }

    /// Worst-case distance between two inexact gradients of the dual at the
    /// same point, one at accuracy `eps_in` and one at `eps_ref`.
    pub fn inexact_gradient_bound(l_dual: f64, eps_in: f64, eps_ref: f64) -> f64 {
        (2.0 * l_dual * eps_in).sqrt() + (2.0 * l_dual * eps_ref).sqrt()
    }

    /// Upper bound on the gap between the inexact linearization of the dual
    /// around one point and the dual value at another, `dist_sq` apart.
    pub fn linearization_gap_upper(l_dual: f64, dist_sq: f64, eps_in: f64) -> f64 {
        l_dual * dist_sq + 2.0 * eps_in
    }

    /// Worst-case cone violation of the average candidate after `k` plain
    /// outer steps.
    pub fn dgm_average_infeasibility_bound(l_dual: f64, r_d: f64, eps_in: f64, k: u64) -> f64 {
        let t = k as f64;
        4.0 * l_dual * r_d / t + 2.0 * (l_dual * eps_in / t).sqrt()
    }

    /// Worst-case cone violation of the average candidate after `k`
    /// accelerated outer steps.
    pub fn dfgm_average_infeasibility_bound(l_dual: f64, r_d: f64, eps_in: f64, k: u64) -> f64 {
        let t = (k + 1) as f64;
        8.0 * l_dual * r_d / (t * t) + 8.0 * (l_dual * eps_in / t).sqrt()
    }

    /// Worst-case distance of the `k`-th multiplier from the nearest dual
    /// solution; reduces to `r_d` when the gradients are exact.
    pub fn multiplier_drift_bound(r_d: f64, eps_in: f64, l_dual: f64, k: u64) -> f64 {
        r_d + (k as f64 * eps_in / l_dual).sqrt()
    }

    /// Worst-case norm of the multiplier at the certified budget, valid for
    /// both schemes under their theory schedules.
    pub fn multiplier_norm_bound(r_d: f64) -> f64 {
        4.0 * r_d
    }

    /// Worst-case cone violation of the last-iterate candidate at the
    /// certified budget under the theory schedule.
    pub fn last_iterate_feasibility_bound(l_dual: f64, r_d: f64, epsilon: f64) -> f64 {
        let a = (l_dual * epsilon).sqrt() / 2f64.sqrt();
        let b = l_dual.powf(0.25) * epsilon.powf(0.75) / (3.0 * r_d).sqrt();
        a.max(b) + (2.0 * l_dual * epsilon).sqrt()
    }

    /// Worst-case objective error of the last-iterate candidate at the
    /// certified budget under the theory schedule.
    pub fn last_iterate_suboptimality_bound(
        l_dual: f64,
        r_d: f64,
        epsilon: f64,
        eps_in: f64,
    ) -> f64 {
        let a = (l_dual * epsilon).sqrt() / 2f64.sqrt();
        let b = l_dual.powf(0.25) * epsilon.powf(0.75) / (3.0 * r_d).sqrt();
        4.0 * r_d * a.max(b) + 4.0 * r_d * (2.0 * l_dual * epsilon).sqrt() + eps_in
    }

    /// Admissible window for `F(u_avg) - F*` at the certified budget:
    /// `[-eps, eps/4]` for the plain scheme, `[-3 eps, 5 eps/4]` for the
    /// accelerated one.
    pub fn average_suboptimality_window(method: DualMethod, epsilon: f64) -> (f64, f64) {
        match method {
            DualMethod::Dgm => (-epsilon, 0.25 * epsilon),
            DualMethod::Dfgm => (-3.0 * epsilon, 1.25 * epsilon),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::model::BoxSet;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn single_var_problem(
        q: f64,
        qvec: f64,
        g: f64,
        gvec: f64,
        cone: ConeKind,
        lb: f64,
        ub: f64,
    ) -> QpProblem {
        QpProblem::new(
            DenseMatrix::new(1, 1, vec![q]),
            vec![qvec],
            DenseMatrix::new(1, 1, vec![g]),
            vec![gvec],
            vec![cone],
            BoxSet::new(vec![lb], vec![ub]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn dual_cone_clamps_inequality_rows_without_penalty() {
        let cone = DualCone::new(&[ConeKind::Zero, ConeKind::NonPos], 0.0);
        assert_eq!(cone.project(&[-2.0, -3.0]), vec![-2.0, 0.0]);
        assert!(cone.contains(&[-2.0, 0.0]));
        assert!(!cone.contains(&[0.0, -1.0]));
    }

    #[test]
    fn dual_cone_is_identity_with_penalty() {
        let cone = DualCone::new(&[ConeKind::Zero, ConeKind::NonPos], 2.0);
        assert_eq!(cone.project(&[-2.0, -3.0]), vec![-2.0, -3.0]);
        assert!(cone.contains(&[-2.0, -3.0]));
    }

    #[test]
    fn inexact_gradient_without_penalty_is_the_residual() {
        let prob = single_var_problem(1.0, 0.0, 2.0, 1.0, ConeKind::Zero, -10.0, 10.0);
        let counter = MatvecCounter::new();
        let g = inexact_dual_gradient(&[3.0], &[0.5], &prob, 0.0, &counter);
        assert_eq!(g, vec![7.0]);
        assert_eq!(counter.total(), 1);
    }

    #[test]
    fn inexact_gradient_vanishes_at_feasible_point() {
        let prob = single_var_problem(1.0, 0.0, 1.0, -1.0, ConeKind::Zero, -10.0, 10.0);
        let counter = MatvecCounter::new();
        let g = inexact_dual_gradient(&[1.0], &[0.3], &prob, 0.0, &counter);
        assert_abs_diff_eq!(g[0], 0.0);
    }

    #[test]
    fn inexact_gradient_inactive_inequality_is_absorbed_by_slack() {
        // G u + g = -5 on an inequality row with multiplier 0 and penalty 1:
        // the slack equals the residual, so the gradient vanishes.
        let prob = single_var_problem(1.0, 0.0, 1.0, -6.0, ConeKind::NonPos, -10.0, 10.0);
        let counter = MatvecCounter::new();
        let g = inexact_dual_gradient(&[1.0], &[0.0], &prob, 1.0, &counter);
        assert_abs_diff_eq!(g[0], 0.0);
    }

    #[test]
    fn outer_step_single_ascent() {
        let cone = DualCone::new(&[ConeKind::Zero], 0.0);
        let mut state = DualState::new(DualMethod::Dgm, vec![0.0], vec![0.0]);
        state.outer_step(&[0.0], &[2.0], 1.0, &cone).unwrap();
        assert_eq!(state.lambda(), &[1.0]);
        assert_eq!(state.mu(), &[1.0]);
        assert_eq!(state.k(), 1);
    }

    #[test]
    fn outer_step_clips_negative_inequality_multiplier() {
        let cone = DualCone::new(&[ConeKind::NonPos], 0.0);
        let mut state = DualState::new(DualMethod::Dgm, vec![0.0], vec![0.0]);
        state.outer_step(&[0.0], &[-4.0], 1.0, &cone).unwrap();
        assert_eq!(state.lambda(), &[0.0]);
    }

    #[test]
    fn accelerated_first_step_has_zero_momentum() {
        let cone = DualCone::new(&[ConeKind::Zero], 0.0);
        let mut state = DualState::new(DualMethod::Dfgm, vec![0.0], vec![0.0]);
        state.outer_step(&[0.0], &[2.0], 1.0, &cone).unwrap();
        // theta_1 = 1 makes beta_1 = 0, so the extrapolated point equals the
        // new multiplier.
        assert_eq!(state.mu(), state.lambda());
        // The second step extrapolates.
        state.outer_step(&[0.0], &[2.0], 1.0, &cone).unwrap();
        assert!(state.mu()[0] > state.lambda()[0]);
    }

    #[test]
    fn average_of_constant_sequence_is_the_constant() {
        let cone = DualCone::new(&[ConeKind::Zero], 0.0);
        let mut state = DualState::new(DualMethod::Dfgm, vec![0.0], vec![0.0, 0.0]);
        for _ in 0..5 {
            state.outer_step(&[3.0, -1.0], &[0.1], 1.0, &cone).unwrap();
        }
        let avg = state.recover_average().unwrap();
        assert_relative_eq!(avg[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(avg[1], -1.0, max_relative = 1e-12);
    }

    #[test]
    fn plain_average_is_arithmetic_mean() {
        let cone = DualCone::new(&[ConeKind::Zero], 0.0);
        let mut state = DualState::new(DualMethod::Dgm, vec![0.0], vec![0.0]);
        state.outer_step(&[0.0], &[0.0], 1.0, &cone).unwrap();
        state.outer_step(&[2.0], &[0.0], 1.0, &cone).unwrap();
        let avg = state.recover_average().unwrap();
        assert_abs_diff_eq!(avg[0], 1.0);
    }

    #[test]
    fn accelerated_average_uses_theta_weights() {
        let cone = DualCone::new(&[ConeKind::Zero], 0.0);
        let mut state = DualState::new(DualMethod::Dfgm, vec![0.0], vec![0.0]);
        state.outer_step(&[0.0], &[0.0], 1.0, &cone).unwrap();
        state.outer_step(&[2.0], &[0.0], 1.0, &cone).unwrap();
        let avg = state.recover_average().unwrap();
        // Weights 1 and (1+sqrt(5))/2: average = 2 theta2/(1+theta2).
        let theta2 = (1.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(avg[0], 2.0 * theta2 / (1.0 + theta2), max_relative = 1e-12);
        assert_relative_eq!(avg[0], 1.236_067_977_499_79, max_relative = 1e-9);
    }

    #[test]
    fn average_before_first_step_is_an_error() {
        let state = DualState::new(DualMethod::Dgm, vec![0.0], vec![0.0]);
        assert!(matches!(
            state.recover_average(),
            Err(SolverError::InvalidConfig(_))
        ));
    }

    #[test]
    fn weight_sum_matches_theta_square_identity() {
        let cone = DualCone::new(&[ConeKind::Zero], 0.0);
        let mut state = DualState::new(DualMethod::Dfgm, vec![0.0], vec![0.0]);
        let mut reference = ThetaSequence::new();
        for _ in 0..1000 {
            let theta_now = reference.theta();
            state.outer_step(&[1.0], &[0.0], 1.0, &cone).unwrap();
            assert_relative_eq!(
                state.weight_sum(),
                theta_now * theta_now,
                max_relative = 1e-9
            );
            reference.advance();
        }
    }

    #[test]
    fn non_finite_multiplier_is_rejected() {
        let cone = DualCone::new(&[ConeKind::Zero], 0.0);
        let mut state = DualState::new(DualMethod::Dgm, vec![0.0], vec![0.0]);
        let err = state.outer_step(&[0.0], &[f64::INFINITY], 1.0, &cone);
        assert!(matches!(err, Err(SolverError::InvalidProblem(_))));
    }

    /// min 0.5 u^2 - u  s.t.  u = 1, u in [-10, 10].
    /// The unconstrained minimizer already satisfies the constraint, so
    /// u* = 1, lambda* = 0, F* = -0.5.
    fn inactive_equality_problem() -> QpProblem {
        single_var_problem(1.0, -1.0, 1.0, -1.0, ConeKind::Zero, -10.0, 10.0)
    }

    #[test]
    fn plain_scheme_solves_inactive_equality() {
        let prob = inactive_equality_problem();
        let config = SolverConfig::new(DualMethod::Dgm, 1e-4);
        let report = solve(&prob, &config).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(
            (report.u_last[0] - 1.0).abs() <= 1e-2,
            "{}",
            report.u_last[0]
        );
        assert!(report.infeas_last <= 1e-2);
        assert!((report.u_avg[0] - 1.0).abs() <= 1e-2);
    }

    #[test]
    fn accelerated_scheme_solves_inactive_equality() {
        let prob = inactive_equality_problem();
        let config = SolverConfig::new(DualMethod::Dfgm, 1e-4);
        let report = solve(&prob, &config).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!((report.u_last[0] - 1.0).abs() <= 1e-2);
        assert!(report.infeas_last <= 1e-2);
    }

    /// min 0.5 u^2  s.t.  -u + 1 <= 0, u in [-10, 10]:
    /// u* = 1, lambda* = 1, F* = 0.5, and the multiplier is clamped at the
    /// dual cone boundary on the way there.
    fn active_inequality_problem() -> QpProblem {
        single_var_problem(1.0, 0.0, -1.0, 1.0, ConeKind::NonPos, -10.0, 10.0)
    }

    #[test]
    fn active_inequality_multiplier_stays_in_dual_cone() {
        let prob = active_inequality_problem();
        let mut config = SolverConfig::new(DualMethod::Dfgm, 1e-3);
        config.recovery = Recovery::Average;
        let report = solve(&prob, &config).unwrap();
        assert!(report.lambda_final[0] >= 0.0);
        assert!(
            (report.lambda_final[0] - 1.0).abs() <= 0.2,
            "{}",
            report.lambda_final[0]
        );
        assert!((report.u_avg[0] - 1.0).abs() <= 0.1);
        assert!((report.primal_obj_avg - 0.5).abs() <= 0.1);
    }

    /// Singular-Hessian instance that forces the augmented path:
    /// min u  s.t.  u = 0, u in [-5, 5]; u* = 0, lambda* = -1, F* = 0.
    fn singular_equality_problem() -> QpProblem {
        single_var_problem(0.0, 1.0, 1.0, 0.0, ConeKind::Zero, -5.0, 5.0)
    }

    #[test]
    fn augmented_path_engages_on_singular_hessian() {
        let prob = singular_equality_problem();
        let config = SolverConfig::new(DualMethod::Dfgm, 1e-3);
        let report = solve(&prob, &config).unwrap();
        assert_eq!(report.constants.case, LagrangianCase::Augmented);
        assert!(report.constants.rho > 0.0);
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.u_last[0].abs() <= 0.05, "{}", report.u_last[0]);
        // The heavy penalty flattens the dual, so the multiplier need not
        // approach the exact one; the value-level guarantees still hold.
        let eps_in = report.schedule.epsilon_in;
        assert!(report.dual_value_estimate <= 0.0 + eps_in + 1e-9);
        assert!(
            report.dual_value_estimate >= -(1e-3 + 2.0 * eps_in),
            "{}",
            report.dual_value_estimate
        );
        assert!(report.primal_obj_last.abs() <= 1e-2);
        assert!(report.infeas_last <= 1e-2);
    }

    #[test]
    fn trace_matches_iterations_and_matvec_phases_sum() {
        let prob = active_inequality_problem();
        let mut config = SolverConfig::new(DualMethod::Dgm, 1e-3);
        config.stopping = StoppingRule::BudgetOnly;
        config.max_outer = Some(25);
        let report = solve(&prob, &config).unwrap();
        assert_eq!(report.trace.len(), report.outer_iters as usize);
        assert_eq!(report.outer_iters, 25);
        for w in report.trace.windows(2) {
            assert!(w[0].cum_matvecs <= w[1].cum_matvecs);
            assert_eq!(w[0].k + 1, w[1].k);
        }
        assert_eq!(
            report.matvecs_setup
                + report.matvecs_inner
                + report.matvecs_outer
                + report.matvecs_recovery,
            report.total_matvecs
        );
        let last = report.trace.last().unwrap();
        assert!(last.cum_matvecs <= report.total_matvecs);
    }

    #[test]
    fn trace_csv_has_fixed_header_and_one_line_per_row() {
        let rows = vec![TraceRow {
            k: 1,
            dual_val: -0.5,
            f_last: -0.25,
            f_avg: -0.25,
            infeas_last: 0.1,
            infeas_avg: 0.1,
            inner_iters: 3,
            cum_matvecs: 17,
        }];
        let csv = trace_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,dual_val,f_last,f_avg,infeas_last,infeas_avg,inner_iters,cum_matvecs"
        );
        assert_eq!(lines.next().unwrap(), "1,-0.5,-0.25,-0.25,0.1,0.1,3,17");
        assert!(lines.next().is_none());
    }

    #[test]
    fn solve_is_deterministic() {
        let prob = active_inequality_problem();
        let mut config = SolverConfig::new(DualMethod::Dfgm, 1e-4);
        config.recovery = Recovery::Average;
        let a = solve(&prob, &config).unwrap();
        let b = solve(&prob, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dual_values_respect_weak_duality_with_inner_slack() {
        let prob = inactive_equality_problem();
        let mut config = SolverConfig::new(DualMethod::Dgm, 1e-3);
        config.stopping = StoppingRule::BudgetOnly;
        config.max_outer = Some(40);
        let report = solve(&prob, &config).unwrap();
        let f_star = -0.5;
        let eps_in = report.schedule.epsilon_in;
        for row in &report.trace {
            assert!(
                row.dual_val <= f_star + eps_in + 1e-9,
                "iteration {}: {} exceeds {}",
                row.k,
                row.dual_val,
                f_star + eps_in
            );
        }
        assert!(report.dual_value_estimate <= f_star + eps_in + 1e-9);
    }

    #[test]
    fn capped_run_reports_iteration_limit() {
        let prob = active_inequality_problem();
        let mut config = SolverConfig::new(DualMethod::Dgm, 1e-6);
        // An optimum the run cannot certify plus a cap below the schedule.
        config.stopping = StoppingRule::KnownOptimum(1e6);
        config.max_outer = Some(2);
        let report = solve(&prob, &config).unwrap();
        assert_eq!(report.status, SolveStatus::MaxIterations);
        assert_eq!(report.outer_iters, 2);
    }

    #[test]
    fn fixed_inner_accuracy_is_honored() {
        let prob = active_inequality_problem();
        let mut config = SolverConfig::new(DualMethod::Dgm, 1e-3);
        config.epsilon_in = EpsilonInPolicy::Fixed(0.05);
        let report = solve(&prob, &config).unwrap();
        assert_eq!(report.schedule.epsilon_in, 0.05);
        assert!(report
            .schedule
            .notes
            .iter()
            .any(|n| n.contains("overridden")));
    }

    #[test]
    fn known_optimum_stopping_fires_early() {
        let prob = inactive_equality_problem();
        let mut config = SolverConfig::new(DualMethod::Dfgm, 1e-2);
        config.stopping = StoppingRule::KnownOptimum(-0.5);
        let report = solve(&prob, &config).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.outer_iters <= report.schedule.k_out);
    }

    #[test]
    fn repeated_inner_solves_are_bitwise_identical() {
        let prob = active_inequality_problem();
        let config = SolverConfig::new(DualMethod::Dgm, 1e-3);
        let lambda = vec![0.7];
        let warm = vec![0.3];
        let a = recover_last(&lambda, &prob, &config, Some(&warm)).unwrap();
        let b = recover_last(&lambda, &prob, &config, Some(&warm)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recover_last_near_dual_optimum_returns_primal_optimum() {
        let prob = active_inequality_problem();
        let mut config = SolverConfig::new(DualMethod::Dgm, 1e-6);
        config.epsilon_in = EpsilonInPolicy::Fixed(1e-12);
        let u = recover_last(&[1.0], &prob, &config, None).unwrap();
        assert!((u[0] - 1.0).abs() <= 1e-4, "{}", u[0]);
    }

    #[test]
    fn plain_final_averaging_can_be_disabled() {
        let prob = active_inequality_problem();
        let mut on = SolverConfig::new(DualMethod::Dgm, 1e-3);
        on.stopping = StoppingRule::BudgetOnly;
        on.max_outer = Some(10);
        let mut off = on.clone();
        off.dgm_final_averaging = false;
        let ron = solve(&prob, &on).unwrap();
        let roff = solve(&prob, &off).unwrap();
        // With the redefinition disabled the final multiplier is the raw
        // last iterate; with it enabled it is one ascent step from the
        // running average, so the two generally differ.
        assert_ne!(ron.lambda_final, roff.lambda_final);
    }

    #[test]
    fn unconstrained_problem_converges_in_one_outer_iteration() {
        // No rows at all: the dual loop degenerates to a single inner solve.
        let prob = QpProblem::new(
            DenseMatrix::new(1, 1, vec![2.0]),
            vec![-2.0],
            DenseMatrix::new(0, 1, vec![]),
            vec![],
            vec![],
            BoxSet::new(vec![-10.0], vec![10.0]).unwrap(),
        )
        .unwrap();
        let config = SolverConfig::new(DualMethod::Dgm, 1e-6);
        let report = solve(&prob, &config).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!((report.u_last[0] - 1.0).abs() <= 1e-3);
        assert_eq!(report.lambda_final.len(), 0);
    }

    #[test]
    fn diagnostics_schedule_certifies_target_at_budget() {
        // Pinned constants: L_d = 4, R_d = 1, eps = 0.01.
        let (l_d, r_d, eps) = (4.0, 1.0, 0.01);
        // Plain scheme: k_out = 3200, eps_in = 0.0025.
        let b = diagnostics::dual_gap_bound(DualMethod::Dgm, l_d, r_d, 0.0025, 3200);
        assert!(b <= eps + 1e-12, "{b}");
        // Accelerated scheme: k_out = 57, eps_in ~ 4.419e-5.
        let eps_in = eps * eps.sqrt() / (8.0 * r_d * (2.0 * l_d).sqrt());
        let b = diagnostics::dual_gap_bound(DualMethod::Dfgm, l_d, r_d, eps_in, 57);
        assert!(b <= eps + 1e-12, "{b}");
    }

    #[test]
    fn diagnostics_average_infeasibility_meets_targets_at_budget() {
        let (l_d, r_d, eps) = (4.0, 1.0, 0.01);
        let b = diagnostics::dgm_average_infeasibility_bound(l_d, r_d, eps / 4.0, 3200);
        assert!(b <= eps / r_d + 1e-12, "{b}");
        let eps_in = eps * eps.sqrt() / (8.0 * r_d * (2.0 * l_d).sqrt());
        let b = diagnostics::dfgm_average_infeasibility_bound(l_d, r_d, eps_in, 57);
        assert!(b <= 3.0 * eps / r_d + 1e-12, "{b}");
    }

    #[test]
    fn diagnostics_drift_reduces_to_radius_with_exact_gradients() {
        assert_abs_diff_eq!(diagnostics::multiplier_drift_bound(2.5, 0.0, 4.0, 100), 2.5);
        assert_abs_diff_eq!(diagnostics::multiplier_norm_bound(2.5), 10.0);
    }

    #[test]
    fn diagnostics_last_iterate_bounds_scale_like_sqrt_epsilon() {
        let (l_d, r_d) = (4.0, 1.0);
        for &eps in &[1e-2, 1e-4] {
            let feas = diagnostics::last_iterate_feasibility_bound(l_d, r_d, eps);
            let sub = diagnostics::last_iterate_suboptimality_bound(l_d, r_d, eps, eps / 4.0);
            let scale = (l_d * eps).sqrt();
            assert!(feas <= 10.0 * scale, "{feas} vs {scale}");
            assert!(sub <= 10.0 * r_d * scale + eps, "{sub} vs {scale}");
            assert!(feas > 0.0 && sub > 0.0);
        }
        let (lo, hi) = diagnostics::average_suboptimality_window(DualMethod::Dgm, 0.01);
        assert_abs_diff_eq!(lo, -0.01);
        assert_abs_diff_eq!(hi, 0.0025);
        let (lo, hi) = diagnostics::average_suboptimality_window(DualMethod::Dfgm, 0.01);
        assert_abs_diff_eq!(lo, -0.03);
        assert_abs_diff_eq!(hi, 0.0125);
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let prob = inactive_equality_problem();
        let mut c = SolverConfig::new(DualMethod::Dgm, 0.0);
        assert!(solve(&prob, &c).is_err());
        c.epsilon = 1e-3;
        c.dual_radius_estimate = -1.0;
        assert!(solve(&prob, &c).is_err());
        c.dual_radius_estimate = 1.0;
        c.epsilon_in = EpsilonInPolicy::Fixed(0.0);
        assert!(solve(&prob, &c).is_err());
        c.epsilon_in = EpsilonInPolicy::Theory;
        c.max_outer = Some(0);
        assert!(solve(&prob, &c).is_err());
        c.max_outer = None;
        c.lambda0 = Some(vec![0.0, 0.0]);
        assert!(solve(&prob, &c).is_err());
        c.lambda0 = None;
        c.rho = RhoPolicy::Fixed(-2.0);
        assert!(solve(&prob, &c).is_err());
    }

    #[test]
    fn forced_augmented_policy_sets_work_balancing_weight() {
        let prob = inactive_equality_problem();
        let mut config = SolverConfig::new(DualMethod::Dfgm, 1e-2);
        config.rho = RhoPolicy::ForceAugmented;
        let report = solve(&prob, &config).unwrap();
        assert_eq!(report.constants.case, LagrangianCase::Augmented);
        // 8 R_d^2 / eps with R_d = 1 and eps = 0.01.
        assert_relative_eq!(report.constants.rho, 800.0, max_relative = 1e-12);
    }
}
