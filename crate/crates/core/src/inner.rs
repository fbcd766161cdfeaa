//! Projected first-order methods for the inner subproblems.
//!
//! Minimizes the smooth convex function `phi(u) = L_rho(u, mu)` over the box
//! `U` by projected gradient steps with optional momentum. Three momentum
//! rules are supported: none (plain projected gradient), the accelerated
//! theta-sequence rule, and a fixed momentum for strongly convex objectives.
//! Termination is either a fixed iteration count carrying an a-priori
//! accuracy guarantee, or an adaptive gradient-map test whose pass certifies
//! the inner accuracy through strong convexity.

use serde::{Deserialize, Serialize};

use crate::linalg::{distance, DenseMatrix, MatvecCounter};
use crate::model::{slack_from_residual, BoxSet, QpProblem};
use crate::SolverError;

/// Hard ceiling on inner iterations regardless of the configured budget.
pub const INNER_HARD_CAP: u64 = 1_000_000;

/// Multiplier applied to the a-priori fixed-count estimate to form the
/// adaptive policy's iteration budget.
pub const CAP_MULTIPLIER: u64 = 50;

/// The accelerated momentum coefficients: `theta_1 = 1`,
/// `theta_{k+1} = (1 + sqrt(1 + 4 theta_k^2))/2`, `beta_k = (theta_k - 1)/theta_{k+1}`.
///
/// The sequence satisfies `(k+1)/2 <= theta_k <= k` and
/// `sum_{j<=k} theta_j = theta_k^2`.
#[derive(Debug, Clone)]
pub struct ThetaSequence {
    theta: f64,
}

impl ThetaSequence {
    pub fn new() -> Self {
        Self { theta: 1.0 }
    }

    /// Current `theta_k`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Advances to `theta_{k+1}` and returns `beta_k`.
    pub fn advance(&mut self) -> f64 {
        let next = 0.5 * (1.0 + (1.0 + 4.0 * self.theta * self.theta).sqrt());
        let beta = (self.theta - 1.0) / next;
        self.theta = next;
        beta
    }
}

impl Default for ThetaSequence {
    fn default() -> Self {
        Self::new()
    }
}

/// Which momentum rule the inner loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentumKind {
    /// Plain projected gradient (`beta_k = 0`).
    Gm,
    /// Accelerated method with the theta-sequence momentum.
    Fgm,
    /// Fixed momentum `(sqrt(L) - sqrt(sigma))/(sqrt(L) + sqrt(sigma))` for
    /// strongly convex objectives.
    FgmStrong,
}

impl std::fmt::Display for MomentumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MomentumKind::Gm => write!(f, "GM"),
            MomentumKind::Fgm => write!(f, "FGM"),
            MomentumKind::FgmStrong => write!(f, "FGM-strong"),
        }
    }
}

/// Instantiated momentum state for one inner solve.
#[derive(Debug, Clone)]
pub enum Momentum {
    Gm,
    Fgm(ThetaSequence),
    FgmStrong { beta: f64 },
}

impl Momentum {
    pub fn new(kind: MomentumKind, l_phi: f64, sigma_phi: f64) -> Result<Self, SolverError> {
        match kind {
            MomentumKind::Gm => Ok(Momentum::Gm),
            MomentumKind::Fgm => Ok(Momentum::Fgm(ThetaSequence::new())),
            MomentumKind::FgmStrong => {
                if sigma_phi.is_nan() || sigma_phi <= 0.0 {
                    return Err(SolverError::InvalidConfig(
                        "fixed strong-convexity momentum requires sigma > 0".into(),
                    ));
                }
                let (sl, ss) = (l_phi.sqrt(), sigma_phi.sqrt());
                Ok(Momentum::FgmStrong {
                    beta: (sl - ss) / (sl + ss),
                })
            }
        }
    }

    /// Momentum coefficient for the step being taken.
    pub fn next_beta(&mut self) -> f64 {
        match self {
            Momentum::Gm => 0.0,
            Momentum::Fgm(theta) => theta.advance(),
            Momentum::FgmStrong { beta } => *beta,
        }
    }
}

/// Picks the momentum rule from the certified strong-convexity constant:
/// the fixed rule when it clears the positive-definiteness threshold,
/// otherwise the theta-sequence rule.
pub fn auto_momentum(sigma_phi: f64, tau_pd: f64) -> MomentumKind {
    if sigma_phi > tau_pd {
        MomentumKind::FgmStrong
    } else {
        MomentumKind::Fgm
    }
}

/// Inner termination rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopPolicy {
    /// Run exactly `count` steps; the count comes from an a-priori rate bound.
    FixedCount { count: u64 },
    /// Stop once the gradient-map norm drops to `threshold`; the returned
    /// point is the projected step from the tested point, which then
    /// satisfies the inner accuracy via strong convexity.
    GradientMap { threshold: f64 },
}

impl StopPolicy {
    /// Adaptive policy with threshold `sqrt(2 sigma eps_in)`: passing it
    /// bounds the inner suboptimality of the projected step by `eps_in`.
    pub fn gradient_map(sigma_phi: f64, epsilon_in: f64) -> Result<Self, SolverError> {
        if sigma_phi.is_nan() || sigma_phi <= 0.0 {
            return Err(SolverError::InvalidConfig(
                "the gradient-map stopping test requires a strongly convex inner objective".into(),
            ));
        }
        if epsilon_in.is_nan() || epsilon_in <= 0.0 {
            return Err(SolverError::InvalidConfig(
                "inner accuracy must be positive".into(),
            ));
        }
        Ok(StopPolicy::GradientMap {
            threshold: (2.0 * sigma_phi * epsilon_in).sqrt(),
        })
    }

    /// A-priori iteration count that guarantees inner accuracy `eps_in`
    /// from any start in the box, per momentum rule.
    pub fn fixed_count_for(
        kind: MomentumKind,
        l_phi: f64,
        sigma_phi: f64,
        box_diameter: f64,
        epsilon_in: f64,
    ) -> Result<Self, SolverError> {
        if epsilon_in.is_nan() || epsilon_in <= 0.0 {
            return Err(SolverError::InvalidConfig(
                "inner accuracy must be positive".into(),
            ));
        }
        if !box_diameter.is_finite() {
            return Err(SolverError::InvalidConfig(
                "fixed-count inner termination needs a bounded box".into(),
            ));
        }
        let d2 = box_diameter * box_diameter;
        let count = match kind {
            MomentumKind::Gm => 2.0 * l_phi * d2 / epsilon_in,
            MomentumKind::Fgm => (2.0 * l_phi * d2 / epsilon_in).sqrt(),
            MomentumKind::FgmStrong => {
                if sigma_phi.is_nan() || sigma_phi <= 0.0 {
                    return Err(SolverError::InvalidConfig(
                        "fixed strong-convexity momentum requires sigma > 0".into(),
                    ));
                }
                (l_phi / sigma_phi).sqrt() * (l_phi * d2 / epsilon_in).ln().max(0.0) + 1.0
            }
        };
        Ok(StopPolicy::FixedCount {
            count: count.ceil().max(1.0) as u64,
        })
    }
}

/// Default termination: the adaptive gradient-map test whenever strong
/// convexity is certified, else the a-priori fixed count for the
/// theta-sequence method.
pub fn default_stop_policy(
    l_phi: f64,
    sigma_phi: f64,
    box_diameter: f64,
    epsilon_in: f64,
) -> Result<StopPolicy, SolverError> {
    if sigma_phi > 0.0 {
        StopPolicy::gradient_map(sigma_phi, epsilon_in)
    } else {
        StopPolicy::fixed_count_for(
            MomentumKind::Fgm,
            l_phi,
            sigma_phi,
            box_diameter,
            epsilon_in,
        )
    }
}

/// Iteration budget for the adaptive policy: a fixed multiple of the
/// a-priori count when one exists, otherwise the hard cap.
pub fn iteration_cap(l_phi: f64, sigma_phi: f64, box_diameter: f64, epsilon_in: f64) -> u64 {
    let kind = if sigma_phi > 0.0 {
        MomentumKind::FgmStrong
    } else {
        MomentumKind::Fgm
    };
    match StopPolicy::fixed_count_for(kind, l_phi, sigma_phi, box_diameter, epsilon_in) {
        Ok(StopPolicy::FixedCount { count }) => {
            count.saturating_mul(CAP_MULTIPLIER).min(INNER_HARD_CAP)
        }
        _ => INNER_HARD_CAP,
    }
}

/// How the inner gradient is assembled, chosen once per solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerPath {
    /// `rho = 0`: gradient `Q u + (q + G' mu)`, one product per evaluation.
    Ordinary,
    /// `rho > 0`, all rows equalities: gradient `(Q + rho G'G) u + (q + G'(mu + rho g))`,
    /// one product per evaluation against the fused Hessian.
    FusedZero,
    /// `rho > 0` with inequality rows: slack-dependent gradient, three
    /// products per evaluation.
    General,
}

impl InnerPath {
    pub fn select(prob: &QpProblem, rho: f64) -> Self {
        if rho == 0.0 {
            InnerPath::Ordinary
        } else if prob.all_rows_zero() {
            InnerPath::FusedZero
        } else {
            InnerPath::General
        }
    }
}

/// The inner objective `phi(u) = L_rho(u, mu)` with its gradient machinery.
///
/// The multiplier-dependent linear term is precomputed on every multiplier
/// update so that the per-step cost stays at one product on the fast paths.
pub struct InnerObjective<'a> {
    prob: &'a QpProblem,
    rho: f64,
    path: InnerPath,
    fused: Option<&'a DenseMatrix>,
    mu: Vec<f64>,
    lin: Vec<f64>,
    counter: &'a MatvecCounter,
}

impl<'a> InnerObjective<'a> {
    /// Builds the objective at multiplier `mu`. The fused Hessian must be
    /// supplied for the all-equality augmented path.
    pub fn new(
        prob: &'a QpProblem,
        rho: f64,
        fused: Option<&'a DenseMatrix>,
        mu: &[f64],
        counter: &'a MatvecCounter,
    ) -> Result<Self, SolverError> {
        let path = InnerPath::select(prob, rho);
        if path == InnerPath::FusedZero {
            match fused {
                Some(h) => {
                    assert_eq!(h.rows(), prob.n(), "fused Hessian has the wrong shape");
                    assert_eq!(h.cols(), prob.n(), "fused Hessian has the wrong shape");
                }
                None => {
                    return Err(SolverError::InvalidConfig(
                        "the all-equality augmented path needs the fused Hessian".into(),
                    ));
                }
            }
        }
        let mut obj = Self {
            prob,
            rho,
            path,
            fused,
            mu: Vec::new(),
            lin: Vec::new(),
            counter,
        };
        obj.set_multiplier(mu);
        Ok(obj)
    }

    /// Installs a new multiplier, refreshing the precomputed linear term
    /// (one transposed product on the fast paths).
    pub fn set_multiplier(&mut self, mu: &[f64]) {
        assert_eq!(mu.len(), self.prob.p(), "multiplier has the wrong length");
        self.mu.clear();
        self.mu.extend_from_slice(mu);
        match self.path {
            InnerPath::General => {}
            InnerPath::Ordinary => {
                if self.prob.p() == 0 {
                    self.lin = self.prob.q_vec().to_vec();
                } else {
                    let gt = self.prob.g_mat().matvec_transpose(&self.mu, self.counter);
                    self.lin = add(self.prob.q_vec(), &gt);
                }
            }
            InnerPath::FusedZero => {
                let w: Vec<f64> = self
                    .mu
                    .iter()
                    .zip(self.prob.g_vec())
                    .map(|(&mi, &gi)| mi + self.rho * gi)
                    .collect();
                let gt = self.prob.g_mat().matvec_transpose(&w, self.counter);
                self.lin = add(self.prob.q_vec(), &gt);
            }
        }
    }

    /// `grad phi(u)`.
    pub fn grad(&self, u: &[f64]) -> Vec<f64> {
        match self.path {
            InnerPath::Ordinary => {
                let mut g = self.prob.q_mat().matvec(u, self.counter);
                for (gi, &li) in g.iter_mut().zip(&self.lin) {
                    *gi += li;
                }
                g
            }
            InnerPath::FusedZero => {
                let h = self.fused.expect("fused path always holds the Hessian");
                let mut g = h.matvec(u, self.counter);
                for (gi, &li) in g.iter_mut().zip(&self.lin) {
                    *gi += li;
                }
                g
            }
            InnerPath::General => {
                let r = self.prob.residual(u, self.counter);
                let s = slack_from_residual(&r, &self.mu, self.prob.cones(), self.rho);
                let w: Vec<f64> = r
                    .iter()
                    .zip(&s)
                    .zip(&self.mu)
                    .map(|((&ri, &si), &mi)| mi + self.rho * (ri - si))
                    .collect();
                let mut g = self.prob.q_mat().matvec(u, self.counter);
                let gt = self.prob.g_mat().matvec_transpose(&w, self.counter);
                for ((gi, &qi), &ti) in g.iter_mut().zip(self.prob.q_vec()).zip(&gt) {
                    *gi += qi + ti;
                }
                g
            }
        }
    }

    /// `phi(u)` (two counted products); used for diagnostics and tests,
    /// never inside the iteration loop.
    pub fn value(&self, u: &[f64]) -> f64 {
        crate::model::lagrangian_value(u, &self.mu, self.prob, self.rho, self.counter)
    }

    /// Counted products per gradient evaluation on this path.
    pub fn matvecs_per_grad(&self) -> u64 {
        match self.path {
            InnerPath::Ordinary | InnerPath::FusedZero => 1,
            InnerPath::General => 3,
        }
    }

    pub fn path(&self) -> InnerPath {
        self.path
    }

    pub fn problem(&self) -> &QpProblem {
        self.prob
    }

    pub fn multiplier(&self) -> &[f64] {
        &self.mu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

fn ensure_finite(g: &[f64]) -> Result<(), SolverError> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SolverError::InvalidProblem(
            "non-finite gradient encountered in the inner loop".into(),
        ))
    }
}

/// Iterate state of the projected method: `x` is the latest projected point,
/// `y` the next gradient-evaluation point, `k` the number of steps taken.
#[derive(Debug, Clone)]
pub struct InnerState {
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub y: Vec<f64>,
    pub k: u64,
}

impl InnerState {
    /// Starts at `x0` (which is also the first evaluation point).
    pub fn new(x0: Vec<f64>) -> Self {
        Self {
            x_prev: x0.clone(),
            y: x0.clone(),
            x: x0,
            k: 0,
        }
    }
}

/// `[point - grad/L]_U`.
pub fn prox_point(point: &[f64], grad: &[f64], l_phi: f64, bounds: &BoxSet) -> Vec<f64> {
    let mut x: Vec<f64> = point
        .iter()
        .zip(grad)
        .map(|(&pi, &gi)| pi - gi / l_phi)
        .collect();
    bounds.project_in_place(&mut x);
    x
}

/// Norm of the projected-gradient mapping at `x`:
/// `L * || x - [x - grad/L]_U ||`. Zero exactly at box-constrained minimizers.
pub fn gradient_map_norm(x: &[f64], grad_x: &[f64], l_phi: f64, bounds: &BoxSet) -> f64 {
    let xp = prox_point(x, grad_x, l_phi, bounds);
    l_phi * distance(x, &xp)
}

fn advance_state(state: &mut InnerState, beta: f64, x_new: Vec<f64>) {
    let y: Vec<f64> = x_new
        .iter()
        .zip(&state.x)
        .map(|(&xn, &xo)| xn + beta * (xn - xo))
        .collect();
    state.x_prev = std::mem::replace(&mut state.x, x_new);
    state.y = y;
    state.k += 1;
}

/// One projected step with momentum: evaluates the gradient at `y`,
/// projects the step onto the box, and extrapolates the next `y`.
pub fn fom_step<G>(
    state: &mut InnerState,
    rule: &mut Momentum,
    l_phi: f64,
    bounds: &BoxSet,
    mut grad_fn: G,
) -> Result<(), SolverError>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    assert!(l_phi > 0.0, "smoothness constant must be positive");
    let g = grad_fn(&state.y);
    ensure_finite(&g)?;
    let x_new = prox_point(&state.y, &g, l_phi, bounds);
    let beta = rule.next_beta();
    advance_state(state, beta, x_new);
    Ok(())
}

/// Result of one inner solve.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    /// The returned approximate minimizer (always inside the box).
    pub u: Vec<f64>,
    /// Number of projected steps taken.
    pub iters: u64,
    /// Whether the configured policy's accuracy guarantee holds for `u`
    /// (false only when the adaptive test hit its iteration budget).
    pub certified: bool,
    /// Number of gradient evaluations performed.
    pub grad_evals: u64,
}

/// Runs the projected method from `warm_start` until the stop policy fires.
///
/// Under the adaptive policy the gradient at the current `x` doubles as the
/// step gradient whenever the evaluation point coincides with `x` (always
/// for the plain method, and during the zero-momentum prefix of the
/// accelerated one), so those turns cost a single evaluation. If the budget
/// runs out the iterate with the smallest observed gradient-map norm is
/// returned uncertified.
pub fn solve_inner(
    obj: &InnerObjective<'_>,
    warm_start: &[f64],
    l_phi: f64,
    sigma_phi: f64,
    kind: MomentumKind,
    stop: &StopPolicy,
    cap: u64,
) -> Result<InnerOutcome, SolverError> {
    assert!(l_phi > 0.0, "smoothness constant must be positive");
    let bounds = obj.problem().bounds();
    let mut x0 = warm_start.to_vec();
    bounds.project_in_place(&mut x0);
    let mut momentum = Momentum::new(kind, l_phi, sigma_phi)?;
    let mut state = InnerState::new(x0);
    match *stop {
        StopPolicy::FixedCount { count } => {
            let steps = count.min(INNER_HARD_CAP);
            let mut grad_evals = 0u64;
            for _ in 0..steps {
                fom_step(&mut state, &mut momentum, l_phi, bounds, |y| {
                    grad_evals += 1;
                    obj.grad(y)
                })?;
            }
            Ok(InnerOutcome {
                u: state.x,
                iters: steps,
                certified: true,
                grad_evals,
            })
        }
        StopPolicy::GradientMap { threshold } => {
            let cap = cap.min(INNER_HARD_CAP);
            let mut grad_evals = 0u64;
            let mut best_norm = f64::INFINITY;
            let mut best_point = state.x.clone();
            loop {
                let gx = obj.grad(&state.x);
                grad_evals += 1;
                ensure_finite(&gx)?;
                let xplus = prox_point(&state.x, &gx, l_phi, bounds);
                let gnorm = l_phi * distance(&state.x, &xplus);
                if gnorm <= threshold {
                    return Ok(InnerOutcome {
                        u: xplus,
                        iters: state.k,
                        certified: true,
                        grad_evals,
                    });
                }
                if gnorm < best_norm {
                    best_norm = gnorm;
                    best_point = xplus.clone();
                }
                if state.k >= cap {
                    return Ok(InnerOutcome {
                        u: best_point,
                        iters: state.k,
                        certified: false,
                        grad_evals,
                    });
                }
                if state.y == state.x {
                    // The evaluation point coincides with the tested point:
                    // reuse the gradient, and the projected step is exactly
                    // the tested prox point.
                    let beta = momentum.next_beta();
                    advance_state(&mut state, beta, xplus);
                } else {
                    fom_step(&mut state, &mut momentum, l_phi, bounds, |y| {
                        grad_evals += 1;
                        obj.grad(y)
                    })?;
                }
            }
        }
    }
}
