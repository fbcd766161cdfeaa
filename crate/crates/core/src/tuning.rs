//! Solver constants and accuracy schedules derived from problem data.
//!
//! Everything here is a pure function of measurable quantities: the extreme
//! eigenvalues of `Q`, the spectral norm of `G`, the penalty weight `rho`,
//! the target accuracy `epsilon`, and an estimate of the dual-solution
//! radius. The schedules choose the inner accuracy and the outer iteration
//! budget so that the certified duality-gap bound of each dual method drops
//! below `epsilon` after the scheduled number of outer iterations.

use serde::{Deserialize, Serialize};

use crate::linalg::{spectral_norm, sym_eig_extremes, DenseMatrix, MatvecCounter};
use crate::model::QpProblem;
use crate::SolverError;

/// Relative safety margin applied to estimated spectral quantities so that
/// derived smoothness constants err on the conservative side (over-estimated
/// Lipschitz constants, under-estimated strong convexity).
pub const DELTA_SAFE: f64 = 1e-6;

/// Scale factor for the positive-definiteness threshold `tau_pd`.
pub const TAU_PD_SCALE: f64 = 1e-7;

/// Outer dual update rule: plain dual gradient ascent or the accelerated
/// variant with momentum on the multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualMethod {
    /// Dual gradient method (averaged-iterate guarantees).
    Dgm,
    /// Dual fast gradient method (accelerated outer rate).
    Dfgm,
}

impl std::fmt::Display for DualMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DualMethod::Dgm => write!(f, "DGM"),
            DualMethod::Dfgm => write!(f, "DFGM"),
        }
    }
}

/// Which Lagrangian the dual methods act on: the ordinary Lagrangian
/// (`rho = 0`, requires strictly convex `Q`) or the augmented one
/// (`rho > 0`, handles merely positive semidefinite `Q`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LagrangianCase {
    Ordinary,
    Augmented,
}

impl std::fmt::Display for LagrangianCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LagrangianCase::Ordinary => write!(f, "ordinary"),
            LagrangianCase::Augmented => write!(f, "augmented"),
        }
    }
}

/// Spectral quantities of the problem data, estimated once per solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Smallest eigenvalue of `Q` (estimates within tolerance of zero are
    /// clamped to zero).
    pub lam_min_q: f64,
    /// Largest eigenvalue of `Q`.
    pub lam_max_q: f64,
    /// Spectral norm of `G` (zero when there are no constraint rows).
    pub g_norm: f64,
}

impl ProblemConstants {
    /// Estimates the constants by power iteration and rejects indefinite `Q`.
    pub fn compute(prob: &QpProblem, counter: &MatvecCounter) -> Result<Self, SolverError> {
        let (lam_min_q, lam_max_q) = sym_eig_extremes(prob.q_mat(), true, counter)?;
        if lam_min_q < 0.0 {
            return Err(SolverError::InvalidProblem(format!(
                "Q is not positive semidefinite: smallest eigenvalue estimate {lam_min_q:.6e}"
            )));
        }
        let g_norm = if prob.p() == 0 {
            0.0
        } else {
            spectral_norm(prob.g_mat(), counter)?
        };
        Ok(Self {
            lam_min_q,
            lam_max_q,
            g_norm,
        })
    }

    /// Threshold below which `Q` is treated as lacking strict convexity.
    pub fn tau_pd(&self) -> f64 {
        TAU_PD_SCALE * self.lam_max_q.max(1.0)
    }
}

/// Picks the ordinary Lagrangian exactly when `Q` is strictly positive
/// definite beyond the numerical threshold; otherwise the augmented one.
pub fn select_case(constants: &ProblemConstants) -> LagrangianCase {
    if constants.lam_min_q > constants.tau_pd() {
        LagrangianCase::Ordinary
    } else {
        LagrangianCase::Augmented
    }
}

/// Penalty weight that balances outer and inner work when `Q` is only
/// positive semidefinite: `8 R_d^2 / epsilon`.
pub fn rho_star(r_d_estimate: f64, epsilon: f64) -> f64 {
    8.0 * r_d_estimate * r_d_estimate / epsilon
}

/// Smoothness constant of the dual function:
/// `||G||^2 / (lam_min(Q) + rho ||G||^2)`, computed with the spectral-norm
/// estimate inflated and the eigenvalue estimate deflated so the result
/// over-estimates the true constant.
pub fn dual_lipschitz(lam_min_q: f64, g_norm: f64, rho: f64) -> Result<f64, SolverError> {
    if g_norm == 0.0 {
        // No coupling at all: the dual function is constant.
        return Ok(0.0);
    }
    let g_hi = g_norm * (1.0 + DELTA_SAFE);
    let g_lo = g_norm * (1.0 - DELTA_SAFE);
    let lam_lo = (lam_min_q * (1.0 - DELTA_SAFE)).max(0.0);
    let denom = lam_lo + rho * g_lo * g_lo;
    if denom <= 0.0 {
        return Err(SolverError::InvalidConfig(
            "dual smoothness constant undefined: Q has no certified strict convexity and rho = 0; \
             solve on the augmented path (rho > 0) instead"
                .into(),
        ));
    }
    Ok(g_hi * g_hi / denom)
}

/// Smoothness constant of the inner objective `u -> L_rho(u, mu)`:
/// `lam_max(Q) + rho ||G||^2`, conservatively inflated.
pub fn inner_lipschitz(lam_max_q: f64, g_norm: f64, rho: f64) -> f64 {
    let g_hi = g_norm * (1.0 + DELTA_SAFE);
    lam_max_q * (1.0 + DELTA_SAFE) + rho * g_hi * g_hi
}

/// All constants a solve needs for one fixed penalty weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConstants {
    pub case: LagrangianCase,
    pub rho: f64,
    /// Smoothness constant of the dual function.
    pub l_dual: f64,
    /// Smoothness constant of the inner objective.
    pub l_inner: f64,
    /// Certified strong-convexity constant of the inner objective
    /// (zero when none is certified).
    pub sigma_inner: f64,
    pub problem: ProblemConstants,
}

impl SolveConstants {
    /// Derives the per-`rho` constants. For the augmented path on problems
    /// whose rows are all equalities, the strong-convexity constant comes
    /// from the fused Hessian `Q + rho G'G`; pass it in when already built
    /// to avoid recomputing it (`n` counted products).
    pub fn build(
        prob: &QpProblem,
        problem: ProblemConstants,
        case: LagrangianCase,
        rho: f64,
        fused: Option<&DenseMatrix>,
        counter: &MatvecCounter,
    ) -> Result<Self, SolverError> {
        match case {
            LagrangianCase::Ordinary if rho != 0.0 => {
                return Err(SolverError::InvalidConfig(format!(
                    "ordinary Lagrangian requires rho = 0, got {rho}"
                )));
            }
            LagrangianCase::Augmented if rho.is_nan() || rho <= 0.0 => {
                return Err(SolverError::InvalidConfig(format!(
                    "augmented Lagrangian requires rho > 0, got {rho}"
                )));
            }
            _ => {}
        }
        let l_dual = dual_lipschitz(problem.lam_min_q, problem.g_norm, rho)?;
        let l_inner = inner_lipschitz(problem.lam_max_q, problem.g_norm, rho);
        let sigma_raw = if rho > 0.0 && prob.p() > 0 && prob.all_rows_zero() {
            let (lo, _hi) = match fused {
                Some(h) => sym_eig_extremes(h, true, counter)?,
                None => {
                    let h = prob.fused_hessian(rho, counter);
                    sym_eig_extremes(&h, true, counter)?
                }
            };
            lo
        } else {
            problem.lam_min_q
        };
        let sigma_inner = (sigma_raw * (1.0 - DELTA_SAFE)).max(0.0);
        Ok(Self {
            case,
            rho,
            l_dual,
            l_inner,
            sigma_inner,
            problem,
        })
    }

    /// Threshold below which a strong-convexity estimate is treated as zero
    /// for method-selection purposes.
    pub fn tau_pd(&self) -> f64 {
        self.problem.tau_pd()
    }
}

/// Accuracy and iteration budget for one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub method: DualMethod,
    pub case: LagrangianCase,
    /// Target accuracy for the primal-dual pair.
    pub epsilon: f64,
    /// Accuracy to which every inner subproblem is solved.
    pub epsilon_in: f64,
    /// Scheduled number of outer iterations.
    pub k_out: u64,
    pub rho: f64,
    /// A-priori bound on inner iterations per outer iteration
    /// (absent when the box is unbounded).
    pub k_in_estimate: Option<u64>,
    /// A-priori bound on the total number of box projections
    /// (absent when the box is unbounded).
    pub k_total_estimate: Option<u64>,
    /// Human-readable caveats about the estimates above.
    pub notes: Vec<String>,
}

/// Computes the inner accuracy and outer budget that certify an
/// `epsilon`-accurate solve, plus a-priori inner/total work estimates.
///
/// The dual-gap bound after `k` outer iterations is
/// `4 L_d R_d^2/(k+1)^p + 2 (k+1)^(p-1) eps_in` with `p = 1` for [`DualMethod::Dgm`]
/// and `p = 2` for [`DualMethod::Dfgm`]; each term is forced below `epsilon/2`.
pub fn schedule(
    sc: &SolveConstants,
    method: DualMethod,
    epsilon: f64,
    r_d_estimate: f64,
    box_diameter: f64,
) -> Result<Schedule, SolverError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SolverError::InvalidConfig(format!(
            "target accuracy must be a positive finite number, got {epsilon}"
        )));
    }
    if !(r_d_estimate > 0.0 && r_d_estimate.is_finite()) {
        return Err(SolverError::InvalidConfig(format!(
            "dual radius estimate must be a positive finite number, got {r_d_estimate}"
        )));
    }
    let mut notes = Vec::new();
    if epsilon >= 1.0 {
        notes.push("target accuracy >= 1: the iteration bounds assume epsilon < 1".to_string());
    }
    let l_d = sc.l_dual;
    let (epsilon_in, k_out) = if l_d == 0.0 {
        notes.push(
            "constraints do not couple into the dual (||G|| = 0): a single outer iteration \
             with one inner solve suffices"
                .to_string(),
        );
        (epsilon / 4.0, 1)
    } else {
        match method {
            DualMethod::Dgm => {
                let eps_in = epsilon / 4.0;
                let k = (8.0 * l_d * r_d_estimate * r_d_estimate / epsilon)
                    .ceil()
                    .max(1.0);
                (eps_in, k as u64)
            }
            DualMethod::Dfgm => {
                let eps_in = epsilon * epsilon.sqrt() / (8.0 * r_d_estimate * (2.0 * l_d).sqrt());
                let k = (8.0 * l_d * r_d_estimate * r_d_estimate / epsilon)
                    .sqrt()
                    .ceil()
                    .max(1.0);
                (eps_in, k as u64)
            }
        }
    };

    let sigma = sc.sigma_inner;
    let l_l = sc.l_inner;
    let g = sc.problem.g_norm;
    let (k_in_estimate, k_total_estimate) = if box_diameter.is_finite() {
        let k_in = if sigma > 0.0 {
            (l_l / sigma).sqrt()
                * (l_l * box_diameter * box_diameter / epsilon_in)
                    .ln()
                    .max(0.0)
                + 1.0
        } else {
            (2.0 * l_l * box_diameter * box_diameter / epsilon_in).sqrt()
        };
        let k_total = if sigma > 0.0 {
            16.0 * g * r_d_estimate / (sigma * epsilon).sqrt()
                * (8.0 * g * box_diameter * r_d_estimate / epsilon)
                    .ln()
                    .max(0.0)
        } else {
            24.0 * g * box_diameter * r_d_estimate / epsilon
        };
        (
            Some(k_in.ceil().max(1.0) as u64),
            Some(k_total.floor().max(0.0) as u64),
        )
    } else if sigma > 0.0 {
        notes.push(
            "box is unbounded: a-priori inner and total work estimates are unavailable".to_string(),
        );
        (None, None)
    } else {
        return Err(SolverError::ScheduleUnavailable(
            "the inner objective is not strongly convex and the box is unbounded, so no \
             a-priori inner iteration bound exists; bound the variables or increase rho"
                .into(),
        ));
    };
    if k_total_estimate.is_some() && sc.problem.lam_max_q < g * g {
        notes.push(
            "total-work estimate is approximate: it assumes lam_max(Q) >= ||G||^2".to_string(),
        );
    }
    Ok(Schedule {
        method,
        case: sc.case,
        epsilon,
        epsilon_in,
        k_out,
        rho: sc.rho,
        k_in_estimate,
        k_total_estimate,
        notes,
    })
}

/// Renders a plain-text derivation of every constant and budget, suitable
/// for terminal output.
pub fn explain(sc: &SolveConstants, s: &Schedule, box_diameter: f64) -> String {
    let pc = &sc.problem;
    let mut out = String::new();
    let mut line = |t: String| {
        out.push_str(&t);
        out.push('\n');
    };
    line("solve constants".to_string());
    line(format!("  lam_min(Q) ~= {:.6e}", pc.lam_min_q));
    line(format!("  lam_max(Q) ~= {:.6e}", pc.lam_max_q));
    line(format!("  ||G||      ~= {:.6e}", pc.g_norm));
    line(format!(
        "  tau_pd      = {:.1e} * max(1, lam_max(Q)) = {:.6e}",
        TAU_PD_SCALE,
        pc.tau_pd()
    ));
    match sc.case {
        LagrangianCase::Ordinary => line(format!(
            "  case: ordinary Lagrangian (lam_min(Q) > tau_pd), rho = {}",
            sc.rho
        )),
        LagrangianCase::Augmented => line(format!(
            "  case: augmented Lagrangian (lam_min(Q) <= tau_pd or forced), rho = {:.6e}",
            sc.rho
        )),
    }
    line(format!(
        "  L_d  = ||G||^2 / (lam_min(Q) + rho ||G||^2) = {:.6e}",
        sc.l_dual
    ));
    line(format!(
        "  L_L  = lam_max(Q) + rho ||G||^2 = {:.6e}",
        sc.l_inner
    ));
    line(format!("  sigma_L = {:.6e}", sc.sigma_inner));
    line(format!("  box diameter D_U = {:.6e}", box_diameter));
    line("schedule".to_string());
    line(format!("  method = {}", s.method));
    line(format!("  epsilon = {:.6e}", s.epsilon));
    match s.method {
        DualMethod::Dgm => {
            line(format!("  eps_in = epsilon/4 = {:.6e}", s.epsilon_in));
            line(format!(
                "  k_out  = ceil(8 L_d R_d^2 / epsilon) = {}",
                s.k_out
            ));
        }
        DualMethod::Dfgm => {
            line(format!(
                "  eps_in = epsilon^(3/2) / (8 R_d sqrt(2 L_d)) = {:.6e}",
                s.epsilon_in
            ));
            line(format!(
                "  k_out  = ceil(sqrt(8 L_d R_d^2 / epsilon)) = {}",
                s.k_out
            ));
        }
    }
    match s.k_in_estimate {
        Some(k) => line(format!("  k_in (a-priori inner bound) = {k}")),
        None => line("  k_in (a-priori inner bound) = unavailable".to_string()),
    }
    match s.k_total_estimate {
        Some(k) => line(format!("  k_total (a-priori projection bound) = {k}")),
        None => line("  k_total (a-priori projection bound) = unavailable".to_string()),
    }
    for n in &s.notes {
        line(format!("  note: {n}"));
    }
    out
}
