//! Dual first-order methods for convex quadratic programs
//!
//! Solves problems of the form
//!
//! ```text
//!     min  0.5 u'Qu + q'u
//!     s.t. Gu + g in K,   u in [lb, ub]
//! ```
//!
//! where `Q` is symmetric positive semidefinite and `K` is a product of
//! per-row cones, each either `{0}` (equality) or `(-inf, 0]` (inequality).
//! The box constraint is kept in the inner problem; the cone constraints are
//! dualized, either through the ordinary Lagrangian (`Q` positive definite)
//! or an augmented Lagrangian with penalty `rho > 0`.
//!
//! The outer dual loop runs a projected (fast) gradient ascent on the dual
//! function whose gradients are computed inexactly by an inner first-order
//! method over the box. Accuracy budgets for the inner solves and iteration
//! budgets for both loops follow closed-form schedules derived from the
//! worst-case rates, so that an outer target accuracy `epsilon` is met by
//! construction.

pub mod dual;
pub mod generate;
pub mod inner;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod tuning;

pub use dual::{
    recover_last, solve, trace_csv, DualCone, DualState, EpsilonInPolicy, Recovery, RhoPolicy,
    SolveReport, SolveStatus, SolverConfig, StoppingRule, TraceRow,
};
pub use generate::{
    generate_instance, generate_random_qp, instance_seed, seeded_instance, BenchFamily, GeneratedQp,
};
pub use linalg::{DenseMatrix, MatvecCounter};
pub use model::{BoxSet, ConeKind, QpProblem, RawQp};
pub use tuning::{DualMethod, LagrangianCase, Schedule};

/// Errors surfaced by problem construction, tuning, and the solver.
#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    /// Structurally invalid input: dimension mismatch, NaN entries,
    /// non-symmetric or indefinite `Q`, and similar.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// Contradictory bounds (`lb > ub` on a variable or a constraint row).
    #[error("infeasible bound specification: {0}")]
    InfeasibleBounds(String),

    /// Power iteration did not settle within its iteration cap.
    #[error("eigenvalue estimate did not converge (best estimate {best:.6e})")]
    EigenNonConvergence { best: f64 },

    /// A configuration value is outside its admissible range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A schedule or stopping policy needs data the problem does not provide
    /// (for example a finite box diameter).
    #[error("schedule unavailable: {0}")]
    ScheduleUnavailable(String),

    /// Problem file could not be parsed.
    #[error("problem file: {0}")]
    ParseError(String),

    /// Problem exceeds the enumeration limits of the reference solver.
    #[error("reference solver limit exceeded: {0}")]
    OracleLimit(String),

    /// The reference solver found no feasible KKT candidate.
    #[error("reference solver found no feasible candidate")]
    OracleInfeasible,
}
