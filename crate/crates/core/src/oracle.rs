//! Brute-force reference solver for small box-constrained QPs.
//!
//! Enumerates every assignment of box faces (each coordinate free, at its
//! lower bound, or at its upper bound) and of inequality-row activity,
//! solves the resulting equality-constrained stationarity system by dense
//! elimination with partial pivoting, filters candidates by primal
//! feasibility and multiplier signs, and returns the best survivor.
//! Exponential in the problem size and therefore capped; it exists as an
//! independent check on the iterative solver, so it shares no algorithmic
//! machinery with it.

use crate::linalg::{norm, MatvecCounter};
use crate::model::{ConeKind, QpProblem};
use crate::SolverError;

/// Largest variable count the enumeration accepts.
pub const MAX_ORACLE_N: usize = 12;
/// Largest constraint-row count the enumeration accepts.
pub const MAX_ORACLE_P: usize = 10;

/// Absolute-ish feasibility tolerance (scaled by the local data magnitude).
const FEAS_TOL: f64 = 1e-9;
/// Multiplier sign tolerance.
const SIGN_TOL: f64 = 1e-10;
/// Relative pivot threshold below which a stationarity system is singular.
const PIVOT_TOL: f64 = 1e-12;
/// Margin used by the well-posedness filter for strict complementarity.
pub const UNIQUENESS_MARGIN: f64 = 1e-6;

/// Status of one coordinate in an active-set assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordState {
    Free,
    AtLb,
    AtUb,
}

/// The optimal active set: one state per coordinate, one activity flag per
/// constraint row (equality rows are always active).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    pub coords: Vec<CoordState>,
    pub rows: Vec<bool>,
}

/// Exact solution of a small instance, with multipliers.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub u_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    /// Signed bound multiplier per coordinate: stationarity reads
    /// `Qu + q + G'lambda + box_multipliers = 0`, so entries are >= 0 on
    /// active upper bounds, <= 0 on active lower bounds, and 0 elsewhere.
    pub box_multipliers: Vec<f64>,
    pub f_star: f64,
    pub active_set: ActiveSet,
    /// Norm of the stationarity residual at the returned point.
    pub kkt_residual: f64,
    /// Assignments skipped because their stationarity system was singular.
    pub singular_assignments: u64,
}

struct Candidate {
    u: Vec<f64>,
    lambda: Vec<f64>,
    box_mult: Vec<f64>,
    f: f64,
    u_norm: f64,
    kkt_residual: f64,
    coords: Vec<CoordState>,
    rows: Vec<bool>,
}

/// `true` when `new` wins over `old`: smaller objective, then smaller norm,
/// then the earlier enumeration order (i.e. `old` is kept on a full tie).
fn candidate_improves(new: &Candidate, old: &Candidate) -> bool {
    let tie = 1e-9 * (1.0 + old.f.abs().min(new.f.abs()));
    if new.f < old.f - tie {
        return true;
    }
    if new.f > old.f + tie {
        return false;
    }
    new.u_norm < old.u_norm - 1e-12
}

/// Solves the `m x m` system stored row-major in `a` (right-hand side `b`)
/// by Gaussian elimination with partial pivoting. `None` when some pivot
/// falls below the singularity threshold relative to the largest entry.
fn solve_linear(a: &mut [f64], b: &mut [f64], m: usize) -> Option<Vec<f64>> {
    if m == 0 {
        return Some(Vec::new());
    }
    let scale = a[..m * m]
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-300);
    let tol = PIVOT_TOL * scale;
    for col in 0..m {
        let mut piv = col;
        let mut pmax = a[col * m + col].abs();
        for r in col + 1..m {
            let v = a[r * m + col].abs();
            if v > pmax {
                pmax = v;
                piv = r;
            }
        }
        if pmax <= tol {
            return None;
        }
        if piv != col {
            for c in 0..m {
                a.swap(piv * m + c, col * m + c);
            }
            b.swap(piv, col);
        }
        let d = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / d;
            if f != 0.0 {
                for c in col..m {
                    a[r * m + c] -= f * a[col * m + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = b[i];
        for j in i + 1..m {
            acc -= a[i * m + j] * x[j];
        }
        x[i] = acc / a[i * m + i];
    }
    Some(x)
}

struct Workspace {
    a: Vec<f64>,
    b: Vec<f64>,
    free: Vec<usize>,
    act: Vec<usize>,
}

/// Solves one active-set assignment; `Err(())` marks a singular system.
#[allow(clippy::result_unit_err)]
fn evaluate_assignment(
    prob: &QpProblem,
    coords: &[CoordState],
    rows: &[bool],
    ws: &mut Workspace,
    scratch: &MatvecCounter,
) -> Result<Option<Candidate>, ()> {
    let n = prob.n();
    let p = prob.p();
    let q = prob.q_mat();
    let g = prob.g_mat();
    let lb = prob.bounds().lb();
    let ub = prob.bounds().ub();

    ws.free.clear();
    ws.act.clear();
    for (i, st) in coords.iter().enumerate() {
        if *st == CoordState::Free {
            ws.free.push(i);
        }
    }
    for (j, active) in rows.iter().enumerate() {
        if *active {
            ws.act.push(j);
        }
    }
    let nf = ws.free.len();
    let na = ws.act.len();
    let m = nf + na;

    let mut u = vec![0.0; n];
    for (i, st) in coords.iter().enumerate() {
        u[i] = match st {
            CoordState::Free => 0.0,
            CoordState::AtLb => lb[i],
            CoordState::AtUb => ub[i],
        };
    }

    // Stationarity on free coordinates, then the active constraint rows.
    ws.a[..m * m].fill(0.0);
    for (ri, &fi) in ws.free.iter().enumerate() {
        for (ci, &fj) in ws.free.iter().enumerate() {
            ws.a[ri * m + ci] = q.at(fi, fj);
        }
        for (ci, &aj) in ws.act.iter().enumerate() {
            ws.a[ri * m + nf + ci] = g.at(aj, fi);
        }
        let mut rhs = -prob.q_vec()[fi];
        for (i, st) in coords.iter().enumerate() {
            if *st != CoordState::Free {
                rhs -= q.at(fi, i) * u[i];
            }
        }
        ws.b[ri] = rhs;
    }
    for (ri, &aj) in ws.act.iter().enumerate() {
        for (ci, &fj) in ws.free.iter().enumerate() {
            ws.a[(nf + ri) * m + ci] = g.at(aj, fj);
        }
        let mut rhs = -prob.g_vec()[aj];
        for (i, st) in coords.iter().enumerate() {
            if *st != CoordState::Free {
                rhs -= g.at(aj, i) * u[i];
            }
        }
        ws.b[nf + ri] = rhs;
    }

    let x = solve_linear(&mut ws.a, &mut ws.b, m).ok_or(())?;

    for (k, &fi) in ws.free.iter().enumerate() {
        u[fi] = x[k];
    }
    let mut lambda = vec![0.0; p];
    for (k, &aj) in ws.act.iter().enumerate() {
        lambda[aj] = x[nf + k];
    }

    // Primal feasibility of the free coordinates.
    for &fi in &ws.free {
        let tol = FEAS_TOL * (1.0 + lb[fi].abs().min(ub[fi].abs()).min(1e12));
        if u[fi] < lb[fi] - tol || u[fi] > ub[fi] + tol {
            return Ok(None);
        }
    }
    // Primal feasibility of inactive inequality rows.
    let residual = prob.residual(&u, scratch);
    for (j, (&active, cone)) in rows.iter().zip(prob.cones()).enumerate() {
        if !active && *cone == ConeKind::NonPos {
            let tol = FEAS_TOL * (1.0 + prob.g_vec()[j].abs());
            if residual[j] > tol {
                return Ok(None);
            }
        }
    }
    // Sign of the multipliers on active inequality rows.
    for &aj in &ws.act {
        if prob.cones()[aj] == ConeKind::NonPos && lambda[aj] < -SIGN_TOL {
            return Ok(None);
        }
    }

    // Bound multipliers from the stationarity residual.
    let mut stat = prob.q_mat().matvec(&u, scratch);
    for (si, &qi) in stat.iter_mut().zip(prob.q_vec()) {
        *si += qi;
    }
    if p > 0 {
        let gt = prob.g_mat().matvec_transpose(&lambda, scratch);
        for (si, &ti) in stat.iter_mut().zip(&gt) {
            *si += ti;
        }
    }
    let mut box_mult = vec![0.0; n];
    let mut kkt_sq = 0.0;
    for (i, st) in coords.iter().enumerate() {
        match st {
            CoordState::Free => kkt_sq += stat[i] * stat[i],
            CoordState::AtUb => {
                // stat + box_mult = 0 with box_mult >= 0 at an upper bound.
                if stat[i] > SIGN_TOL {
                    return Ok(None);
                }
                box_mult[i] = -stat[i];
            }
            CoordState::AtLb => {
                if stat[i] < -SIGN_TOL {
                    return Ok(None);
                }
                box_mult[i] = -stat[i];
            }
        }
    }

    let f = prob.objective(&u, scratch);
    let u_norm = norm(&u);
    Ok(Some(Candidate {
        u,
        lambda,
        box_mult,
        f,
        u_norm,
        kkt_residual: kkt_sq.sqrt(),
        coords: coords.to_vec(),
        rows: rows.to_vec(),
    }))
}

/// Solves a small instance exactly by enumerating active sets.
///
/// Deterministic: assignments are scanned in a fixed odometer order
/// (coordinate states cycle free -> lower -> upper with coordinate 0
/// fastest, then inequality activity masks in binary order), and the
/// best candidate is selected by objective, then norm, then scan order.
pub fn oracle_solve(prob: &QpProblem) -> Result<OracleSolution, SolverError> {
    let n = prob.n();
    let p = prob.p();
    if n > MAX_ORACLE_N || p > MAX_ORACLE_P {
        return Err(SolverError::OracleLimit(format!(
            "instance has n = {n}, p = {p}; the enumeration accepts n <= {MAX_ORACLE_N}, \
             p <= {MAX_ORACLE_P}"
        )));
    }
    if n == 0 {
        return Err(SolverError::InvalidProblem(
            "reference solver needs at least one variable".into(),
        ));
    }
    let lb = prob.bounds().lb();
    let ub = prob.bounds().ub();

    // Admissible states per coordinate (infinite bounds cannot be active;
    // a degenerate lb = ub coordinate has one boundary state, not two).
    let state_menu: Vec<Vec<CoordState>> = (0..n)
        .map(|i| {
            let mut s = vec![CoordState::Free];
            if lb[i].is_finite() {
                s.push(CoordState::AtLb);
            }
            if ub[i].is_finite() && ub[i] > lb[i] {
                s.push(CoordState::AtUb);
            }
            s
        })
        .collect();
    let nonpos: Vec<usize> = prob
        .cones()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == ConeKind::NonPos)
        .map(|(j, _)| j)
        .collect();

    let scratch = MatvecCounter::new();
    let mut ws = Workspace {
        a: vec![0.0; (n + p) * (n + p)],
        b: vec![0.0; n + p],
        free: Vec::with_capacity(n),
        act: Vec::with_capacity(p),
    };
    let mut best: Option<Candidate> = None;
    let mut singular = 0u64;

    let mut digits = vec![0usize; n];
    let mut coords = vec![CoordState::Free; n];
    'assignments: loop {
        for (i, &d) in digits.iter().enumerate() {
            coords[i] = state_menu[i][d];
        }
        let base_rows: Vec<bool> = prob.cones().iter().map(|c| *c == ConeKind::Zero).collect();
        for mask in 0u64..(1u64 << nonpos.len()) {
            let mut rows = base_rows.clone();
            for (bit, &j) in nonpos.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    rows[j] = true;
                }
            }
            match evaluate_assignment(prob, &coords, &rows, &mut ws, &scratch) {
                Err(()) => singular += 1,
                Ok(None) => {}
                Ok(Some(cand)) => {
                    if best.as_ref().is_none_or(|b| candidate_improves(&cand, b)) {
                        best = Some(cand);
                    }
                }
            }
        }
        // Odometer increment with coordinate 0 fastest.
        for i in 0..=n {
            if i == n {
                break 'assignments;
            }
            digits[i] += 1;
            if digits[i] < state_menu[i].len() {
                break;
            }
            digits[i] = 0;
        }
    }

    let best = best.ok_or(SolverError::OracleInfeasible)?;
    let mut u_star = best.u;
    prob.bounds().project_in_place(&mut u_star);
    let f_star = prob.objective(&u_star, &scratch);
    Ok(OracleSolution {
        u_star,
        lambda_star: best.lambda,
        box_multipliers: best.box_mult,
        f_star,
        active_set: ActiveSet {
            coords: best.coords,
            rows: best.rows,
        },
        kkt_residual: best.kkt_residual,
        singular_assignments: singular,
    })
}

/// Distance from a reference multiplier to the returned optimal one — an
/// upper bound on the dual-radius constant, exact when the optimal
/// multiplier is unique.
pub fn oracle_dual_radius(sol: &OracleSolution, lambda0: &[f64]) -> f64 {
    assert_eq!(
        lambda0.len(),
        sol.lambda_star.len(),
        "reference multiplier has the wrong length"
    );
    sol.lambda_star
        .iter()
        .zip(lambda0)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Well-posedness filter: the optimal multiplier is unique and numerically
/// stable. Checks linear independence of the active constraint gradients
/// (which makes the multiplier unique) plus a strict-complementarity margin
/// (which keeps the active set stable under perturbation).
pub fn multiplier_is_unique(prob: &QpProblem, sol: &OracleSolution, margin: f64) -> bool {
    let n = prob.n();
    let lb = prob.bounds().lb();
    let ub = prob.bounds().ub();
    let scratch = MatvecCounter::new();
    let residual = prob.residual(&sol.u_star, &scratch);

    // Strict complementarity margins.
    for (i, st) in sol.active_set.coords.iter().enumerate() {
        match st {
            CoordState::Free => {
                if sol.u_star[i] < lb[i] + margin || sol.u_star[i] > ub[i] - margin {
                    return false;
                }
            }
            _ => {
                if sol.box_multipliers[i].abs() < margin {
                    return false;
                }
            }
        }
    }
    for (j, active) in sol.active_set.rows.iter().enumerate() {
        if prob.cones()[j] == ConeKind::NonPos {
            if *active {
                if sol.lambda_star[j] < margin {
                    return false;
                }
            } else if residual[j] > -margin {
                return false;
            }
        }
    }

    // Linear independence of active gradients: columns are G_j' for active
    // rows and unit vectors for fixed coordinates; full column rank makes
    // the multiplier unique.
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (j, active) in sol.active_set.rows.iter().enumerate() {
        if *active {
            cols.push(prob.g_mat().row(j).to_vec());
        }
    }
    for (i, st) in sol.active_set.coords.iter().enumerate() {
        if *st != CoordState::Free {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            cols.push(e);
        }
    }
    let m = cols.len();
    if m == 0 {
        return true;
    }
    if m > n {
        return false;
    }
    // Rank of the n x m column matrix by elimination.
    let mut a = vec![0.0; n * m];
    for (c, col) in cols.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            a[r * m + c] = v;
        }
    }
    let scale = a
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-300);
    let tol = 1e-10 * scale;
    let mut rank = 0usize;
    let mut row = 0usize;
    for col in 0..m {
        let mut piv = row;
        let mut pmax = 0.0;
        for r in row..n {
            let v = a[r * m + col].abs();
            if v > pmax {
                pmax = v;
                piv = r;
            }
        }
        if pmax <= tol {
            return false; // dependent column: multiplier not unique
        }
        for c in 0..m {
            a.swap(piv * m + c, row * m + c);
        }
        let d = a[row * m + col];
        for r in row + 1..n {
            let f = a[r * m + col] / d;
            if f != 0.0 {
                for c in col..m {
                    a[r * m + c] -= f * a[row * m + c];
                }
            }
        }
        rank += 1;
        row += 1;
        if row == n {
            break;
        }
    }
    rank == m
}

/// Exact minimizer and value of the (augmented) Lagrangian at a fixed
/// multiplier, for small instances.
#[derive(Debug, Clone)]
pub struct DualEval {
    /// Exact inner minimizer `u(lambda)`.
    pub u_star: Vec<f64>,
    /// Exact dual value `d_rho(lambda)`.
    pub value: f64,
}

/// Evaluates the dual function exactly by enumeration.
///
/// The inner problem is itself a box QP: for `rho = 0` its Hessian is `Q`
/// and its linear term is `q + G'lambda`; for `rho > 0` with all-equality
/// rows the penalty is a smooth quadratic, giving Hessian `Q + rho G'G`,
/// linear term `q + G'lambda + rho G'g`, and constant shift
/// `(rho/2)||g||^2 + <lambda, g>`. Inequality rows under `rho > 0` make the
/// inner objective piecewise quadratic, which the enumeration does not
/// cover.
pub fn oracle_dual_eval(
    prob: &QpProblem,
    rho: f64,
    lambda: &[f64],
) -> Result<DualEval, SolverError> {
    assert_eq!(lambda.len(), prob.p(), "multiplier has the wrong length");
    if rho < 0.0 {
        return Err(SolverError::InvalidProblem(
            "penalty weight must be nonnegative".into(),
        ));
    }
    if rho > 0.0 && !prob.all_rows_zero() {
        return Err(SolverError::OracleLimit(
            "exact dual evaluation with a positive penalty needs all-equality rows".into(),
        ));
    }
    let scratch = MatvecCounter::new();
    let n = prob.n();
    let lam_g: f64 = lambda.iter().zip(prob.g_vec()).map(|(&a, &b)| a * b).sum();
    let (hessian, shift) = if rho == 0.0 {
        (prob.q_mat().clone(), lam_g)
    } else {
        let g_norm_sq: f64 = prob.g_vec().iter().map(|v| v * v).sum();
        (
            prob.fused_hessian(rho, &scratch),
            0.5 * rho * g_norm_sq + lam_g,
        )
    };
    let mut linear = prob.g_mat().matvec_transpose(lambda, &scratch);
    if rho > 0.0 {
        let pg = prob.g_mat().matvec_transpose(prob.g_vec(), &scratch);
        for (l, v) in linear.iter_mut().zip(pg) {
            *l += rho * v;
        }
    }
    for (l, &qi) in linear.iter_mut().zip(prob.q_vec()) {
        *l += qi;
    }
    let inner = QpProblem::new(
        hessian,
        linear,
        crate::linalg::DenseMatrix::zeros(0, n),
        Vec::new(),
        Vec::new(),
        prob.bounds().clone(),
    )?;
    let sol = oracle_solve(&inner)?;
    Ok(DualEval {
        u_star: sol.u_star,
        value: sol.f_star + shift,
    })
}
