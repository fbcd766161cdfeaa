//! Problem model: cone rows, box set, ingestion of two-sided constraints,
//! and (augmented) Lagrangian evaluation.
//!
//! Canonical form:
//!
//! ```text
//!     min  F(u) = 0.5 u'Qu + q'u
//!     s.t. Gu + g in K,   u in [lb, ub]
//! ```
//!
//! `K` is a product of per-row cones, `{0}` for equality rows and
//! `(-inf, 0]` for inequality rows. User-facing two-sided constraints
//! `lbA <= A u + a <= ubA` are normalized into this form by [`RawQp::ingest`].

use crate::linalg::{dot, DenseMatrix, MatvecCounter};
use crate::SolverError;

/// Cone of one constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// Row enforces `G_i u + g_i = 0`.
    Zero,
    /// Row enforces `G_i u + g_i <= 0`.
    NonPos,
}

/// Box `[lb, ub]`, entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl BoxSet {
    pub fn new(lb: Vec<f64>, ub: Vec<f64>) -> Result<Self, SolverError> {
        if lb.len() != ub.len() {
            return Err(SolverError::InvalidProblem(format!(
                "box bounds have mismatched lengths {} and {}",
                lb.len(),
                ub.len()
            )));
        }
        for (i, (&l, &u)) in lb.iter().zip(&ub).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(SolverError::InvalidProblem(format!("box bound {i} is NaN")));
            }
            if l > u {
                return Err(SolverError::InfeasibleBounds(format!(
                    "variable {i}: lb {l} > ub {u}"
                )));
            }
        }
        Ok(Self { lb, ub })
    }

    /// Box with all components unbounded.
    pub fn free(dim: usize) -> Self {
        Self {
            lb: vec![f64::NEG_INFINITY; dim],
            ub: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn lb(&self) -> &[f64] {
        &self.lb
    }

    pub fn ub(&self) -> &[f64] {
        &self.ub
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for ((xi, &l), &u) in x.iter_mut().zip(&self.lb).zip(&self.ub) {
            *xi = xi.max(l).min(u);
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(&self.lb)
            .zip(&self.ub)
            .all(|((&xi, &l), &u)| xi >= l - tol && xi <= u + tol)
    }

    /// Euclidean diameter `||ub - lb||`; infinite if any side is unbounded.
    pub fn diameter(&self) -> f64 {
        let mut acc = 0.0;
        for (&l, &u) in self.lb.iter().zip(&self.ub) {
            let d = u - l;
            if !d.is_finite() {
                return f64::INFINITY;
            }
            acc += d * d;
        }
        acc.sqrt()
    }
}

/// Problem in canonical form. Immutable after construction; shareable across
/// concurrent solver instances.
#[derive(Debug, Clone)]
pub struct QpProblem {
    q_mat: DenseMatrix,
    q_vec: Vec<f64>,
    g_mat: DenseMatrix,
    g_vec: Vec<f64>,
    cones: Vec<ConeKind>,
    bounds: BoxSet,
}

impl QpProblem {
    pub fn new(
        q_mat: DenseMatrix,
        q_vec: Vec<f64>,
        g_mat: DenseMatrix,
        g_vec: Vec<f64>,
        cones: Vec<ConeKind>,
        bounds: BoxSet,
    ) -> Result<Self, SolverError> {
        let n = q_vec.len();
        let p = g_vec.len();
        if q_mat.rows() != n || q_mat.cols() != n {
            return Err(SolverError::InvalidProblem(format!(
                "Q is {}x{}, expected {n}x{n}",
                q_mat.rows(),
                q_mat.cols()
            )));
        }
        if g_mat.rows() != p || g_mat.cols() != n {
            return Err(SolverError::InvalidProblem(format!(
                "G is {}x{}, expected {p}x{n}",
                g_mat.rows(),
                g_mat.cols()
            )));
        }
        if cones.len() != p {
            return Err(SolverError::InvalidProblem(format!(
                "{} cone tags for {p} rows",
                cones.len()
            )));
        }
        if bounds.dim() != n {
            return Err(SolverError::InvalidProblem(format!(
                "box dimension {} for {n} variables",
                bounds.dim()
            )));
        }
        if q_mat.has_nan() || g_mat.has_nan() {
            return Err(SolverError::InvalidProblem("matrix entry is NaN".into()));
        }
        if q_vec.iter().chain(&g_vec).any(|v| v.is_nan()) {
            return Err(SolverError::InvalidProblem("vector entry is NaN".into()));
        }
        if n > 0 && q_mat.relative_asymmetry() > 1e-12 {
            return Err(SolverError::InvalidProblem(
                "Q is not symmetric within 1e-12 relative tolerance".into(),
            ));
        }
        Ok(Self {
            q_mat,
            q_vec,
            g_mat,
            g_vec,
            cones,
            bounds,
        })
    }

    pub fn n(&self) -> usize {
        self.q_vec.len()
    }

    pub fn p(&self) -> usize {
        self.g_vec.len()
    }

    pub fn q_mat(&self) -> &DenseMatrix {
        &self.q_mat
    }

    pub fn q_vec(&self) -> &[f64] {
        &self.q_vec
    }

    pub fn g_mat(&self) -> &DenseMatrix {
        &self.g_mat
    }

    pub fn g_vec(&self) -> &[f64] {
        &self.g_vec
    }

    pub fn cones(&self) -> &[ConeKind] {
        &self.cones
    }

    pub fn bounds(&self) -> &BoxSet {
        &self.bounds
    }

    pub fn all_rows_zero(&self) -> bool {
        self.cones.iter().all(|c| *c == ConeKind::Zero)
    }

    /// `F(u)`; one counted product.
    pub fn objective(&self, u: &[f64], counter: &MatvecCounter) -> f64 {
        let qu = self.q_mat.matvec(u, counter);
        self.objective_from_qu(u, &qu)
    }

    /// `F(u)` reusing an already computed `Qu`.
    pub fn objective_from_qu(&self, u: &[f64], qu: &[f64]) -> f64 {
        0.5 * dot(u, qu) + dot(&self.q_vec, u)
    }

    /// Constraint residual `Gu + g`; one counted product.
    pub fn residual(&self, u: &[f64], counter: &MatvecCounter) -> Vec<f64> {
        let mut r = self.g_mat.matvec(u, counter);
        for (ri, &gi) in r.iter_mut().zip(&self.g_vec) {
            *ri += gi;
        }
        r
    }

    /// `Q + rho * G'G`, the Hessian of the augmented Lagrangian when every
    /// row is an equality. Counted as `n` transpose products (one per column
    /// of the Gram accumulation).
    pub fn fused_hessian(&self, rho: f64, counter: &MatvecCounter) -> DenseMatrix {
        let n = self.n();
        let mut h = self.q_mat.clone();
        if self.p() > 0 && rho != 0.0 {
            counter.record_many(n as u64);
            for k in 0..self.p() {
                let row = self.g_mat.row(k);
                for (i, &row_i) in row.iter().enumerate() {
                    let ri = rho * row_i;
                    if ri == 0.0 {
                        continue;
                    }
                    for (j, &row_j) in row.iter().enumerate() {
                        h.set(i, j, h.at(i, j) + ri * row_j);
                    }
                }
            }
        }
        h
    }
}

/// Projection onto the product cone, row-wise.
pub fn project_cone(v: &[f64], cones: &[ConeKind]) -> Vec<f64> {
    debug_assert_eq!(v.len(), cones.len());
    v.iter()
        .zip(cones)
        .map(|(&vi, c)| match c {
            ConeKind::Zero => 0.0,
            ConeKind::NonPos => vi.min(0.0),
        })
        .collect()
}

/// Distance `||v - [v]_K||` to the product cone.
pub fn dist_cone(v: &[f64], cones: &[ConeKind]) -> f64 {
    debug_assert_eq!(v.len(), cones.len());
    let mut acc = 0.0;
    for (&vi, c) in v.iter().zip(cones) {
        let excess = match c {
            ConeKind::Zero => vi,
            ConeKind::NonPos => vi.max(0.0),
        };
        acc += excess * excess;
    }
    acc.sqrt()
}

/// Optimal slack of the augmented Lagrangian given the residual `Gu + g`.
/// `[Gu + g + lambda/rho]_K` for `rho > 0`, the zero vector for `rho = 0`.
pub fn slack_from_residual(
    residual: &[f64],
    lambda: &[f64],
    cones: &[ConeKind],
    rho: f64,
) -> Vec<f64> {
    debug_assert_eq!(residual.len(), lambda.len());
    if rho == 0.0 {
        return vec![0.0; residual.len()];
    }
    let shifted: Vec<f64> = residual
        .iter()
        .zip(lambda)
        .map(|(&ri, &li)| ri + li / rho)
        .collect();
    project_cone(&shifted, cones)
}

/// Optimal slack at `(u, lambda)`; one counted product for the residual.
pub fn slack(
    u: &[f64],
    lambda: &[f64],
    prob: &QpProblem,
    rho: f64,
    counter: &MatvecCounter,
) -> Vec<f64> {
    let r = prob.residual(u, counter);
    slack_from_residual(&r, lambda, prob.cones(), rho)
}

/// Penalty and multiplier terms of the Lagrangian, excluding `F(u)`.
/// For `rho > 0` this is `(rho/2) dist_K(Gu+g+lambda/rho)^2 - ||lambda||^2/(2 rho)`;
/// for `rho = 0` it is `<lambda, Gu+g>`.
pub fn lagrangian_penalty(residual: &[f64], lambda: &[f64], cones: &[ConeKind], rho: f64) -> f64 {
    debug_assert_eq!(residual.len(), lambda.len());
    if rho == 0.0 {
        return dot(lambda, residual);
    }
    let shifted: Vec<f64> = residual
        .iter()
        .zip(lambda)
        .map(|(&ri, &li)| ri + li / rho)
        .collect();
    let d = dist_cone(&shifted, cones);
    0.5 * rho * d * d - dot(lambda, lambda) / (2.0 * rho)
}

/// Lagrangian value `L_rho(u, lambda)`; two counted products.
pub fn lagrangian_value(
    u: &[f64],
    lambda: &[f64],
    prob: &QpProblem,
    rho: f64,
    counter: &MatvecCounter,
) -> f64 {
    let f = prob.objective(u, counter);
    let r = prob.residual(u, counter);
    f + lagrangian_penalty(&r, lambda, prob.cones(), rho)
}

/// Lagrangian gradient `Qu + q + G'(lambda + rho*r)` with
/// `r = Gu + g - slack(u, lambda)`; three counted products for `rho > 0`,
/// two for `rho = 0`.
pub fn lagrangian_grad(
    u: &[f64],
    lambda: &[f64],
    prob: &QpProblem,
    rho: f64,
    counter: &MatvecCounter,
) -> Vec<f64> {
    let mut grad = prob.q_mat().matvec(u, counter);
    for (gi, &qi) in grad.iter_mut().zip(prob.q_vec()) {
        *gi += qi;
    }
    if prob.p() == 0 {
        return grad;
    }
    let w = if rho == 0.0 {
        lambda.to_vec()
    } else {
        let r = prob.residual(u, counter);
        let s = slack_from_residual(&r, lambda, prob.cones(), rho);
        r.iter()
            .zip(&s)
            .zip(lambda)
            .map(|((&ri, &si), &li)| li + rho * (ri - si))
            .collect()
    };
    let gt_w = prob.g_mat().matvec_transpose(&w, counter);
    for (gi, &ti) in grad.iter_mut().zip(&gt_w) {
        *gi += ti;
    }
    grad
}

/// Raw two-sided constraint data `lbA <= A u + a <= ubA` before normalization.
#[derive(Debug, Clone)]
pub struct RawQp {
    pub q_mat: DenseMatrix,
    pub q_vec: Vec<f64>,
    pub a_mat: DenseMatrix,
    pub a_vec: Vec<f64>,
    pub lb_a: Vec<f64>,
    pub ub_a: Vec<f64>,
    pub bounds: BoxSet,
}

impl RawQp {
    pub fn p_raw(&self) -> usize {
        self.a_vec.len()
    }

    pub fn n(&self) -> usize {
        self.q_vec.len()
    }

    /// Normalizes two-sided rows into canonical cone rows:
    /// `lbA_i = ubA_i` yields one Zero row; a finite upper side yields
    /// `A_i u + (a_i - ubA_i) <= 0`; a finite lower side yields
    /// `-A_i u + (lbA_i - a_i) <= 0`; fully unbounded rows are dropped.
    pub fn ingest(&self) -> Result<QpProblem, SolverError> {
        let n = self.n();
        let p_raw = self.p_raw();
        if self.a_mat.rows() != p_raw || self.a_mat.cols() != n {
            return Err(SolverError::InvalidProblem(format!(
                "raw constraint matrix is {}x{}, expected {p_raw}x{n}",
                self.a_mat.rows(),
                self.a_mat.cols()
            )));
        }
        if self.lb_a.len() != p_raw || self.ub_a.len() != p_raw {
            return Err(SolverError::InvalidProblem(
                "raw constraint bounds have inconsistent lengths".into(),
            ));
        }
        if self
            .lb_a
            .iter()
            .chain(&self.ub_a)
            .chain(&self.a_vec)
            .any(|v| v.is_nan())
        {
            return Err(SolverError::InvalidProblem(
                "raw constraint data contains NaN".into(),
            ));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut g = Vec::new();
        let mut cones = Vec::new();
        for i in 0..p_raw {
            let (lo, hi) = (self.lb_a[i], self.ub_a[i]);
            if lo > hi {
                return Err(SolverError::InfeasibleBounds(format!(
                    "constraint row {i}: lower bound {lo} > upper bound {hi}"
                )));
            }
            if lo == hi {
                rows.push(self.a_mat.row(i).to_vec());
                g.push(self.a_vec[i] - hi);
                cones.push(ConeKind::Zero);
                continue;
            }
            if hi.is_finite() {
                rows.push(self.a_mat.row(i).to_vec());
                g.push(self.a_vec[i] - hi);
                cones.push(ConeKind::NonPos);
            }
            if lo.is_finite() {
                rows.push(self.a_mat.row(i).iter().map(|v| -v).collect());
                g.push(lo - self.a_vec[i]);
                cones.push(ConeKind::NonPos);
            }
        }
        let p = g.len();
        let mut data = Vec::with_capacity(p * n);
        for r in &rows {
            data.extend_from_slice(r);
        }
        QpProblem::new(
            self.q_mat.clone(),
            self.q_vec.clone(),
            DenseMatrix::new(p, n, data),
            g,
            cones,
            self.bounds.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn raw_single_row(lo: f64, hi: f64) -> RawQp {
        RawQp {
            q_mat: DenseMatrix::identity(2),
            q_vec: vec![0.0, 0.0],
            a_mat: DenseMatrix::new(1, 2, vec![1.0, 1.0]),
            a_vec: vec![0.0],
            lb_a: vec![lo],
            ub_a: vec![hi],
            bounds: BoxSet::free(2),
        }
    }

    #[test]
    fn ingest_equality_row() {
        let p = raw_single_row(0.0, 0.0).ingest().unwrap();
        assert_eq!(p.p(), 1);
        assert_eq!(p.cones(), &[ConeKind::Zero]);
        assert_eq!(p.g_vec(), &[0.0]);
    }

    #[test]
    fn ingest_one_sided_row() {
        let p = raw_single_row(f64::NEG_INFINITY, 1.0).ingest().unwrap();
        assert_eq!(p.p(), 1);
        assert_eq!(p.cones(), &[ConeKind::NonPos]);
        assert_eq!(p.g_vec(), &[-1.0]);
        assert_eq!(p.g_mat().row(0), &[1.0, 1.0]);
    }

    #[test]
    fn ingest_two_sided_row_splits() {
        let p = raw_single_row(-1.0, 1.0).ingest().unwrap();
        assert_eq!(p.p(), 2);
        assert_eq!(p.cones(), &[ConeKind::NonPos, ConeKind::NonPos]);
        assert_eq!(p.g_vec(), &[-1.0, -1.0]);
        assert_eq!(p.g_mat().row(0), &[1.0, 1.0]);
        assert_eq!(p.g_mat().row(1), &[-1.0, -1.0]);
        // Sample points: u=(0.3,0.3) satisfies the interval, u=(1,1) violates
        // the upper side, u=(-1,-1) violates the lower side.
        let c = MatvecCounter::new();
        for (u, feasible) in [
            (vec![0.3, 0.3], true),
            (vec![1.0, 1.0], false),
            (vec![-1.0, -1.0], false),
        ] {
            let r = p.residual(&u, &c);
            assert_eq!(dist_cone(&r, p.cones()) <= 1e-12, feasible);
        }
    }

    #[test]
    fn ingest_unbounded_row_dropped() {
        let p = raw_single_row(f64::NEG_INFINITY, f64::INFINITY)
            .ingest()
            .unwrap();
        assert_eq!(p.p(), 0);
    }

    #[test]
    fn ingest_rejects_crossed_bounds() {
        assert!(matches!(
            raw_single_row(2.0, 1.0).ingest(),
            Err(SolverError::InfeasibleBounds(_))
        ));
    }

    #[test]
    fn ingest_rejects_nan() {
        let mut raw = raw_single_row(0.0, 1.0);
        raw.a_vec[0] = f64::NAN;
        assert!(raw.ingest().is_err());
    }

    #[test]
    fn project_and_dist_cone_rows() {
        use ConeKind::*;
        assert_eq!(project_cone(&[1.0, -3.0], &[NonPos, NonPos]), [0.0, -3.0]);
        assert_eq!(project_cone(&[1.0, -3.0], &[Zero, Zero]), [0.0, 0.0]);
        assert_eq!(
            project_cone(&[2.0, -2.0, 0.0], &[Zero, NonPos, NonPos]),
            [0.0, -2.0, 0.0]
        );
        assert_relative_eq!(dist_cone(&[1.0, -2.0], &[NonPos, NonPos]), 1.0);
        assert_relative_eq!(dist_cone(&[3.0, 4.0], &[Zero, Zero]), 5.0);
        assert_eq!(dist_cone(&[0.0, 0.0], &[Zero, NonPos]), 0.0);
    }

    #[test]
    fn slack_cases() {
        use ConeKind::*;
        // rho = 0: slack is identically zero.
        assert_eq!(
            slack_from_residual(&[1.0, -3.0], &[2.0, 2.0], &[NonPos, NonPos], 0.0),
            [0.0, 0.0]
        );
        // rho = 2: shifted residual [2, -2] clamps componentwise.
        assert_eq!(
            slack_from_residual(&[1.0, -3.0], &[2.0, 2.0], &[NonPos, NonPos], 2.0),
            [0.0, -2.0]
        );
        // Zero rows always project to 0.
        assert_eq!(slack_from_residual(&[1.0], &[1.0], &[Zero], 1.0), [0.0]);
    }

    fn tiny_problem(q_diag: f64, q_lin: f64, g_row: f64, g_off: f64, cone: ConeKind) -> QpProblem {
        QpProblem::new(
            DenseMatrix::new(1, 1, vec![q_diag]),
            vec![q_lin],
            DenseMatrix::new(1, 1, vec![g_row]),
            vec![g_off],
            vec![cone],
            BoxSet::free(1),
        )
        .unwrap()
    }

    #[test]
    fn lagrangian_value_feasible_point() {
        let c = MatvecCounter::new();
        let p = tiny_problem(2.0, 0.0, 1.0, -1.0, ConeKind::Zero);
        // u = 1 is feasible, so the multiplier term vanishes for rho = 0
        // and the penalty vanishes for rho = 1, lambda = 0.
        assert_relative_eq!(lagrangian_value(&[1.0], &[5.0], &p, 0.0, &c), 1.0);
        assert_relative_eq!(lagrangian_value(&[1.0], &[0.0], &p, 1.0, &c), 1.0);
    }

    #[test]
    fn lagrangian_value_augmented() {
        // F(2) = 2; shifted residual 2 + 1/2 = 2.5 on a Zero row;
        // 2 + (2/2)*2.5^2 - 1/(2*2) = 8.
        let c = MatvecCounter::new();
        let p = tiny_problem(0.0, 1.0, 1.0, 0.0, ConeKind::Zero);
        assert_relative_eq!(lagrangian_value(&[2.0], &[1.0], &p, 2.0, &c), 8.0);
    }

    #[test]
    fn lagrangian_grad_ordinary() {
        let c = MatvecCounter::new();
        let p = QpProblem::new(
            DenseMatrix::identity(2),
            vec![0.0, 0.0],
            DenseMatrix::identity(2),
            vec![0.0, 0.0],
            vec![ConeKind::Zero, ConeKind::Zero],
            BoxSet::free(2),
        )
        .unwrap();
        let g = lagrangian_grad(&[0.0, 0.0], &[1.0, 1.0], &p, 0.0, &c);
        assert_eq!(g, vec![1.0, 1.0]);
    }

    #[test]
    fn lagrangian_grad_pure_penalty() {
        let c = MatvecCounter::new();
        let p = tiny_problem(0.0, 0.0, 1.0, 0.0, ConeKind::Zero);
        let g = lagrangian_grad(&[3.0], &[0.0], &p, 1.0, &c);
        assert_relative_eq!(g[0], 3.0);
    }

    #[test]
    fn lagrangian_grad_inactive_inequality() {
        let c = MatvecCounter::new();
        let p = tiny_problem(2.0, 1.0, 1.0, 0.0, ConeKind::NonPos);
        // u = -2: shifted residual is negative, slack absorbs it, r = 0.
        let g = lagrangian_grad(&[-2.0], &[0.0], &p, 1.0, &c);
        assert_relative_eq!(g[0], 2.0 * -2.0 + 1.0);
    }

    #[test]
    fn fused_hessian_matches_direct_product() {
        let c = MatvecCounter::new();
        let p = QpProblem::new(
            DenseMatrix::new(2, 2, vec![2.0, 0.5, 0.5, 1.0]),
            vec![0.0, 0.0],
            DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]),
            vec![0.0, 0.0],
            vec![ConeKind::Zero, ConeKind::Zero],
            BoxSet::free(2),
        )
        .unwrap();
        let h = p.fused_hessian(0.5, &c);
        // G'G = [[10,14],[14,20]]; H = Q + 0.5*G'G.
        assert_relative_eq!(h.at(0, 0), 2.0 + 5.0);
        assert_relative_eq!(h.at(0, 1), 0.5 + 7.0);
        assert_relative_eq!(h.at(1, 0), 0.5 + 7.0);
        assert_relative_eq!(h.at(1, 1), 1.0 + 10.0);
        assert_eq!(c.total(), 2, "Gram accumulation counts n products");
    }

    #[test]
    fn box_projection_and_diameter() {
        let b = BoxSet::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(b.project(&[5.0, -3.0]), vec![1.0, 0.0]);
        assert_relative_eq!(b.diameter(), (4.0f64 + 4.0).sqrt());
        assert!(BoxSet::new(vec![0.0], vec![f64::INFINITY])
            .unwrap()
            .diameter()
            .is_infinite());
        assert!(matches!(
            BoxSet::new(vec![1.0], vec![0.0]),
            Err(SolverError::InfeasibleBounds(_))
        ));
    }

    #[test]
    fn problem_rejects_asymmetric_q() {
        let r = QpProblem::new(
            DenseMatrix::new(2, 2, vec![1.0, 0.5, 0.0, 1.0]),
            vec![0.0, 0.0],
            DenseMatrix::zeros(0, 2),
            vec![],
            vec![],
            BoxSet::free(2),
        );
        assert!(r.is_err());
    }
}
