//! Dense row-major kernels with explicit matrix-vector accounting.
//!
//! Everything the solver does reduces to matrix-vector products, so this
//! module threads a [`MatvecCounter`] through every product. Reported
//! iteration costs are reconciled against the counter in tests; any kernel
//! added here must keep that accounting exact.
//!
//! Extreme eigenvalues and spectral norms are estimated by power iteration
//! with a fixed deterministic start vector: same input, same output, on any
//! run and any thread.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::SolverError;

/// Relative tolerance on Rayleigh-quotient convergence of the power iteration.
pub const TOL_EIG: f64 = 1e-8;

/// Consecutive passes of the tolerance test required before declaring
/// convergence; guards against a single accidentally small update.
const EIG_CONFIRMATIONS: usize = 3;

/// Fixed seed for the power-iteration start vector.
const POWER_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Counts matrix-vector products. Shared by reference so nested calls
/// (inner solves, eigenvalue estimation, recovery) all hit the same tally.
#[derive(Debug, Default)]
pub struct MatvecCounter(AtomicU64);

impl MatvecCounter {
    pub fn new() -> Self {
        Self(AtomicU64::new(0))
    }

    /// Record one matrix-vector product.
    pub fn record(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    /// Record `k` products at once (matrix-matrix products count one per column).
    pub fn record_many(&self, k: u64) {
        self.0.fetch_add(k, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data. `data.len()` must equal `rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "dense matrix: {} entries for a {}x{} shape",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.rows);
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    /// `A x`, counted as one product. Zero-dimensional products are free.
    pub fn matvec(&self, x: &[f64], counter: &MatvecCounter) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec: vector length != cols");
        if self.rows > 0 && self.cols > 0 {
            counter.record();
        }
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
        out
    }

    /// `A' x`, counted as one product.
    pub fn matvec_transpose(&self, x: &[f64], counter: &MatvecCounter) -> Vec<f64> {
        assert_eq!(
            x.len(),
            self.rows,
            "matvec_transpose: vector length != rows"
        );
        if self.rows > 0 && self.cols > 0 {
            counter.record();
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = self.row(i);
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += a * xi;
                }
            }
        }
        out
    }

    /// Maximum absolute asymmetry `|a_ij - a_ji|` relative to the Frobenius norm.
    pub fn relative_asymmetry(&self) -> f64 {
        assert_eq!(
            self.rows, self.cols,
            "asymmetry check needs a square matrix"
        );
        let scale = self.frobenius_norm().max(1.0);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between two vectors of equal length.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Iteration cap for the power iteration: generous multiple of the dimension
/// scaled by the requested accuracy. The floor keeps small matrices from
/// getting starved budgets — convergence time is set by spectral gaps, not
/// by the dimension, and heavily penalized Hessians cluster their spectra.
pub fn power_iteration_cap(dim: usize) -> usize {
    let d = dim.max(120) as f64;
    (10.0 * d * (1.0 / TOL_EIG).ln()).ceil() as usize
}

fn power_start(dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    let n = norm(&v);
    if n == 0.0 {
        v[0] = 1.0;
    } else {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    v
}

/// Power iteration for the eigenvalue of largest magnitude of a symmetric
/// operator given through `apply`. Converges on the Rayleigh quotient, which
/// stabilizes well before the eigenvector does, so clustered spectra still
/// yield accurate values.
fn power_dominant<F>(dim: usize, apply: F) -> Result<f64, SolverError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if dim == 0 {
        return Ok(0.0);
    }
    let cap = power_iteration_cap(dim);
    let mut v = power_start(dim);
    let mut ray_prev = f64::INFINITY;
    let mut streak = 0usize;
    for _ in 0..cap {
        let w = apply(&v);
        let ray = dot(&v, &w);
        let nw = norm(&w);
        if nw <= f64::MIN_POSITIVE {
            // Start vector is annihilated: dominant eigenvalue is zero.
            return Ok(0.0);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if (ray - ray_prev).abs() <= TOL_EIG * ray.abs().max(1.0) {
            streak += 1;
            if streak >= EIG_CONFIRMATIONS {
                return Ok(ray);
            }
        } else {
            streak = 0;
        }
        ray_prev = ray;
    }
    Err(SolverError::EigenNonConvergence { best: ray_prev })
}

/// Spectral norm `||A||_2` by power iteration on `A'A`. Each iteration costs
/// two counted products. Deterministic; errors if the Rayleigh quotient has
/// not stabilized within the iteration cap.
pub fn spectral_norm(a: &DenseMatrix, counter: &MatvecCounter) -> Result<f64, SolverError> {
    if a.rows == 0 || a.cols == 0 {
        return Ok(0.0);
    }
    let sq = power_dominant(a.cols, |v| {
        let av = a.matvec(v, counter);
        a.matvec_transpose(&av, counter)
    })?;
    Ok(sq.max(0.0).sqrt())
}

/// Extreme eigenvalues `(lambda_min, lambda_max)` of a symmetric matrix.
///
/// The dominant eigenvalue (largest magnitude) is found first; the opposite
/// extreme follows from a second power iteration on the spectrum shifted by
/// the dominant value. With `psd_hint`, a `lambda_min` estimate within
/// `TOL_EIG` of zero (relative to `lambda_max`) is clamped to exactly zero so
/// that downstream case selection sees semidefinite matrices as such.
pub fn sym_eig_extremes(
    s: &DenseMatrix,
    psd_hint: bool,
    counter: &MatvecCounter,
) -> Result<(f64, f64), SolverError> {
    assert_eq!(s.rows, s.cols, "eigenvalue extremes need a square matrix");
    if s.rows == 0 {
        return Ok((0.0, 0.0));
    }
    if s.relative_asymmetry() > 1e-12 {
        return Err(SolverError::InvalidProblem(
            "matrix is not symmetric within 1e-12 relative tolerance".into(),
        ));
    }
    let dominant = power_dominant(s.rows, |v| s.matvec(v, counter))?;
    let (mut lo, mut hi);
    if dominant >= 0.0 {
        hi = dominant;
        // dominant(hi*I - S) = hi - lambda_min, and hi*I - S is PSD.
        let other = power_dominant(s.rows, |v| {
            let mut w = s.matvec(v, counter);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi = hi * vi - *wi;
            }
            w
        })?;
        lo = hi - other;
    } else {
        lo = dominant;
        let other = power_dominant(s.rows, |v| {
            let mut w = s.matvec(v, counter);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= lo * vi;
            }
            w
        })?;
        hi = lo + other;
    }
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    if psd_hint && lo.abs() <= TOL_EIG * hi.abs().max(1.0) {
        lo = 0.0;
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matvec_counts_and_values() {
        let c = MatvecCounter::new();
        let a = DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let y = a.matvec(&[1.0, 1.0], &c);
        assert_eq!(y, vec![3.0, 7.0]);
        assert_eq!(c.total(), 1);
        let z = a.matvec_transpose(&[1.0, 1.0], &c);
        assert_eq!(z, vec![4.0, 6.0]);
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn counter_is_shared_across_calls() {
        let c = MatvecCounter::new();
        let a = DenseMatrix::identity(3);
        for _ in 0..5 {
            a.matvec(&[1.0, 2.0, 3.0], &c);
        }
        c.record_many(2);
        assert_eq!(c.total(), 7);
    }

    #[test]
    #[should_panic(expected = "matvec")]
    fn matvec_rejects_bad_length() {
        let c = MatvecCounter::new();
        let a = DenseMatrix::zeros(2, 3);
        a.matvec(&[1.0, 2.0], &c);
    }

    #[test]
    fn spectral_norm_diagonal() {
        let c = MatvecCounter::new();
        let a = DenseMatrix::new(2, 2, vec![3.0, 0.0, 0.0, 4.0]);
        let n = spectral_norm(&a, &c).unwrap();
        assert_relative_eq!(n, 4.0, max_relative = 1e-6);
        assert!(c.total() >= 2, "power iteration products must be counted");
    }

    #[test]
    fn spectral_norm_shear_is_golden_ratio() {
        // A = [[1,1],[0,1]]: A'A has largest eigenvalue (3+sqrt(5))/2, so
        // ||A|| = (1+sqrt(5))/2.
        let c = MatvecCounter::new();
        let a = DenseMatrix::new(2, 2, vec![1.0, 1.0, 0.0, 1.0]);
        let n = spectral_norm(&a, &c).unwrap();
        assert_relative_eq!(n, 1.618_033_988_749_895, max_relative = 1e-6);
    }

    #[test]
    fn spectral_norm_zero_and_empty() {
        let c = MatvecCounter::new();
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 3), &c).unwrap(), 0.0);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(0, 4), &c).unwrap(), 0.0);
    }

    #[test]
    fn eig_extremes_two_by_two() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let c = MatvecCounter::new();
        let s = DenseMatrix::new(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let (lo, hi) = sym_eig_extremes(&s, false, &c).unwrap();
        assert_relative_eq!(lo, 1.0, max_relative = 1e-6);
        assert_relative_eq!(hi, 3.0, max_relative = 1e-6);
    }

    #[test]
    fn eig_extremes_negative_dominant() {
        let c = MatvecCounter::new();
        let s = DenseMatrix::new(2, 2, vec![-5.0, 0.0, 0.0, 2.0]);
        let (lo, hi) = sym_eig_extremes(&s, false, &c).unwrap();
        assert_relative_eq!(lo, -5.0, max_relative = 1e-6);
        assert_relative_eq!(hi, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn eig_extremes_psd_clamp() {
        // Singular PSD matrix: lambda_min estimate snaps to exactly 0.
        let c = MatvecCounter::new();
        let s = DenseMatrix::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        let (lo, hi) = sym_eig_extremes(&s, true, &c).unwrap();
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn eig_extremes_identity_multiple() {
        let c = MatvecCounter::new();
        let mut s = DenseMatrix::identity(4);
        for i in 0..4 {
            s.set(i, i, 2.5);
        }
        let (lo, hi) = sym_eig_extremes(&s, false, &c).unwrap();
        assert_relative_eq!(lo, 2.5, max_relative = 1e-6);
        assert_relative_eq!(hi, 2.5, max_relative = 1e-6);
    }

    #[test]
    fn eig_extremes_rejects_asymmetry() {
        let c = MatvecCounter::new();
        let s = DenseMatrix::new(2, 2, vec![1.0, 0.5, 0.0, 1.0]);
        assert!(sym_eig_extremes(&s, false, &c).is_err());
    }

    #[test]
    fn power_iteration_is_deterministic() {
        let a = DenseMatrix::new(3, 3, vec![4.0, 1.0, 0.0, 1.0, 3.0, 0.2, 0.0, 0.2, 1.0]);
        let c1 = MatvecCounter::new();
        let c2 = MatvecCounter::new();
        let n1 = spectral_norm(&a, &c1).unwrap();
        let n2 = spectral_norm(&a, &c2).unwrap();
        assert_eq!(n1.to_bits(), n2.to_bits());
        assert_eq!(c1.total(), c2.total());
    }
}
