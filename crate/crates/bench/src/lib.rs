//! Shared fixtures for the criterion microbenchmarks.

use dualqp_core::{seeded_instance, BenchFamily, GeneratedQp};

/// A deterministic strongly convex inequality-constrained instance.
pub fn ineq_fixture(n: usize) -> GeneratedQp {
    seeded_instance(BenchFamily::StronglyConvexIneq, n, (n / 2).max(1), 0xBE7C)
}

/// A deterministic semidefinite equality-constrained instance.
pub fn eq_fixture(n: usize) -> GeneratedQp {
    seeded_instance(BenchFamily::PsdEq, n, (n / 2).max(1), 0xBE7C)
}
