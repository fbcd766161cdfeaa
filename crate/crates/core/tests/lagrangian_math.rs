//! Cross-checks of the Lagrangian value/gradient calculus against finite
//! differences and against the specialized inner-objective paths.

use dualqp_core::generate::{seeded_instance, BenchFamily};
use dualqp_core::inner::InnerObjective;
use dualqp_core::model::{lagrangian_grad, lagrangian_penalty, lagrangian_value};
use dualqp_core::{MatvecCounter, QpProblem};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_point<R: Rng>(rng: &mut R, len: usize, half_width: f64) -> Vec<f64> {
    (0..len)
        .map(|_| rng.gen_range(-half_width..half_width))
        .collect()
}

/// Multiplier in the dual domain for the given penalty weight: nonnegative
/// on inequality rows when the ordinary Lagrangian is used, free otherwise.
fn random_multiplier<R: Rng>(rng: &mut R, prob: &QpProblem, rho: f64) -> Vec<f64> {
    prob.cones()
        .iter()
        .map(|c| {
            let v: f64 = rng.gen_range(-3.0..3.0);
            if rho == 0.0 && *c == dualqp_core::ConeKind::NonPos {
                v.abs()
            } else {
                v
            }
        })
        .collect()
}

#[test]
fn lagrangian_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let counter = MatvecCounter::new();
    let mut checked = 0usize;
    for (seed, family, rho) in [
        (1u64, BenchFamily::StronglyConvexIneq, 0.0),
        (2, BenchFamily::StronglyConvexIneq, 5.0),
        (3, BenchFamily::PsdEq, 0.0),
        (4, BenchFamily::PsdEq, 25.0),
        (5, BenchFamily::StronglyConvexIneq, 0.0),
    ] {
        let prob = seeded_instance(family, 5, 3, seed).problem;
        for _ in 0..20 {
            let u = random_point(&mut rng, prob.n(), 8.0);
            let lam = random_multiplier(&mut rng, &prob, rho);
            let grad = lagrangian_grad(&u, &lam, &prob, rho, &counter);
            let h = 1e-6 * (1.0 + norm(&u));
            let mut fd = vec![0.0; prob.n()];
            for i in 0..prob.n() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                fd[i] = (lagrangian_value(&up, &lam, &prob, rho, &counter)
                    - lagrangian_value(&dn, &lam, &prob, rho, &counter))
                    / (2.0 * h);
            }
            let diff: Vec<f64> = grad.iter().zip(&fd).map(|(a, b)| a - b).collect();
            let rel = norm(&diff) / (1.0 + norm(&grad));
            assert!(rel <= 1e-5, "relative gradient error {rel} at seed {seed}");
            checked += 1;
        }
    }
    assert_eq!(checked, 100);
}

#[test]
fn lagrangian_is_midpoint_convex_in_the_primal_variable() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let counter = MatvecCounter::new();
    for (seed, family, rho) in [
        (11u64, BenchFamily::StronglyConvexIneq, 0.0),
        (12, BenchFamily::PsdEq, 40.0),
    ] {
        let prob = seeded_instance(family, 6, 4, seed).problem;
        for _ in 0..50 {
            let a = random_point(&mut rng, prob.n(), 9.0);
            let b = random_point(&mut rng, prob.n(), 9.0);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| 0.5 * (x + y)).collect();
            let lam = random_multiplier(&mut rng, &prob, rho);
            let va = lagrangian_value(&a, &lam, &prob, rho, &counter);
            let vb = lagrangian_value(&b, &lam, &prob, rho, &counter);
            let vm = lagrangian_value(&mid, &lam, &prob, rho, &counter);
            let scale = 1.0 + va.abs().max(vb.abs());
            assert!(vm <= 0.5 * (va + vb) + 1e-9 * scale);
            // The plain objective is convex as well.
            let fa = prob.objective(&a, &counter);
            let fb = prob.objective(&b, &counter);
            let fm = prob.objective(&mid, &counter);
            assert!(fm <= 0.5 * (fa + fb) + 1e-9 * (1.0 + fa.abs().max(fb.abs())));
        }
    }
}

#[test]
fn penalty_term_reduces_to_linear_form_without_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let prob = seeded_instance(BenchFamily::StronglyConvexIneq, 4, 3, 21).problem;
    let counter = MatvecCounter::new();
    for _ in 0..20 {
        let u = random_point(&mut rng, prob.n(), 8.0);
        let lam = random_multiplier(&mut rng, &prob, 0.0);
        let r = prob.residual(&u, &counter);
        let direct: f64 = lam.iter().zip(&r).map(|(&a, &b)| a * b).sum();
        let via = lagrangian_penalty(&r, &lam, prob.cones(), 0.0);
        assert!((via - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }
}

#[test]
fn inner_objective_paths_agree_with_reference_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    let counter = MatvecCounter::new();
    // Ordinary path on inequality rows, penalized general path on the same
    // rows, and the fused all-equality path.
    let ineq = seeded_instance(BenchFamily::StronglyConvexIneq, 5, 3, 31).problem;
    let eq = seeded_instance(BenchFamily::PsdEq, 5, 3, 32).problem;
    let rho_eq = 30.0;
    let fused = eq.fused_hessian(rho_eq, &counter);
    let cases: Vec<(&QpProblem, f64, Option<&dualqp_core::DenseMatrix>)> = vec![
        (&ineq, 0.0, None),
        (&ineq, 7.0, None),
        (&eq, rho_eq, Some(&fused)),
    ];
    for (prob, rho, fused) in cases {
        let mu = random_multiplier(&mut rng, prob, rho);
        let obj = InnerObjective::new(prob, rho, fused, &mu, &counter).unwrap();
        for _ in 0..15 {
            let u = random_point(&mut rng, prob.n(), 8.0);
            let fast = obj.grad(&u);
            let reference = lagrangian_grad(&u, &mu, prob, rho, &counter);
            let diff: Vec<f64> = fast.iter().zip(&reference).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) <= 1e-9 * (1.0 + norm(&reference)));
            let v_fast = obj.value(&u);
            let v_ref = lagrangian_value(&u, &mu, prob, rho, &counter);
            assert!((v_fast - v_ref).abs() <= 1e-9 * (1.0 + v_ref.abs()));
        }
    }
}
