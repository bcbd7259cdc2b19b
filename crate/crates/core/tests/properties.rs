mod common;

use common::c;
use fractel_core::forward::ForwardSolver;
use fractel_core::fractional::{SampledFunction, TimeGrid};
use fractel_core::special::{ml2, rgamma};
use fractel_core::spectral::{fractional_norm, functional_apply, split_roots, SpectralModel};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = C64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| C64::new(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_roots_satisfy_vieta(alpha in 0.1..5.0f64, lambda in 0.01..50.0f64) {
        prop_assume!((lambda - alpha * alpha).abs() > 1e-6 * alpha * alpha);
        let s = split_roots(alpha, lambda, 1e-8).unwrap();
        let sum = s.s_minus + s.s_plus;
        let prod = s.s_minus * s.s_plus;
        prop_assert!((sum - 2.0 * alpha).norm() < 1e-12 * alpha.max(1.0));
        prop_assert!((prod - lambda).norm() < 1e-10 * lambda.max(alpha * alpha));
        prop_assert_eq!(s.conjugate_pair(), lambda > alpha * alpha);
    }

    #[test]
    fn functional_obeys_cauchy_schwarz(b in prop::collection::vec(complex(), 1..12), seed in complex()) {
        let h: Vec<C64> = (0..b.len()).map(|k| seed * (k as f64 + 1.0).sqrt() - b[k].conj()).collect();
        let ones = vec![1.0; b.len()];
        let lhs = functional_apply(&b, &h).unwrap().norm();
        let rhs = fractional_norm(0.0, &b, &ones).unwrap() * fractional_norm(0.0, &h, &ones).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn fractional_norm_is_monotone(h in prop::collection::vec(complex(), 1..10), t1 in 0.0..2.0f64, dt in 0.0..1.0f64) {
        let lambdas: Vec<f64> = (1..=h.len()).map(|k| (k * k) as f64).collect();
        let lo = fractional_norm(t1, &h, &lambdas).unwrap();
        let hi = fractional_norm(t1 + dt, &h, &lambdas).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-14));
    }

    #[test]
    fn mittag_leffler_recurrence(rho in 0.2..1.5f64, mu in 0.3..3.0f64, re in -5.0..3.0f64, im in -3.0..3.0f64) {
        let z = C64::new(re, im);
        let lhs = ml2(rho, mu, z).unwrap();
        let rhs = z * ml2(rho, mu + rho, z).unwrap() + rgamma(mu);
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()), "{lhs} vs {rhs}");
    }

    #[test]
    fn graded_grid_is_ordered(t in 0.1..10.0f64, n in 3usize..200, g in 1.0..4.0f64) {
        let grid = TimeGrid::graded(t, n, g).unwrap();
        let nodes = grid.nodes();
        prop_assert_eq!(nodes[0], 0.0);
        prop_assert!((nodes[n] - t).abs() < 1e-14 * t);
        prop_assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn forward_map_is_linear(
        rho in 0.3..1.0f64,
        alpha in 0.5..2.5f64,
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        x in prop::collection::vec(-1.0..1.0f64, 6),
        y in prop::collection::vec(-1.0..1.0f64, 6),
    ) {
        let model = SpectralModel::new(vec![1.0, 4.0, 9.0], alpha, 1e-8).unwrap();
        let grid = TimeGrid::graded(1.0, 32, TimeGrid::default_exponent(rho)).unwrap();
        let solver = ForwardSolver::new(&model, rho, &grid).unwrap();
        let src = |w: f64| -> Vec<SampledFunction> {
            (0..3).map(|k| SampledFunction::from_real(&grid, |t| w * ((k + 1) as f64 * t).cos())).collect()
        };
        let run = |v: &[f64], w: f64| {
            solver.solve(&[c(v[0]), c(v[1]), c(v[2])], &[c(v[3]), c(v[4]), c(v[5])], &src(w)).unwrap().u
        };
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = run(&combo, a + 2.0 * b);
        let ux = run(&x, 1.0);
        let uy = run(&y, 2.0);
        let scale = 1.0 + lhs.max_norm();
        for k in 0..3 {
            for n in 0..grid.len() {
                let want = ux.mode(k)[n] * a + uy.mode(k)[n] * b;
                prop_assert!((lhs.mode(k)[n] - want).norm() < 1e-11 * scale);
            }
        }
    }
}
