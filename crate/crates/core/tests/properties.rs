//! Randomized invariants of losses, geometries, optimizers and run configs.

use iblab::geometry::{Exponent, Norm, Potential, TieRule};
use iblab::harness::{run_experiment, Overrides, RunConfig};
use iblab::optimizers::{run, Algorithm, BatchSchedule, OptimizerConfig, Problem};
use iblab::problems::generate::{
    gaussian_matrix, gaussian_vector, realizable_regression, rng, separable_classification,
};
use iblab::problems::Loss;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn exponent() -> impl Strategy<Value = Exponent> {
    prop_oneof![
        Just(Exponent::ratio(1, 1).unwrap()),
        (1i64..=8, 1i64..=8).prop_map(|(a, b)| Exponent::ratio(a + b, b).unwrap()),
        Just(Exponent::Infinity),
    ]
}

fn vector(d: usize) -> impl Strategy<Value = DVector<f64>> {
    proptest::collection::vec(-10.0..10.0f64, d).prop_map(DVector::from_vec)
}

fn loss() -> impl Strategy<Value = Loss> {
    prop_oneof![
        Just(Loss::Squared),
        Just(Loss::Exponential),
        Just(Loss::Logistic)
    ]
}

fn spd(seed: u64, d: usize) -> DMatrix<f64> {
    let a = gaussian_matrix(&mut rng(seed), d, d);
    a.transpose() * &a / d as f64 + DMatrix::identity(d, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_are_nonnegative_with_consistent_derivative(kind in loss(), u in -5.0..5.0f64, y in prop_oneof![Just(-1.0), Just(1.0)]) {
        prop_assert!(kind.value(u, y) >= 0.0);
        let h = 1e-6;
        let fd = (kind.value(u + h, y) - kind.value(u - h, y)) / (2.0 * h);
        prop_assert!((fd - kind.derivative(u, y)).abs() <= 1e-6 * (1.0 + fd.abs()));
        let (log_abs, sign) = kind.log_abs_derivative(u, y);
        if kind.derivative(u, y) != 0.0 {
            prop_assert!((sign * log_abs.exp() - kind.derivative(u, y)).abs() <= 1e-9 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn monotone_losses_decrease_in_the_margin(kind in prop_oneof![Just(Loss::Exponential), Just(Loss::Logistic)], a in -5.0..5.0f64, step in 1e-3..5.0f64) {
        prop_assert!(kind.value(a + step, 1.0) < kind.value(a, 1.0));
        prop_assert!(kind.value(-a - step, -1.0) < kind.value(-a, -1.0));
    }

    #[test]
    fn norms_are_homogeneous_and_subadditive(p in exponent(), u in vector(4), v in vector(4), s in -5.0..5.0f64) {
        let n = Norm::lp(p);
        let tol = 1e-9 * (1.0 + n.value(&u) + n.value(&v)) * (1.0 + s.abs());
        prop_assert!((n.value(&(&u * s)) - s.abs() * n.value(&u)).abs() <= tol);
        prop_assert!(n.value(&(&u + &v)) <= n.value(&u) + n.value(&v) + tol);
        prop_assert!(u.dot(&v).abs() <= n.value(&u) * n.dual_value(&v) + tol);
    }

    #[test]
    fn duality_map_attains_the_dual_norm(p in exponent(), g in vector(4), tie in prop_oneof![Just(TieRule::Average), Just(TieRule::FirstIndex)]) {
        let n = Norm::lp(p);
        let step = n.duality_map_with(&g, tie);
        let dual = n.dual_value(&g);
        let tol = 1e-9 * (1.0 + dual * dual);
        prop_assert!((-g.dot(&step) - dual * dual).abs() <= tol);
        prop_assert!((n.value(&step) - dual).abs() <= 1e-9 * (1.0 + dual));
    }

    #[test]
    fn quadratic_duality_map_attains_the_dual_norm(seed in 0u64..1000, g in vector(3)) {
        let n = Norm::quadratic(spd(seed, 3)).unwrap();
        let step = n.duality_map(&g);
        let dual = n.dual_value(&g);
        prop_assert!((-g.dot(&step) - dual * dual).abs() <= 1e-9 * (1.0 + dual * dual));
        prop_assert!((n.value(&step) - dual).abs() <= 1e-9 * (1.0 + dual));
    }

    #[test]
    fn bregman_divergences_are_nonnegative_and_links_invert(seed in 0u64..1000, which in 0usize..4) {
        let d = 4;
        let mut r = rng(seed);
        let w = gaussian_vector(&mut r, d).map(|x| (0.5 * x).exp());
        let v = gaussian_vector(&mut r, d).map(|x| (0.5 * x).exp());
        let psi = match which {
            0 => Potential::SquaredEuclidean,
            1 => Potential::Entropy,
            2 => Potential::quadratic(spd(seed, d)).unwrap(),
            _ => Potential::squared_lp(Exponent::ratio(3, 2).unwrap()).unwrap(),
        };
        prop_assert!(psi.bregman_divergence(&w, &v).unwrap() >= -1e-12);
        prop_assert!(psi.bregman_divergence(&w, &w).unwrap().abs() <= 1e-12);
        let back = psi.grad_inverse(&psi.grad(&w).unwrap()).unwrap();
        prop_assert!((back - &w).amax() <= 1e-9 * (1.0 + w.amax()));
    }

    #[test]
    fn gradients_lie_in_the_feature_span(seed in 0u64..1000, kind in loss()) {
        let ds = realizable_regression(3, 6, seed).unwrap();
        let w = gaussian_vector(&mut rng(seed + 1), 6);
        let g = ds.gradient(kind, &w, None).unwrap();
        prop_assert!(ds.span().residual_norm(&g) <= 1e-10 * (1.0 + g.norm()));
        let h = 1e-6;
        let e = gaussian_vector(&mut rng(seed + 2), 6).normalize();
        let fd = (ds.objective(kind, &(&w + &e * h)).unwrap() - ds.objective(kind, &(&w - &e * h)).unwrap()) / (2.0 * h);
        prop_assert!((fd - g.dot(&e)).abs() <= 1e-5 * (1.0 + fd.abs()));
    }

    #[test]
    fn mirror_descent_stays_on_the_dual_manifold(seed in 0u64..1000, minibatch in any::<bool>()) {
        let ds = realizable_regression(2, 5, seed).unwrap();
        let psi = Potential::quadratic(spd(seed, 5)).unwrap();
        let w0 = gaussian_vector(&mut rng(seed + 3), 5);
        let z0 = psi.grad(&w0).unwrap();
        let mut cfg = OptimizerConfig::constant(0.01, 200);
        if minibatch {
            cfg = cfg.with_batch(BatchSchedule::Minibatch { size: 1, seed });
        }
        let span = ds.span();
        let mut worst = 0.0f64;
        run(&Algorithm::Mirror { potential: psi.clone() }, &Problem::new(&ds, Loss::Squared), w0, &cfg, &mut |info| {
            let z = psi.grad(&info.after.w).unwrap();
            worst = worst.max(span.residual_norm(&(z - &z0)));
            true
        })
        .unwrap();
        prop_assert!(worst <= 1e-9, "manifold residual {worst:e}");
    }

    #[test]
    fn loss_adaptive_steepest_descent_never_increases_the_loss(seed in 0u64..1000, p in exponent()) {
        let ds = separable_classification(6, 3, 0.1, seed).unwrap();
        let alg = Algorithm::Steepest { norm: Norm::lp(p), tie: TieRule::Average };
        let cfg = OptimizerConfig::loss_adaptive(1.0, 1e300, 2000);
        let mut increases = 0;
        run(&alg, &Problem::new(&ds, Loss::Exponential), DVector::zeros(3), &cfg, &mut |info| {
            if info.log_loss_after > info.log_loss_before + 1e-12 * info.log_loss_before.abs().max(1.0) {
                increases += 1;
            }
            true
        })
        .unwrap();
        prop_assert_eq!(increases, 0);
    }

    #[test]
    fn run_configs_round_trip_through_json(
        seed in proptest::option::of(any::<u64>()),
        eta in proptest::option::of(1e-6..10.0f64),
        beta in proptest::option::of(0.0..0.99f64),
        budget in proptest::option::of(1usize..1_000_000),
        cadence in proptest::option::of(1usize..1000),
    ) {
        let mut cfg = RunConfig::new("E1");
        cfg.seed = seed;
        cfg.cadence = cadence;
        cfg.overrides = Overrides { eta, beta, budget, ..Overrides::default() };
        prop_assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn seeded_runs_are_deterministic(seed in 0u64..1000) {
        let mut cfg = RunConfig::new("E1");
        cfg.seed = Some(seed);
        let a = run_experiment(&cfg).map_err(|f| f.error).unwrap();
        let b = run_experiment(&cfg).map_err(|f| f.error).unwrap();
        prop_assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
        prop_assert_eq!(format!("{:?}", a.series), format!("{:?}", b.series));
    }
}
