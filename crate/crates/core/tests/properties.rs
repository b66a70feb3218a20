use fwa_core::bounds::{
    bound_convergence_fwa, bound_convergence_lawa, bound_convergence_sgd, bound_convex_constant,
    bound_convex_general, bound_nonconvex_constant, linear_beta, ProblemConstants,
};
use fwa_core::data::gen_synthetic_regression;
use fwa_core::stability::{probe_expansivity, probe_map};
use fwa_core::{LearningRateSchedule, LossModel, ParameterVector};
use proptest::prelude::*;

fn consts(l: f64, beta: f64, g: f64, d: f64, n: usize) -> ProblemConstants {
    ProblemConstants::new(l, beta, g, d, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convex_constant_decreases_in_k(t in 2usize..400, alpha in 1e-4f64..1.0, l in 0.1f64..10.0) {
        let c = consts(l, 1.0, 1.0, 1.0, 100);
        let mut prev = f64::INFINITY;
        for k in 1..=t {
            let v = bound_convex_constant(&c, t, k, alpha).unwrap().value;
            prop_assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn fwa_convergence_below_sgd(t in 2usize..100_000, c in 0.01f64..5.0, d in 0.1f64..5.0, g in 0.1f64..5.0) {
        let pc = consts(1.0, 1.0, g, d, 10);
        let sgd = bound_convergence_sgd(&pc, t, c).unwrap().value;
        let fwa = bound_convergence_fwa(&pc, t, 1, c).unwrap().value;
        prop_assert!(fwa < sgd);
    }

    #[test]
    fn lawa_with_unit_interval_is_fwa(t in 2usize..100_000, kf in 0.0f64..1.0, c in 0.01f64..5.0) {
        let k = 1 + (kf * (t / 2 - 1) as f64) as usize;
        let pc = consts(1.0, 1.0, 1.3, 0.7, 10);
        prop_assert_eq!(
            bound_convergence_lawa(&pc, t, k, 1, c).unwrap().value,
            bound_convergence_fwa(&pc, t, k, c).unwrap().value
        );
    }

    #[test]
    fn nonconvex_constant_is_positive(t in 1usize..100_000, k in 1usize..200, c in 0.01f64..3.0, beta in 0.01f64..3.0) {
        let pc = consts(1.0, beta, 1.0, 1.0, 50);
        let r = bound_nonconvex_constant(&pc, t, k, c).unwrap();
        prop_assert!(r.value > 0.0 && r.value.is_finite());
    }

    #[test]
    fn convex_general_dominates_corollary(t in 1usize..300, kf in 0.0f64..1.0, alpha in 1e-3f64..0.5) {
        let k = 1 + (kf * (t - 1) as f64) as usize;
        let pc = consts(1.0, 1.0, 1.0, 1.0, 64);
        let lr = LearningRateSchedule::constant(alpha).unwrap();
        let general = bound_convex_general(&pc, t, k, &vec![1.0; k], &lr).unwrap().value;
        let corollary = bound_convex_constant(&pc, t, k, alpha).unwrap().value;
        let gap = alpha / 64.0;
        prop_assert!((general - corollary - gap).abs() <= 1e-12 * general.max(1.0));
    }

    #[test]
    fn linear_gradients_are_beta_lipschitz(seed in 0u64..1000) {
        let data = gen_synthetic_regression(3, 20, 0.5, seed).unwrap().dataset;
        let model = LossModel::linear(3).unwrap();
        let beta = linear_beta(&data);
        let probe = probe_map(4, 1.0, 50, 5.0, seed, |w| {
            model.grad_batch(w, data.samples())
        }).unwrap();
        prop_assert!(probe.max_ratio <= beta + 1e-8);
    }
}

#[test]
fn full_batch_step_is_non_expansive_for_convex_models() {
    let data = gen_synthetic_regression(5, 100, 0.3, 11).unwrap().dataset;
    let model = LossModel::linear(5).unwrap();
    let beta = linear_beta(&data);
    for alpha in [0.5 / beta, 1.0 / beta, 2.0 / beta] {
        let probe = probe_expansivity(&model, &data, alpha, 1000, 1.0, 3).unwrap();
        assert!(probe.is_non_expansive(1e-8), "alpha {alpha}: {}", probe.max_ratio);
    }
}

#[test]
fn quadratic_map_has_exact_ratios() {
    let flip = probe_map(1, 1.0, 1000, 1.0, 0, |w| Ok(w.scaled(-1.0))).unwrap();
    assert_eq!(flip.max_ratio, 1.0);
    let zero = probe_map(1, 0.5, 1000, 1.0, 0, |w: &ParameterVector| Ok(w.scaled(0.0))).unwrap();
    assert_eq!(zero.max_ratio, 0.0);
}
