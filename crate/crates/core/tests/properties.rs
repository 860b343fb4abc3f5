use pooltest_core::analytic::dorfman_posteriors;
use pooltest_core::dilution::{repeated_pool_sensitivity, repeated_specificity};
use pooltest_core::pareto::{min_tests_under_fn_cap, pareto_filter_eps};
use pooltest_core::prob::{binomial_pmf, pool_positive_prob, pool_test_outcome_probs};
use pooltest_core::{
    eval_dorfman, eval_modified, sweep, DilutionModel, ParetoPoint, Prevalence, ProcedureKind, SweepSpec, TestKit,
};
use proptest::prelude::*;

fn prevalence() -> impl Strategy<Value = f64> {
    prop_oneof![1e-4..0.05f64, 0.05..0.5f64]
}

fn model() -> impl Strategy<Value = DilutionModel> {
    (0.8..=1.0f64, 0.8..=1.0f64, 0.0..0.3f64, -0.004..=0.0f64)
        .prop_map(|(se_i, sp, alpha, beta)| DilutionModel::new(TestKit::new(se_i, sp).unwrap(), alpha, beta))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pmf_sums_to_one(n in 1u32..=2000, p in 0.0..=1.0f64) {
        let total: f64 = (0..=n).map(|k| binomial_pmf(k, n, p).unwrap()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "n={} p={} total={}", n, p, total);
    }

    #[test]
    fn posterior_weights_sum_to_one(n in 2u32..=200, p in prevalence()) {
        let total: f64 = (1..=n).map(|k| binomial_pmf(k - 1, n - 1, p).unwrap()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn single_subject_pool(p in 0.0..=1.0f64) {
        prop_assert_eq!(pool_positive_prob(p, 1).unwrap(), p);
    }

    #[test]
    fn outcome_probabilities_partition(m in model(), n in 1u32..=50, p in prevalence(), r in 1u32..=5) {
        let (pos, neg) = pool_test_outcome_probs(&m, n, p, m.kit.sp, r).unwrap();
        prop_assert!((0.0..=1.0).contains(&pos) && (0.0..=1.0).contains(&neg));
        prop_assert!((pos + neg - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn repeats_raise_pool_positivity(m in model(), n in 1u32..=50, p in prevalence(), r in 2u32..=5) {
        let (pos1, neg1) = pool_test_outcome_probs(&m, n, p, m.kit.sp, 1).unwrap();
        let (pos_r, neg_r) = pool_test_outcome_probs(&m, n, p, m.kit.sp, r).unwrap();
        prop_assert!(pos_r >= pos1 - 1e-15);
        prop_assert!(neg_r <= neg1 + 1e-15);
    }

    #[test]
    fn repeated_rates_move_the_right_way(se in 0.0..=1.0f64, sp in 0.0..=1.0f64, r in 1u32..=8) {
        let se_r = repeated_pool_sensitivity(se, r).unwrap();
        let sp_r = repeated_specificity(sp, r).unwrap();
        prop_assert!(se_r >= se - 1e-15);
        prop_assert!(sp_r <= sp + 1e-15);
        prop_assert!(repeated_pool_sensitivity(se, r + 1).unwrap() >= se_r);
        prop_assert!(repeated_specificity(sp, r + 1).unwrap() <= sp_r);
    }

    #[test]
    fn repeats_never_add_false_negatives(m in model(), p in prevalence(), n in 2u32..=50, r in 1u32..=5) {
        let p = Prevalence::new(p).unwrap();
        let d = eval_dorfman(&m, p, n).unwrap();
        let md = eval_modified(&m, p, n, r).unwrap();
        prop_assert!(md.e_fn <= d.e_fn + 1e-15);
    }

    #[test]
    fn repeats_never_save_tests(m in model(), p in prevalence(), n in 2u32..=50, r in 1u32..=5) {
        let p = Prevalence::new(p).unwrap();
        let d = eval_dorfman(&m, p, n).unwrap();
        let md = eval_modified(&m, p, n, r).unwrap();
        prop_assert!(md.e_tests_individual_stage >= d.e_tests_individual_stage - 1e-15);
        prop_assert!(md.e_tests >= d.e_tests - 1e-15);
    }

    #[test]
    fn pooling_cannot_beat_the_individual_miss_rate(m in model(), p in prevalence(), n in 2u32..=50, r in 1u32..=5) {
        let md = eval_modified(&m, Prevalence::new(p).unwrap(), n, r).unwrap();
        prop_assert!(md.e_fn >= (1.0 - m.kit.se_i) * p - 1e-15);
    }

    #[test]
    fn more_repeats_trade_tests_for_misses(m in model(), p in prevalence(), n in 2u32..=50, r in 1u32..=5) {
        let p = Prevalence::new(p).unwrap();
        let a = eval_modified(&m, p, n, r).unwrap();
        let b = eval_modified(&m, p, n, r + 1).unwrap();
        prop_assert!(b.e_fn <= a.e_fn + 1e-15);
        prop_assert!(b.e_tests >= a.e_tests - 1e-15);
    }

    #[test]
    fn posteriors_satisfy_total_probability(m in model(), p in prevalence(), n in 2u32..=50) {
        let post = dorfman_posteriors(&m, Prevalence::new(p).unwrap(), n).unwrap();
        for x in [post.positive_given_negative, post.positive_given_positive] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        let total = post.positive_given_negative * post.p_pool_negative + post.positive_given_positive * post.p_pool_positive;
        prop_assert!((total - p).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn preset_sensitivity_decreases_with_dilution(n in 2u32..=50) {
        let m = DilutionModel::pcr_fit();
        for k in 1..n {
            prop_assert!(m.sensitivity(n, k).unwrap() <= m.sensitivity(n, k + 1).unwrap());
            prop_assert!(m.sensitivity(n, k).unwrap() <= m.sensitivity(n - 1, k.min(n - 1)).unwrap() + 1e-15);
        }
    }

    #[test]
    fn fronts_are_antichains_and_caps_are_monotone(p in prevalence()) {
        let spec = SweepSpec::new(vec![Prevalence::new(p).unwrap()], DilutionModel::pcr_fit());
        let points = sweep(&spec).unwrap();
        let mut front = pareto_filter_eps(&points, 0.0);
        front.sort_by(|a, b| a.metrics.e_tests.total_cmp(&b.metrics.e_tests));
        front.dedup_by(|a, b| a.metrics.e_tests == b.metrics.e_tests && a.metrics.e_fn == b.metrics.e_fn);
        for w in front.windows(2) {
            prop_assert!(w[1].metrics.e_fn < w[0].metrics.e_fn);
        }

        let modified: Vec<ParetoPoint> = points.iter().filter(|pt| pt.kind() == ProcedureKind::Modified).copied().collect();
        let mut last = f64::INFINITY;
        for cap in [0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 10.0] {
            if let Some(pt) = min_tests_under_fn_cap(&modified, cap) {
                prop_assert!(pt.relative_tests <= last);
                last = pt.relative_tests;
            } else {
                prop_assert!(last.is_infinite(), "a larger cap lost its answer");
            }
        }

        for d in points.iter().filter(|pt| pt.kind() == ProcedureKind::Dorfman) {
            let covered = points
                .iter()
                .any(|m| m.kind() == ProcedureKind::Modified && m.config.n == d.config.n && m.metrics.e_fn <= d.metrics.e_fn);
            prop_assert!(covered, "{:?}", d.config);
        }
    }
}
