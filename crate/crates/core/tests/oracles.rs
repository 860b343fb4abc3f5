//! Closed forms checked against exact rational arithmetic and brute-force
//! enumeration.

mod common;

use common::{brute_force_front, enumerate_metrics};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use pooltest_core::dilution::{repeated_pool_sensitivity, repeated_specificity, SensitivityObservation};
use pooltest_core::pareto::{pareto_filter_eps, REFERENCE_PREVALENCES};
use pooltest_core::prob::{binomial_pmf, pool_positive_prob, pool_sensitivity_avg, pool_test_outcome_probs};
use pooltest_core::{
    eval_dorfman, eval_individual, evaluate, fit_dilution_model, DilutionModel, Metrics, ParetoPoint, Prevalence,
    ProcedureConfig, ProcedureKind, TestKit,
};

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn dec(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn pow(x: &BigRational, e: u32) -> BigRational {
    (0..e).fold(BigRational::one(), |acc, _| acc * x)
}

fn binom(n: u32, k: u32) -> BigRational {
    let mut c = BigRational::one();
    for i in 0..k {
        c = c * BigRational::from_integer(BigInt::from(n - i)) / BigRational::from_integer(BigInt::from(i + 1));
    }
    c
}

fn exact_pmf(k: u32, n: u32, p: &BigRational) -> BigRational {
    binom(n, k) * pow(p, k) * pow(&(BigRational::one() - p), n - k)
}

fn close(actual: f64, exact: &BigRational, rel: f64) {
    let e = exact.to_f64().unwrap();
    assert!(
        (actual - e).abs() <= rel * e.abs().max(f64::MIN_POSITIVE),
        "got {actual:e}, exact {e:e}"
    );
}

#[test]
fn pmf_single_positive_in_ten() {
    let exact = exact_pmf(1, 10, &dec(1, 1000));
    close(binomial_pmf(1, 10, 0.001).unwrap(), &exact, 1e-14);
}

#[test]
fn pmf_matches_exact_binomial_on_grid() {
    for n in [1u32, 2, 7, 16, 33, 50] {
        for p in [0.001, 0.05, 0.3, 0.77] {
            let pq = q(p);
            for k in 0..=n {
                close(binomial_pmf(k, n, p).unwrap(), &exact_pmf(k, n, &pq), 1e-12);
            }
        }
    }
}

#[test]
fn pool_positive_probability_exact() {
    let exact = BigRational::one() - pow(&dec(999, 1000), 10);
    close(pool_positive_prob(0.001, 10).unwrap(), &exact, 1e-14);
}

#[test]
fn repeated_rates_exact() {
    let exact = BigRational::one() - pow(&dec(19, 100), 3);
    close(repeated_pool_sensitivity(0.81, 3).unwrap(), &exact, 1e-15);
    close(repeated_specificity(0.99, 5).unwrap(), &pow(&dec(99, 100), 5), 1e-15);
}

#[test]
fn individual_testing_rates() {
    let m = eval_individual(TestKit::default(), Prevalence::new(0.001).unwrap());
    assert_eq!(m.e_tests, 1.0);
    close(m.e_fp, &(dec(1, 100) * dec(999, 1000)), 1e-15);
    close(m.e_fn, &(dec(1, 100) * dec(1, 1000)), 1e-15);
}

#[test]
fn dorfman_perfect_kit_tests() {
    let model = DilutionModel::no_dilution(TestKit::perfect());
    let m = eval_dorfman(&model, Prevalence::new(0.1).unwrap(), 10).unwrap();
    let exact = dec(1, 10) + BigRational::one() - pow(&dec(9, 10), 10);
    close(m.e_tests, &exact, 1e-13);
    assert_eq!(m.e_fn, 0.0);
    assert_eq!(m.e_fp, 0.0);
}

#[test]
fn average_sensitivity_exact_sum() {
    let model = DilutionModel::pcr_fit();
    let (n, p) = (10u32, 0.01);
    let pq = q(p);
    let mut num = BigRational::zero();
    for k in 1..=n {
        num += q(model.sensitivity(n, k).unwrap()) * exact_pmf(k, n, &pq);
    }
    let exact = num / (BigRational::one() - pow(&(BigRational::one() - &pq), n));
    close(pool_sensitivity_avg(&model, n, p).unwrap(), &exact, 1e-13);
}

#[test]
fn outcome_probs_by_sequence_enumeration() {
    // Every (k, first r test results) path, summed over exactly.
    let model = DilutionModel::pcr_fit();
    let (n, p, sp, r) = (10u32, 0.01, 0.99, 3u32);
    let pq = q(p);
    let mut positive = BigRational::zero();
    let mut negative = BigRational::zero();
    for k in 0..=n {
        let w = exact_pmf(k, n, &pq);
        let detect = if k == 0 {
            BigRational::one() - q(sp)
        } else {
            q(model.sensitivity(n, k).unwrap())
        };
        for seq in 0u32..(1 << r) {
            let mut prob = w.clone();
            for i in 0..r {
                prob *= if seq >> i & 1 == 1 {
                    detect.clone()
                } else {
                    BigRational::one() - &detect
                };
            }
            if seq == 0 {
                negative += prob;
            } else {
                positive += prob;
            }
        }
    }
    let (pos, neg) = pool_test_outcome_probs(&model, n, p, sp, r).unwrap();
    close(pos, &positive, 1e-13);
    close(neg, &negative, 1e-13);
}

fn check_against_enumeration(model: &DilutionModel, p: f64, config: &ProcedureConfig) {
    let m: Metrics = evaluate(model, Prevalence::new(p).unwrap(), config);
    let (t, f_n, f_p) = enumerate_metrics(model, p, config);
    for (name, a, b) in [("tests", m.e_tests, t), ("fn", m.e_fn, f_n), ("fp", m.e_fp, f_p)] {
        assert!(
            (a - b).abs() <= 1e-10,
            "{config:?} p={p} {name}: closed form {a}, enumeration {b}"
        );
    }
}

#[test]
fn closed_forms_match_full_enumeration() {
    let models = [
        DilutionModel::pcr_fit(),
        DilutionModel::new(TestKit::new(0.9, 0.95).unwrap(), 0.2, -0.01),
        DilutionModel::no_dilution(TestKit::new(0.97, 0.98).unwrap()),
    ];
    for model in &models {
        for p in [0.01, 0.1, 0.3] {
            check_against_enumeration(model, p, &ProcedureConfig::individual());
            for n in 2..=4 {
                check_against_enumeration(model, p, &ProcedureConfig::dorfman(n).unwrap());
                for r in 2..=3 {
                    check_against_enumeration(model, p, &ProcedureConfig::modified(n, r).unwrap());
                }
            }
        }
    }
}

#[test]
fn pareto_filter_matches_brute_force() {
    // A deterministic cloud with many exact ties.
    let mut seed = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed % 40) as f64 / 40.0
    };
    let p = Prevalence::new(0.05).unwrap();
    let points: Vec<ParetoPoint> = (0..200)
        .map(|i| {
            let metrics = Metrics {
                e_tests: next(),
                e_fn: next(),
                e_fp: 0.0,
                e_tests_individual_stage: 0.0,
                stages: None,
            };
            ParetoPoint::new(p, ProcedureConfig::dorfman(2 + i).unwrap(), metrics, 0.99)
        })
        .collect();
    let pairs: Vec<(f64, f64)> = points.iter().map(|pt| (pt.metrics.e_tests, pt.metrics.e_fn)).collect();
    let expected: Vec<u32> = brute_force_front(&pairs)
        .into_iter()
        .zip(&points)
        .filter(|(keep, _)| *keep)
        .map(|(_, pt)| pt.config.n)
        .collect();
    let mut got: Vec<u32> = pareto_filter_eps(&points, 0.0).iter().map(|pt| pt.config.n).collect();
    got.sort_unstable();
    assert_eq!(got, expected);
}

#[test]
fn sweep_front_flags_match_brute_force() {
    let spec = pooltest_core::SweepSpec::reference(DilutionModel::pcr_fit());
    let points = pooltest_core::sweep(&spec).unwrap();
    assert_eq!(
        pooltest_core::pareto::by_prevalence(&points).len(),
        REFERENCE_PREVALENCES.len()
    );
    for block in pooltest_core::pareto::by_prevalence(&points) {
        let pairs: Vec<(f64, f64)> = block.iter().map(|pt| (pt.metrics.e_tests, pt.metrics.e_fn)).collect();
        let joint = brute_force_front(&pairs);
        for (pt, on_front) in block.iter().zip(joint) {
            assert_eq!(pt.dominated_joint, !on_front, "{:?}", pt.config);
        }
        for kind in [ProcedureKind::Dorfman, ProcedureKind::Modified] {
            let fam: Vec<&ParetoPoint> = block.iter().filter(|pt| pt.kind() == kind).collect();
            let pairs: Vec<(f64, f64)> = fam.iter().map(|pt| (pt.metrics.e_tests, pt.metrics.e_fn)).collect();
            for (pt, on_front) in fam.iter().zip(brute_force_front(&pairs)) {
                assert_eq!(pt.dominated, !on_front, "{:?}", pt.config);
            }
        }
    }
}

#[test]
fn fit_recovers_synthetic_parameters() {
    let truth = DilutionModel::new(TestKit::default(), 0.05, -0.0008);
    let obs: Vec<SensitivityObservation> = [(1, 1), (5, 1), (10, 1), (20, 3), (50, 1), (30, 7)]
        .into_iter()
        .map(|(n, k)| SensitivityObservation::new(n, k, truth.raw_sensitivity(n, k)).unwrap())
        .collect();
    let fit = fit_dilution_model(&obs, TestKit::default()).unwrap();
    assert!((fit.model.alpha - 0.05).abs() < 1e-6, "alpha {}", fit.model.alpha);
    assert!((fit.model.beta + 0.0008).abs() < 1e-6, "beta {}", fit.model.beta);
    assert!(fit.mse < 1e-12);
}

#[test]
fn fit_on_degenerate_design_does_no_worse_than_the_mean() {
    // Every observation at the same shape: the parameters are not identified,
    // but the residual should not exceed the sample variance.
    let values = [0.9, 0.92, 0.88, 0.91];
    let obs: Vec<SensitivityObservation> = values
        .iter()
        .map(|&se| SensitivityObservation::new(10, 1, se).unwrap())
        .collect();
    let mean = values.iter().sum::<f64>() / 4.0;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
    let fit = fit_dilution_model(&obs, TestKit::default()).unwrap();
    assert!(fit.mse <= variance + 1e-12, "mse {} variance {variance}", fit.mse);
}
