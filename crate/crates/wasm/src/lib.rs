//! Browser bindings. Every export returns a JSON string so the page needs no
//! glue beyond `JSON.parse`.

use pooltest_core::analytic::ProcedureKind;
use pooltest_core::pareto::min_tests_under_fn_cap;
use pooltest_core::report::FN_CAPS;
use pooltest_core::{
    evaluate as eval, sweep, DilutionModel, Metrics, ParetoPoint, Prevalence, ProcedureConfig, SweepSpec, TestKit,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn model(alpha: f64, beta: f64, se_i: f64, sp: f64) -> Result<DilutionModel, String> {
    if !alpha.is_finite() || !beta.is_finite() {
        return Err("alpha and beta must be finite".into());
    }
    let kit = TestKit::new(se_i, sp).map_err(|e| e.to_string())?;
    Ok(DilutionModel::new(kit, alpha, beta))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Evaluation {
    metrics: Metrics,
    relative_tests: f64,
    relative_fn_increase: f64,
    individual: Metrics,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_json(
    kind: &str,
    n: u32,
    r: u32,
    p: f64,
    alpha: f64,
    beta: f64,
    se_i: f64,
    sp: f64,
) -> Result<String, String> {
    let m = model(alpha, beta, se_i, sp)?;
    let p = Prevalence::new(p).map_err(|e| e.to_string())?;
    let kind: ProcedureKind = kind.parse().map_err(|e: pooltest_core::Error| e.to_string())?;
    let config = match kind {
        ProcedureKind::Individual => ProcedureConfig::individual(),
        _ => ProcedureConfig::new(kind, n, r).map_err(|e| e.to_string())?,
    };
    let pt = ParetoPoint::new(p, config, eval(&m, p, &config), se_i);
    to_json(&Evaluation {
        metrics: pt.metrics,
        relative_tests: pt.relative_tests,
        relative_fn_increase: pt.relative_fn_increase,
        individual: eval(&m, p, &ProcedureConfig::individual()),
    })
}

#[derive(Serialize)]
struct CurvePoint {
    n: u32,
    /// Single-positive pool sensitivity for one test and for 2..=5 tests.
    se: [f64; 5],
    clamped: bool,
}

pub fn dilution_curve_json(n_max: u32, alpha: f64, beta: f64, se_i: f64, sp: f64) -> Result<String, String> {
    if !(1..=10_000).contains(&n_max) {
        return Err(format!("n_max must be in [1, 10000], got {n_max}"));
    }
    let m = model(alpha, beta, se_i, sp)?;
    let points: Vec<CurvePoint> = (1..=n_max)
        .map(|n| {
            let e = m.evaluate(n, 1).expect("k = 1 is valid");
            let se = [1, 2, 3, 4, 5].map(|r| 1.0 - (1.0 - e.value).powi(r));
            CurvePoint {
                n,
                se,
                clamped: e.clamped,
            }
        })
        .collect();
    to_json(&points)
}

#[derive(Serialize)]
struct FrontPoint {
    kind: ProcedureKind,
    n: u32,
    r: u32,
    relative_tests: f64,
    relative_fn_increase: f64,
    e_fp: f64,
    dominated: bool,
    dominated_joint: bool,
}

#[derive(Serialize)]
struct CapAnswer {
    cap: f64,
    n: Option<u32>,
    r: Option<u32>,
    relative_tests: Option<f64>,
}

#[derive(Serialize)]
struct Fronts {
    points: Vec<FrontPoint>,
    caps: Vec<CapAnswer>,
}

#[allow(clippy::too_many_arguments)]
pub fn pareto_fronts_json(
    p: f64,
    n_max: u32,
    r_max: u32,
    alpha: f64,
    beta: f64,
    se_i: f64,
    sp: f64,
) -> Result<String, String> {
    let m = model(alpha, beta, se_i, sp)?;
    let mut spec = SweepSpec::new(vec![Prevalence::new(p).map_err(|e| e.to_string())?], m);
    spec.n_range = 2..=n_max;
    spec.r_range = 2..=r_max;
    let all = sweep(&spec).map_err(|e| e.to_string())?;
    let modified: Vec<ParetoPoint> = all
        .iter()
        .filter(|pt| pt.kind() == ProcedureKind::Modified)
        .copied()
        .collect();
    let caps = FN_CAPS
        .iter()
        .map(|&cap| {
            let best = min_tests_under_fn_cap(&modified, cap);
            CapAnswer {
                cap,
                n: best.map(|b| b.config.n),
                r: best.map(|b| b.config.r),
                relative_tests: best.map(|b| b.relative_tests),
            }
        })
        .collect();
    let points = all
        .iter()
        .map(|pt| FrontPoint {
            kind: pt.kind(),
            n: pt.config.n,
            r: pt.config.r,
            relative_tests: pt.relative_tests,
            relative_fn_increase: pt.relative_fn_increase,
            e_fp: pt.metrics.e_fp,
            dominated: pt.dominated,
            dominated_joint: pt.dominated_joint,
        })
        .collect();
    to_json(&Fronts { points, caps })
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    kind: &str,
    n: u32,
    r: u32,
    p: f64,
    alpha: f64,
    beta: f64,
    se_i: f64,
    sp: f64,
) -> Result<String, JsError> {
    evaluate_json(kind, n, r, p, alpha, beta, se_i, sp).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn dilution_curve(n_max: u32, alpha: f64, beta: f64, se_i: f64, sp: f64) -> Result<String, JsError> {
    dilution_curve_json(n_max, alpha, beta, se_i, sp).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn pareto_fronts(
    p: f64,
    n_max: u32,
    r_max: u32,
    alpha: f64,
    beta: f64,
    se_i: f64,
    sp: f64,
) -> Result<String, JsError> {
    pareto_fronts_json(p, n_max, r_max, alpha, beta, se_i, sp).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pooltest_core::dilution::{PCR_FIT_ALPHA, PCR_FIT_BETA};
    use serde_json::Value;

    fn preset_eval(kind: &str, n: u32, r: u32, p: f64) -> Result<Value, String> {
        evaluate_json(kind, n, r, p, PCR_FIT_ALPHA, PCR_FIT_BETA, 0.99, 0.99).map(|s| serde_json::from_str(&s).unwrap())
    }

    #[test]
    fn evaluate_returns_metrics() {
        let v = preset_eval("individual", 0, 0, 0.001).unwrap();
        assert_eq!(v["metrics"]["e_tests"], 1.0);
        assert!((v["metrics"]["e_fp"].as_f64().unwrap() - 0.00999).abs() < 1e-12);
        let v = preset_eval("modified", 34, 5, 0.001).unwrap();
        assert!((v["relative_tests"].as_f64().unwrap() - 0.221).abs() < 0.005);
        assert!(preset_eval("modified", 34, 1, 0.001).is_err());
        assert!(preset_eval("triage", 3, 1, 0.001).is_err());
        assert!(preset_eval("dorfman", 3, 1, 0.0).is_err());
    }

    #[test]
    fn curve_matches_model() {
        let s = dilution_curve_json(50, PCR_FIT_ALPHA, PCR_FIT_BETA, 0.99, 0.99).unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 50);
        let se10 = v[9]["se"][0].as_f64().unwrap();
        assert!((se10 - DilutionModel::pcr_fit().sensitivity(10, 1).unwrap()).abs() < 1e-15);
        assert!(v[9]["se"][4].as_f64().unwrap() > se10);
        assert!(dilution_curve_json(0, 0.0, 0.0, 0.99, 0.99).is_err());
    }

    #[test]
    fn fronts_include_cap_answers() {
        let s = pareto_fronts_json(0.001, 50, 5, PCR_FIT_ALPHA, PCR_FIT_BETA, 0.99, 0.99).unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 1 + 49 + 49 * 4);
        assert_eq!(v["caps"][0]["r"], 5);
        let s = pareto_fronts_json(0.3, 50, 5, PCR_FIT_ALPHA, PCR_FIT_BETA, 0.99, 0.99).unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert!(v["caps"][2]["n"].is_null());
        assert!(pareto_fronts_json(0.01, 1, 5, 0.0, 0.0, 0.99, 0.99).is_err());
    }
}
