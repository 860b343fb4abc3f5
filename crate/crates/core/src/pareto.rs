//! Grid enumeration of `(n, r)` settings and Pareto filtering on
//! (expected tests, expected false negatives).

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::analytic::{evaluate, Metrics, ProcedureConfig, ProcedureKind};
use crate::dilution::DilutionModel;
use crate::error::{domain, Result};
use crate::prob::Prevalence;

/// Prevalences of the reference study.
pub const REFERENCE_PREVALENCES: [f64; 9] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub prevalences: Vec<Prevalence>,
    pub n_range: RangeInclusive<u32>,
    /// Repeat counts for the modified procedure. Dorfman (`r = 1`) points are
    /// controlled by `include_dorfman`.
    pub r_range: RangeInclusive<u32>,
    pub include_dorfman: bool,
    pub include_individual: bool,
    pub model: DilutionModel,
    /// Tolerance for dominance comparisons; 0 means exact.
    pub epsilon: f64,
}

impl SweepSpec {
    pub fn new(prevalences: Vec<Prevalence>, model: DilutionModel) -> Self {
        Self {
            prevalences,
            n_range: 2..=50,
            r_range: 2..=5,
            include_dorfman: true,
            include_individual: true,
            model,
            epsilon: 0.0,
        }
    }

    pub fn reference(model: DilutionModel) -> Self {
        let ps = REFERENCE_PREVALENCES
            .iter()
            .map(|&p| Prevalence::new(p).expect("valid prevalence"))
            .collect();
        Self::new(ps, model)
    }

    pub fn validate(&self) -> Result<()> {
        let (n0, n1) = (*self.n_range.start(), *self.n_range.end());
        if n0 < 2 || n1 > 10_000 || n0 > n1 {
            return domain(format!("pool size range must lie within [2, 10000], got {n0}..={n1}"));
        }
        let (r0, r1) = (*self.r_range.start(), *self.r_range.end());
        if r0 < 1 || r1 > 100 || r0 > r1 {
            return domain(format!("repeat range must lie within [1, 100], got {r0}..={r1}"));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return domain("dominance epsilon must be non-negative");
        }
        Ok(())
    }

    fn configs(&self) -> Vec<ProcedureConfig> {
        let mut out = Vec::new();
        if self.include_individual {
            out.push(ProcedureConfig::individual());
        }
        if self.include_dorfman {
            out.extend(self.n_range.clone().map(|n| ProcedureConfig {
                kind: ProcedureKind::Dorfman,
                n,
                r: 1,
            }));
        }
        for n in self.n_range.clone() {
            // r = 1 is the Dorfman procedure and is listed under that kind.
            for r in self.r_range.clone().filter(|&r| r >= 2) {
                out.push(ProcedureConfig {
                    kind: ProcedureKind::Modified,
                    n,
                    r,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub p: Prevalence,
    pub config: ProcedureConfig,
    pub metrics: Metrics,
    /// Expected tests relative to testing everyone individually.
    pub relative_tests: f64,
    /// `e_fn / ((1 - Se_I) p) - 1`
    pub relative_fn_increase: f64,
    /// Dominated within its own procedure family.
    pub dominated: bool,
    /// Dominated by any point at the same prevalence.
    pub dominated_joint: bool,
}

impl ParetoPoint {
    pub fn new(p: Prevalence, config: ProcedureConfig, metrics: Metrics, se_i: f64) -> Self {
        let baseline_fn = (1.0 - se_i) * p.get();
        Self {
            p,
            config,
            metrics,
            relative_tests: metrics.e_tests,
            relative_fn_increase: metrics.e_fn / baseline_fn - 1.0,
            dominated: false,
            dominated_joint: false,
        }
    }

    pub fn kind(&self) -> ProcedureKind {
        self.config.kind
    }
}

/// `a` dominates `b`: no worse on both objectives, strictly better on one.
pub fn dominates(a: &Metrics, b: &Metrics, eps: f64) -> bool {
    let no_worse = a.e_tests <= b.e_tests + eps && a.e_fn <= b.e_fn + eps;
    let better = a.e_tests < b.e_tests - eps || a.e_fn < b.e_fn - eps;
    no_worse && better
}

fn dominated_flags(points: &[&ParetoPoint], eps: f64) -> Vec<bool> {
    // Sort by (tests, fn); only an earlier point can dominate a later one.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (&points[a].metrics, &points[b].metrics);
        ma.e_tests.total_cmp(&mb.e_tests).then(ma.e_fn.total_cmp(&mb.e_fn))
    });
    let mut flags = vec![false; points.len()];
    if eps == 0.0 {
        let mut best_fn = f64::INFINITY;
        let mut i = 0;
        while i < order.len() {
            // Group exact ties on e_tests.
            let t = points[order[i]].metrics.e_tests;
            let mut j = i;
            while j < order.len() && points[order[j]].metrics.e_tests == t {
                j += 1;
            }
            let group_min = points[order[i]].metrics.e_fn;
            for &idx in &order[i..j] {
                let f = points[idx].metrics.e_fn;
                flags[idx] = f > group_min || f >= best_fn;
            }
            best_fn = best_fn.min(group_min);
            i = j;
        }
    } else {
        for (a, pa) in points.iter().enumerate() {
            flags[a] = points.iter().any(|pb| dominates(&pb.metrics, &pa.metrics, eps));
        }
    }
    flags
}

/// Non-dominated subset, in input order. Exact duplicates all survive.
pub fn pareto_filter(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    pareto_filter_eps(points, 0.0)
}

pub fn pareto_filter_eps(points: &[ParetoPoint], eps: f64) -> Vec<ParetoPoint> {
    let refs: Vec<&ParetoPoint> = points.iter().collect();
    let flags = dominated_flags(&refs, eps);
    points.iter().zip(flags).filter(|(_, d)| !d).map(|(p, _)| *p).collect()
}

/// Evaluates the grid and marks dominance per family and jointly.
///
/// Output is ordered by prevalence (as given), then kind, `n`, `r`.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<ParetoPoint>> {
    spec.validate()?;
    let configs = spec.configs();
    let se_i = spec.model.kit.se_i;
    let mut out = Vec::with_capacity(configs.len() * spec.prevalences.len());
    for &p in &spec.prevalences {
        let mut block: Vec<ParetoPoint> = eval_grid(&spec.model, p, &configs)
            .into_iter()
            .zip(&configs)
            .map(|(m, c)| ParetoPoint::new(p, *c, m, se_i))
            .collect();
        block.sort_by_key(|pt| pt.config);
        mark_dominance(&mut block, spec.epsilon);
        out.extend(block);
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
fn eval_grid(model: &DilutionModel, p: Prevalence, configs: &[ProcedureConfig]) -> Vec<Metrics> {
    use rayon::prelude::*;
    configs.par_iter().map(|c| evaluate(model, p, c)).collect()
}

#[cfg(not(feature = "parallel"))]
fn eval_grid(model: &DilutionModel, p: Prevalence, configs: &[ProcedureConfig]) -> Vec<Metrics> {
    configs.iter().map(|c| evaluate(model, p, c)).collect()
}

/// Recomputes both dominance flags for points sharing one prevalence.
pub fn mark_dominance(points: &mut [ParetoPoint], eps: f64) {
    let joint = {
        let refs: Vec<&ParetoPoint> = points.iter().collect();
        dominated_flags(&refs, eps)
    };
    for kind in [
        ProcedureKind::Individual,
        ProcedureKind::Dorfman,
        ProcedureKind::Modified,
    ] {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].kind() == kind).collect();
        let refs: Vec<&ParetoPoint> = idx.iter().map(|&i| &points[i]).collect();
        let flags = dominated_flags(&refs, eps);
        for (i, d) in idx.into_iter().zip(flags) {
            points[i].dominated = d;
        }
    }
    for (pt, d) in points.iter_mut().zip(joint) {
        pt.dominated_joint = d;
    }
}

/// Cheapest point whose false-negative increase stays within `cap` and which
/// needs fewer tests than individual testing. Ties go to smaller `r`, then
/// smaller `n`.
pub fn min_tests_under_fn_cap(points: &[ParetoPoint], cap: f64) -> Option<ParetoPoint> {
    points
        .iter()
        .filter(|pt| pt.relative_fn_increase <= cap && pt.relative_tests < 1.0)
        .min_by(|a, b| {
            a.relative_tests
                .total_cmp(&b.relative_tests)
                .then(a.config.r.cmp(&b.config.r))
                .then(a.config.n.cmp(&b.config.n))
        })
        .copied()
}

/// How per-family false-positive rates are reduced to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpAggregation {
    /// Mean over the points not dominated within their own family.
    OwnFrontMean,
    /// Mean over the family's points on the joint front.
    JointFrontMean,
    /// Value at the family's front point with the fewest expected tests.
    MinTestsPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FpSummary {
    pub individual: Option<f64>,
    pub dorfman: Option<f64>,
    pub modified: Option<f64>,
}

/// False-positive summary per procedure family; `None` for an empty front.
/// `points` must share one prevalence and carry fresh dominance flags.
pub fn fp_summary(points: &[ParetoPoint], aggregation: FpAggregation) -> FpSummary {
    let family = |kind: ProcedureKind| -> Option<f64> {
        let front: Vec<&ParetoPoint> = points
            .iter()
            .filter(|pt| pt.kind() == kind)
            .filter(|pt| match aggregation {
                FpAggregation::JointFrontMean => !pt.dominated_joint,
                _ => !pt.dominated,
            })
            .collect();
        if front.is_empty() {
            return None;
        }
        match aggregation {
            FpAggregation::MinTestsPoint => front
                .iter()
                .min_by(|a, b| a.metrics.e_tests.total_cmp(&b.metrics.e_tests))
                .map(|pt| pt.metrics.e_fp),
            _ => Some(front.iter().map(|pt| pt.metrics.e_fp).sum::<f64>() / front.len() as f64),
        }
    };
    FpSummary {
        individual: points
            .iter()
            .find(|pt| pt.kind() == ProcedureKind::Individual)
            .map(|pt| pt.metrics.e_fp),
        dorfman: family(ProcedureKind::Dorfman),
        modified: family(ProcedureKind::Modified),
    }
}

/// Splits a sweep into consecutive same-prevalence blocks.
pub fn by_prevalence(points: &[ParetoPoint]) -> Vec<&[ParetoPoint]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=points.len() {
        if i == points.len() || points[i].p != points[start].p {
            if i > start {
                out.push(&points[start..i]);
            }
            start = i;
        }
    }
    out
}
