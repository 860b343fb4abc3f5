//! Closed-form per-subject metrics for individual testing, the two-stage
//! Dorfman procedure, and the repeat-negative variant.
//!
//! In the repeat-negative procedure a pool whose test is negative is tested
//! again, up to `r` tests in total, and declared positive on the first
//! positive result. Every subject of a pool declared positive is then tested
//! individually. The Dorfman procedure is the `r = 1` case.
//!
//! All metrics are expectations per subject. The sums run over `k`, the number
//! of positives in a pool; `Pr(k-1; n-1, p)` is the distribution of `k` seen
//! from a subject already known to be positive.

use serde::{Deserialize, Serialize};

use crate::dilution::{repeated_se_unchecked, PoolSensitivity, TestKit};
use crate::error::{domain, Result};
use crate::prob::{pmf_table, Prevalence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcedureKind {
    Individual,
    Dorfman,
    Modified,
}

impl ProcedureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Individual => "individual",
            Self::Dorfman => "dorfman",
            Self::Modified => "modified",
        }
    }
}

impl std::fmt::Display for ProcedureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProcedureKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "individual" => Ok(Self::Individual),
            "dorfman" => Ok(Self::Dorfman),
            "modified" => Ok(Self::Modified),
            other => domain(format!("unknown procedure kind `{other}`")),
        }
    }
}

/// A procedure together with its pool size and repeat count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProcedureConfig {
    pub kind: ProcedureKind,
    pub n: u32,
    pub r: u32,
}

impl ProcedureConfig {
    pub fn new(kind: ProcedureKind, n: u32, r: u32) -> Result<Self> {
        let ok = match kind {
            ProcedureKind::Individual => n == 1 && r == 1,
            ProcedureKind::Dorfman => n >= 2 && r == 1,
            ProcedureKind::Modified => n >= 2 && r >= 2,
        };
        if !ok {
            return domain(format!("invalid {kind} configuration n={n}, r={r}"));
        }
        Ok(Self { kind, n, r })
    }

    pub fn individual() -> Self {
        Self {
            kind: ProcedureKind::Individual,
            n: 1,
            r: 1,
        }
    }

    pub fn dorfman(n: u32) -> Result<Self> {
        Self::new(ProcedureKind::Dorfman, n, 1)
    }

    pub fn modified(n: u32, r: u32) -> Result<Self> {
        Self::new(ProcedureKind::Modified, n, r)
    }
}

/// Split of the expected false negatives and tests by stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageBreakdown {
    /// Positives lost because their pool was declared negative.
    pub e_fn_pool_stage: f64,
    /// Positives whose pool was caught but whose individual test missed.
    pub e_fn_individual_stage: f64,
    /// First-round pool tests, `1/n`.
    pub e_pool_tests: f64,
    /// Pool retests after a negative result.
    pub e_retests: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub e_tests: f64,
    pub e_fn: f64,
    pub e_fp: f64,
    pub e_tests_individual_stage: f64,
    #[serde(skip)]
    pub stages: Option<StageBreakdown>,
}

/// Every subject tested once on its own.
pub fn eval_individual(kit: TestKit, p: Prevalence) -> Metrics {
    let p = p.get();
    let e_fn = (1.0 - kit.se_i) * p;
    Metrics {
        e_tests: 1.0,
        e_fn,
        e_fp: (1.0 - kit.sp) * (1.0 - p),
        e_tests_individual_stage: 1.0,
        stages: Some(StageBreakdown {
            e_fn_individual_stage: e_fn,
            ..StageBreakdown::default()
        }),
    }
}

pub fn eval_dorfman<M: PoolSensitivity + ?Sized>(model: &M, p: Prevalence, n: u32) -> Result<Metrics> {
    if n < 2 {
        return domain(format!("Dorfman pools need n >= 2, got {n}"));
    }
    Ok(eval_pooled(model, p.get(), n, 1))
}

/// Repeat-negative procedure; `r = 1` gives the Dorfman metrics exactly.
pub fn eval_modified<M: PoolSensitivity + ?Sized>(model: &M, p: Prevalence, n: u32, r: u32) -> Result<Metrics> {
    if n < 2 {
        return domain(format!("pooled procedures need n >= 2, got {n}"));
    }
    if r == 0 {
        return domain("repeat count must be at least 1");
    }
    Ok(eval_pooled(model, p.get(), n, r))
}

pub fn evaluate<M: PoolSensitivity + ?Sized>(model: &M, p: Prevalence, config: &ProcedureConfig) -> Metrics {
    match config.kind {
        ProcedureKind::Individual => eval_individual(model.kit(), p),
        ProcedureKind::Dorfman | ProcedureKind::Modified => eval_pooled(model, p.get(), config.n, config.r),
    }
}

pub(crate) fn eval_pooled<M: PoolSensitivity + ?Sized>(model: &M, p: f64, n: u32, r: u32) -> Metrics {
    let TestKit { se_i, sp } = model.kit();
    let pool = pmf_table(n, p);
    let given_positive = pmf_table(n - 1, p);
    let se: Vec<f64> = (0..=n)
        .map(|k| if k == 0 { 0.0 } else { model.pool_se(n, k) })
        .collect();

    let sp_r = sp.powi(r as i32);
    let mut declared_positive = (1.0 - sp_r) * pool[0];
    // Probability that a positive subject's pool is declared positive.
    let mut caught = 0.0;
    let mut missed = 0.0;
    let mut fn_total = 0.0;
    for k in 1..=n as usize {
        let se_r = repeated_se_unchecked(se[k], r);
        declared_positive += se_r * pool[k];
        caught += se_r * given_positive[k - 1];
        missed += (1.0 - se_r) * given_positive[k - 1];
        fn_total += (1.0 - se_i * se_r) * given_positive[k - 1];
    }

    let mut retests = 0.0;
    for l in 1..r as i32 {
        let mut still_negative = pool[0] * sp.powi(l);
        for k in 1..=n as usize {
            still_negative += (1.0 - se[k]).powi(l) * pool[k];
        }
        retests += still_negative;
    }
    let n_f = f64::from(n);
    let e_pool_tests = 1.0 / n_f;
    let e_retests = retests / n_f;

    Metrics {
        e_tests: e_pool_tests + e_retests + declared_positive,
        e_fn: p * fn_total,
        e_fp: (1.0 - sp) * (declared_positive - p * caught),
        e_tests_individual_stage: declared_positive,
        stages: Some(StageBreakdown {
            e_fn_pool_stage: p * missed,
            e_fn_individual_stage: (1.0 - se_i) * p * caught,
            e_pool_tests,
            e_retests,
        }),
    }
}

/// Pool-test outcome probabilities and the posterior probability that a
/// subject is positive given its pool's result (single pool test).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posteriors {
    pub p_pool_negative: f64,
    pub p_pool_positive: f64,
    /// `P(T=0 | subject positive)`
    pub miss_given_positive: f64,
    /// `P(T=1 | subject positive)`
    pub hit_given_positive: f64,
    /// `P(subject positive | T=0)`
    pub positive_given_negative: f64,
    /// `P(subject positive | T=1)`
    pub positive_given_positive: f64,
}

/// Bayes update of a subject's status after one pool test.
pub fn dorfman_posteriors<M: PoolSensitivity + ?Sized>(model: &M, p: Prevalence, n: u32) -> Result<Posteriors> {
    if n < 1 {
        return domain("pool size must be at least 1");
    }
    let p = p.get();
    let sp = model.kit().sp;
    let pool = pmf_table(n, p);
    let given_positive = pmf_table(n - 1, p);
    let mut p_pool_positive = (1.0 - sp) * pool[0];
    let mut p_pool_negative = sp * pool[0];
    let mut miss = 0.0;
    let mut hit = 0.0;
    for k in 1..=n as usize {
        let se = model.pool_se(n, k as u32);
        p_pool_positive += se * pool[k];
        p_pool_negative += (1.0 - se) * pool[k];
        miss += (1.0 - se) * given_positive[k - 1];
        hit += se * given_positive[k - 1];
    }
    Ok(Posteriors {
        p_pool_negative,
        p_pool_positive,
        miss_given_positive: miss,
        hit_given_positive: hit,
        positive_given_negative: miss * p / p_pool_negative,
        positive_given_positive: hit * p / p_pool_positive,
    })
}
