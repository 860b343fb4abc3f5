//! Monte Carlo execution of the testing procedures.
//!
//! Subjects are grouped into consecutive pools. Pool `i` draws all of its
//! randomness (subject statuses, pool tests, individual tests) from its own
//! ChaCha8 stream, keyed by the run seed with stream id `i`, so the counts do
//! not depend on how pools are spread across threads. A trailing pool shorter
//! than `n` is tested at its actual size.
//!
//! Individual testing uses blocks of [`INDIVIDUAL_BLOCK`] subjects per stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{evaluate, Metrics, ProcedureConfig, ProcedureKind};
use crate::dilution::{DilutionModel, PoolSensitivity};
use crate::error::{domain, Result};
use crate::prob::Prevalence;

pub const INDIVIDUAL_BLOCK: u64 = 1024;
const UNITS_PER_TASK: u64 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub subjects: u64,
    pub seed: u64,
    pub procedure: ProcedureConfig,
    pub model: DilutionModel,
    pub p: Prevalence,
}

/// Event counts from one simulated run.
///
/// `sumsq_*` hold the sum over pools of the squared per-pool count, which
/// gives the between-pool variance for standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimResult {
    pub subjects: u64,
    pub positives: u64,
    pub pools: u64,
    pub pool_tests: u64,
    pub retests: u64,
    pub individual_tests: u64,
    pub tests: u64,
    pub true_positives: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub sumsq_tests: u64,
    pub sumsq_fn: u64,
    pub sumsq_fp: u64,
}

impl SimResult {
    fn merge(mut self, o: Self) -> Self {
        self.subjects += o.subjects;
        self.positives += o.positives;
        self.pools += o.pools;
        self.pool_tests += o.pool_tests;
        self.retests += o.retests;
        self.individual_tests += o.individual_tests;
        self.tests += o.tests;
        self.true_positives += o.true_positives;
        self.false_negatives += o.false_negatives;
        self.false_positives += o.false_positives;
        self.true_negatives += o.true_negatives;
        self.sumsq_tests += o.sumsq_tests;
        self.sumsq_fn += o.sumsq_fn;
        self.sumsq_fp += o.sumsq_fp;
        self
    }

    fn rate(&self, count: u64) -> f64 {
        count as f64 / self.subjects as f64
    }

    pub fn tests_per_subject(&self) -> f64 {
        self.rate(self.tests)
    }

    pub fn fn_per_subject(&self) -> f64 {
        self.rate(self.false_negatives)
    }

    pub fn fp_per_subject(&self) -> f64 {
        self.rate(self.false_positives)
    }

    fn std_error(&self, sum: u64, sumsq: u64) -> f64 {
        if self.pools < 2 {
            return f64::NAN;
        }
        let units = self.pools as f64;
        let mean = sum as f64 / units;
        let var = (sumsq as f64 / units - mean * mean).max(0.0) * units / (units - 1.0);
        (units * var).sqrt() / self.subjects as f64
    }

    pub fn tests_std_error(&self) -> f64 {
        self.std_error(self.tests, self.sumsq_tests)
    }

    pub fn fn_std_error(&self) -> f64 {
        self.std_error(self.false_negatives, self.sumsq_fn)
    }

    pub fn fp_std_error(&self) -> f64 {
        self.std_error(self.false_positives, self.sumsq_fp)
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    let plan = Plan::new(config)?;
    Ok(plan.run())
}

/// Runs on a dedicated pool of `threads` workers. The result equals
/// [`simulate`] for every thread count.
#[cfg(feature = "parallel")]
pub fn simulate_with_threads(config: &SimConfig, threads: usize) -> Result<SimResult> {
    let plan = Plan::new(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| crate::Error::Domain(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(|| plan.run()))
}

struct Plan {
    key: [u8; 32],
    kind: ProcedureKind,
    n: u64,
    r: u32,
    subjects: u64,
    units: u64,
    p: f64,
    se_i: f64,
    sp: f64,
    se_full: Vec<f64>,
    se_tail: Vec<f64>,
}

fn se_table(model: &DilutionModel, size: u64) -> Vec<f64> {
    let size = size as u32;
    (0..=size)
        .map(|k| if k == 0 { 0.0 } else { model.pool_se(size, k) })
        .collect()
}

impl Plan {
    fn new(config: &SimConfig) -> Result<Self> {
        if config.subjects == 0 {
            return domain("simulation needs at least one subject");
        }
        let proc = ProcedureConfig::new(config.procedure.kind, config.procedure.n, config.procedure.r)?;
        let kit = config.model.kit();
        let key = ChaCha8Rng::seed_from_u64(config.seed).get_seed();
        let (n, units) = match proc.kind {
            ProcedureKind::Individual => (1, config.subjects.div_ceil(INDIVIDUAL_BLOCK)),
            _ => {
                let n = u64::from(proc.n);
                (n, config.subjects.div_ceil(n))
            }
        };
        let tail = config.subjects % n;
        Ok(Self {
            key,
            kind: proc.kind,
            n,
            r: proc.r,
            subjects: config.subjects,
            units,
            p: config.p.get(),
            se_i: kit.se_i,
            sp: kit.sp,
            se_full: se_table(&config.model, n),
            se_tail: if tail == 0 {
                Vec::new()
            } else {
                se_table(&config.model, tail)
            },
        })
    }

    fn stream(&self, unit: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(unit);
        rng
    }

    fn run_task(&self, task: u64) -> SimResult {
        let start = task * UNITS_PER_TASK;
        let end = (start + UNITS_PER_TASK).min(self.units);
        (start..end).fold(SimResult::default(), |acc, u| acc.merge(self.run_unit(u)))
    }

    #[cfg(feature = "parallel")]
    fn run(&self) -> SimResult {
        use rayon::prelude::*;
        (0..self.units.div_ceil(UNITS_PER_TASK))
            .into_par_iter()
            .map(|t| self.run_task(t))
            .reduce(SimResult::default, SimResult::merge)
    }

    #[cfg(not(feature = "parallel"))]
    fn run(&self) -> SimResult {
        (0..self.units.div_ceil(UNITS_PER_TASK))
            .map(|t| self.run_task(t))
            .fold(SimResult::default(), SimResult::merge)
    }

    fn run_unit(&self, unit: u64) -> SimResult {
        let mut rng = self.stream(unit);
        match self.kind {
            ProcedureKind::Individual => self.individual_block(unit, &mut rng),
            _ => self.pool(unit, &mut rng),
        }
    }

    fn individual_block(&self, unit: u64, rng: &mut ChaCha8Rng) -> SimResult {
        let start = unit * INDIVIDUAL_BLOCK;
        let size = INDIVIDUAL_BLOCK.min(self.subjects - start);
        let mut out = SimResult {
            subjects: size,
            pools: size,
            tests: size,
            individual_tests: size,
            sumsq_tests: size,
            ..Default::default()
        };
        for _ in 0..size {
            let positive = rng.random::<f64>() < self.p;
            out.positives += u64::from(positive);
            let test_positive = if positive {
                rng.random::<f64>() < self.se_i
            } else {
                rng.random::<f64>() >= self.sp
            };
            tally_individual(&mut out, positive, test_positive);
        }
        out.sumsq_fn = out.false_negatives;
        out.sumsq_fp = out.false_positives;
        out
    }

    fn pool(&self, unit: u64, rng: &mut ChaCha8Rng) -> SimResult {
        let start = unit * self.n;
        let size = self.n.min(self.subjects - start);
        let se = if size == self.n { &self.se_full } else { &self.se_tail };

        let mut status = [false; 64];
        let mut status_vec;
        let status: &mut [bool] = if size as usize <= status.len() {
            &mut status[..size as usize]
        } else {
            status_vec = vec![false; size as usize];
            &mut status_vec
        };
        let mut k = 0usize;
        for s in status.iter_mut() {
            *s = rng.random::<f64>() < self.p;
            k += usize::from(*s);
        }

        let mut out = SimResult {
            subjects: size,
            positives: k as u64,
            pools: 1,
            pool_tests: 1,
            ..Default::default()
        };
        let p_detect = if k == 0 { 1.0 - self.sp } else { se[k] };
        let mut declared_positive = false;
        for round in 0..self.r {
            if round > 0 {
                out.retests += 1;
            }
            if rng.random::<f64>() < p_detect {
                declared_positive = true;
                break;
            }
        }

        if declared_positive {
            out.individual_tests = size;
            for &positive in status.iter() {
                let test_positive = if positive {
                    rng.random::<f64>() < self.se_i
                } else {
                    rng.random::<f64>() >= self.sp
                };
                tally_individual(&mut out, positive, test_positive);
            }
        } else {
            out.false_negatives = k as u64;
            out.true_negatives = size - k as u64;
        }
        out.tests = out.pool_tests + out.retests + out.individual_tests;
        out.sumsq_tests = out.tests * out.tests;
        out.sumsq_fn = out.false_negatives * out.false_negatives;
        out.sumsq_fp = out.false_positives * out.false_positives;
        out
    }
}

fn tally_individual(out: &mut SimResult, positive: bool, test_positive: bool) {
    match (positive, test_positive) {
        (true, true) => out.true_positives += 1,
        (true, false) => out.false_negatives += 1,
        (false, true) => out.false_positives += 1,
        (false, false) => out.true_negatives += 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Tests,
    FalseNegatives,
    FalsePositives,
}

impl MetricName {
    pub const ALL: [MetricName; 3] = [Self::Tests, Self::FalseNegatives, Self::FalsePositives];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tests => "e_tests",
            Self::FalseNegatives => "e_fn",
            Self::FalsePositives => "e_fp",
        }
    }

    fn analytic(self, m: &Metrics) -> f64 {
        match self {
            Self::Tests => m.e_tests,
            Self::FalseNegatives => m.e_fn,
            Self::FalsePositives => m.e_fp,
        }
    }

    fn simulated(self, s: &SimResult) -> (f64, f64) {
        match self {
            Self::Tests => (s.tests_per_subject(), s.tests_std_error()),
            Self::FalseNegatives => (s.fn_per_subject(), s.fn_std_error()),
            Self::FalsePositives => (s.fp_per_subject(), s.fp_std_error()),
        }
    }
}

/// One metric of one configuration, analytic against simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricComparison {
    pub metric: MetricName,
    pub analytic: f64,
    pub simulated: f64,
    pub std_error: f64,
}

impl MetricComparison {
    /// Squared relative error, or `None` when the analytic value is zero.
    pub fn relative_squared_error(&self) -> Option<f64> {
        (self.analytic != 0.0).then(|| ((self.simulated - self.analytic) / self.analytic).powi(2))
    }

    /// Discrepancy in standard errors. A zero standard error with an exact
    /// match counts as zero.
    pub fn z_score(&self) -> f64 {
        let diff = self.simulated - self.analytic;
        if diff == 0.0 {
            0.0
        } else {
            diff.abs() / self.std_error
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationRow {
    pub config: SimConfig,
    pub result: SimResult,
    pub analytic: Metrics,
    pub comparisons: [MetricComparison; 3],
}

/// Mean relative squared error of one metric over one procedure family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MrseCell {
    pub kind: ProcedureKind,
    pub metric: MetricName,
    pub mrse: Option<f64>,
    /// Largest absolute error among configurations whose analytic value is 0.
    pub max_abs_error_at_zero: Option<f64>,
    pub configs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub rows: Vec<VerificationRow>,
    pub cells: Vec<MrseCell>,
}

impl VerificationReport {
    pub fn cell(&self, kind: ProcedureKind, metric: MetricName) -> Option<&MrseCell> {
        self.cells.iter().find(|c| c.kind == kind && c.metric == metric)
    }
}

pub fn compare(config: &SimConfig, result: SimResult) -> VerificationRow {
    let analytic = evaluate(&config.model, config.p, &config.procedure);
    let comparisons = MetricName::ALL.map(|metric| {
        let (simulated, std_error) = metric.simulated(&result);
        MetricComparison {
            metric,
            analytic: metric.analytic(&analytic),
            simulated,
            std_error,
        }
    });
    VerificationRow {
        config: *config,
        result,
        analytic,
        comparisons,
    }
}

/// Aggregates per-configuration comparisons into per-family MRSE cells.
pub fn summarize(rows: Vec<VerificationRow>) -> VerificationReport {
    let mut cells = Vec::new();
    for kind in [
        ProcedureKind::Individual,
        ProcedureKind::Dorfman,
        ProcedureKind::Modified,
    ] {
        let family: Vec<&VerificationRow> = rows.iter().filter(|r| r.config.procedure.kind == kind).collect();
        if family.is_empty() {
            continue;
        }
        for (i, metric) in MetricName::ALL.into_iter().enumerate() {
            let mut rel = Vec::new();
            let mut zero_abs: Option<f64> = None;
            for row in &family {
                let c = &row.comparisons[i];
                match c.relative_squared_error() {
                    Some(e) => rel.push(e),
                    None => {
                        let e = (c.simulated - c.analytic).abs();
                        zero_abs = Some(zero_abs.map_or(e, |z| z.max(e)));
                    }
                }
            }
            let mrse = (!rel.is_empty()).then(|| rel.iter().sum::<f64>() / rel.len() as f64);
            cells.push(MrseCell {
                kind,
                metric,
                mrse,
                max_abs_error_at_zero: zero_abs,
                configs: family.len(),
            });
        }
    }
    VerificationReport { rows, cells }
}

/// Prevalences of the default verification set.
pub const VERIFICATION_PREVALENCES: [f64; 4] = [0.001, 0.01, 0.05, 0.1];

/// A fixed set spanning all three procedures: individual testing, Dorfman
/// with `n` in {5, 10, 20} and repeat-negative with `(n, r)` in
/// {(10, 2), (20, 3), (34, 5)}, at each prevalence.
pub fn verification_configs(
    model: DilutionModel,
    prevalences: &[Prevalence],
    subjects: u64,
    seed: u64,
) -> Vec<SimConfig> {
    let mut procs = vec![ProcedureConfig::individual()];
    procs.extend([5, 10, 20].map(|n| ProcedureConfig {
        kind: ProcedureKind::Dorfman,
        n,
        r: 1,
    }));
    procs.extend([(10, 2), (20, 3), (34, 5)].map(|(n, r)| ProcedureConfig {
        kind: ProcedureKind::Modified,
        n,
        r,
    }));
    prevalences
        .iter()
        .flat_map(|&p| {
            procs.iter().map(move |&procedure| SimConfig {
                subjects,
                seed,
                procedure,
                model,
                p,
            })
        })
        .collect()
}

/// Simulates every configuration and compares it with the closed forms.
pub fn verify_against_analytic(configs: &[SimConfig]) -> Result<VerificationReport> {
    let rows = configs
        .iter()
        .map(|c| simulate(c).map(|r| compare(c, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(rows))
}
