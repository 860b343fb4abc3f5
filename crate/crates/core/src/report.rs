//! Summary tables and CSV artifacts built from a sweep.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::analytic::{Metrics, ProcedureConfig, ProcedureKind};
use crate::error::Result;
use crate::pareto::{by_prevalence, fp_summary, min_tests_under_fn_cap, FpAggregation, ParetoPoint};
use crate::prob::Prevalence;
use crate::sim::{MrseCell, VerificationRow};

/// False-negative increase caps of the minimum-tests table.
pub const FN_CAPS: [f64; 3] = [0.01, 0.1, 1.0];

/// Formats `x` with six significant digits in plain decimal notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-7..=15).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinTestsCell {
    pub cap: f64,
    pub point: Option<ParetoPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinTestsRow {
    pub p: Prevalence,
    pub cells: Vec<MinTestsCell>,
}

/// For each prevalence and cap, the cheapest repeat-negative setting.
pub fn min_tests_table(points: &[ParetoPoint], caps: &[f64]) -> Vec<MinTestsRow> {
    by_prevalence(points)
        .into_iter()
        .map(|block| {
            let modified: Vec<ParetoPoint> = block
                .iter()
                .filter(|pt| pt.kind() == ProcedureKind::Modified)
                .copied()
                .collect();
            MinTestsRow {
                p: block[0].p,
                cells: caps
                    .iter()
                    .map(|&cap| MinTestsCell {
                        cap,
                        point: min_tests_under_fn_cap(&modified, cap),
                    })
                    .collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpRow {
    pub p: Prevalence,
    pub individual: Option<f64>,
    pub min_tests: (Option<f64>, Option<f64>),
    pub own_front_mean: (Option<f64>, Option<f64>),
    pub joint_front_mean: (Option<f64>, Option<f64>),
}

pub fn fp_table(points: &[ParetoPoint]) -> Vec<FpRow> {
    by_prevalence(points)
        .into_iter()
        .map(|block| {
            let pair = |agg| {
                let s = fp_summary(block, agg);
                (s.dorfman, s.modified)
            };
            FpRow {
                p: block[0].p,
                individual: fp_summary(block, FpAggregation::MinTestsPoint).individual,
                min_tests: pair(FpAggregation::MinTestsPoint),
                own_front_mean: pair(FpAggregation::OwnFrontMean),
                joint_front_mean: pair(FpAggregation::JointFrontMean),
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

pub fn write_min_tests_csv<W: Write>(rows: &[MinTestsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "p",
        "fn_increase_cap",
        "relative_tests",
        "n",
        "r",
        "relative_fn_increase",
    ])?;
    for row in rows {
        for cell in &row.cells {
            let (t, n, r, f) = match cell.point {
                Some(pt) => (
                    sig6(pt.relative_tests),
                    pt.config.n.to_string(),
                    pt.config.r.to_string(),
                    sig6(pt.relative_fn_increase),
                ),
                None => Default::default(),
            };
            w.write_record([sig6(row.p.get()), sig6(cell.cap), t, n, r, f])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fp_csv<W: Write>(rows: &[FpRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "p",
        "individual",
        "dorfman",
        "modified",
        "dorfman_front_mean",
        "modified_front_mean",
        "dorfman_joint_front_mean",
        "modified_joint_front_mean",
    ])?;
    for row in rows {
        w.write_record([
            sig6(row.p.get()),
            opt(row.individual),
            opt(row.min_tests.0),
            opt(row.min_tests.1),
            opt(row.own_front_mean.0),
            opt(row.own_front_mean.1),
            opt(row.joint_front_mean.0),
            opt(row.joint_front_mean.1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One line of the sweep grid CSV. Floats are written in shortest
/// round-trip form so tables rebuilt from the file match in-memory ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub p: f64,
    pub kind: ProcedureKind,
    pub n: u32,
    pub r: u32,
    pub e_tests: f64,
    pub e_fn: f64,
    pub e_fp: f64,
    pub relative_tests: f64,
    pub relative_fn_increase: f64,
    pub dominated: bool,
    pub dominated_joint: bool,
    pub e_tests_individual_stage: f64,
}

impl From<&ParetoPoint> for SweepRecord {
    fn from(pt: &ParetoPoint) -> Self {
        Self {
            p: pt.p.get(),
            kind: pt.config.kind,
            n: pt.config.n,
            r: pt.config.r,
            e_tests: pt.metrics.e_tests,
            e_fn: pt.metrics.e_fn,
            e_fp: pt.metrics.e_fp,
            relative_tests: pt.relative_tests,
            relative_fn_increase: pt.relative_fn_increase,
            dominated: pt.dominated,
            dominated_joint: pt.dominated_joint,
            e_tests_individual_stage: pt.metrics.e_tests_individual_stage,
        }
    }
}

impl TryFrom<SweepRecord> for ParetoPoint {
    type Error = crate::Error;

    fn try_from(r: SweepRecord) -> Result<Self> {
        Ok(Self {
            p: Prevalence::new(r.p)?,
            config: ProcedureConfig::new(r.kind, r.n, r.r)?,
            metrics: Metrics {
                e_tests: r.e_tests,
                e_fn: r.e_fn,
                e_fp: r.e_fp,
                e_tests_individual_stage: r.e_tests_individual_stage,
                stages: None,
            },
            relative_tests: r.relative_tests,
            relative_fn_increase: r.relative_fn_increase,
            dominated: r.dominated,
            dominated_joint: r.dominated_joint,
        })
    }
}

pub fn write_sweep_csv<'a, W: Write>(points: impl IntoIterator<Item = &'a ParetoPoint>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "p",
        "kind",
        "n",
        "r",
        "e_tests",
        "e_fn",
        "e_fp",
        "relative_tests",
        "relative_fn_increase",
        "dominated",
        "dominated_joint",
        "e_tests_individual_stage",
    ])?;
    for pt in points {
        w.serialize(SweepRecord::from(pt))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<ParetoPoint>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize::<SweepRecord>()
        .map(|row| ParetoPoint::try_from(row?))
        .collect()
}

/// Per-configuration simulation counts next to the closed-form values.
pub fn write_simulation_csv<W: Write>(rows: &[VerificationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "p",
        "kind",
        "n",
        "r",
        "subjects",
        "seed",
        "tests",
        "false_negatives",
        "false_positives",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for metric in ["e_tests", "e_fn", "e_fp"] {
        for suffix in ["simulated", "std_error", "analytic", "z"] {
            header.push(format!("{metric}_{suffix}"));
        }
    }
    w.write_record(&header)?;
    for row in rows {
        let c = &row.config;
        let mut rec = vec![
            c.p.get().to_string(),
            c.procedure.kind.to_string(),
            c.procedure.n.to_string(),
            c.procedure.r.to_string(),
            c.subjects.to_string(),
            c.seed.to_string(),
            row.result.tests.to_string(),
            row.result.false_negatives.to_string(),
            row.result.false_positives.to_string(),
        ];
        for m in &row.comparisons {
            rec.extend([m.simulated, m.std_error, m.analytic, m.z_score()].map(|x| x.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mrse_csv<W: Write>(cells: &[MrseCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "metric", "configs", "mrse", "max_abs_error_at_zero"])?;
    for c in cells {
        let show = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            c.kind.to_string(),
            c.metric.as_str().to_string(),
            c.configs.to_string(),
            show(c.mrse),
            show(c.max_abs_error_at_zero),
        ])?;
    }
    w.flush()?;
    Ok(())
}
