//! Pooled screening analysis: the Dorfman two-stage procedure and its
//! repeat-negative variant under a dilution-dependent pool sensitivity.
//!
//! - [`prob`]: binomial and pool-outcome probabilities
//! - [`dilution`]: the pool sensitivity model and its fitter ([`fit`])
//! - [`analytic`]: closed-form expected tests, false negatives and false positives
//! - [`sim`]: Monte Carlo execution of the procedures
//! - [`pareto`]: `(n, r)` grid sweeps and Pareto filtering
//! - [`report`]: summary tables and CSV artifacts

pub mod analytic;
pub mod dilution;
mod error;
pub mod fit;
pub mod pareto;
pub mod prob;
pub mod report;
pub mod sim;

pub use analytic::{eval_dorfman, eval_individual, eval_modified, evaluate, Metrics, ProcedureConfig, ProcedureKind};
pub use dilution::{DilutionModel, LinearTerm, PoolSensitivity, RatioOrientation, SensitivityObservation, TestKit};
pub use error::{BestSoFar, Error, Result};
pub use fit::{fit_dilution_model, fit_dilution_model_with, FitOptions, FitOutcome};
pub use pareto::{pareto_filter, sweep, FpAggregation, ParetoPoint, SweepSpec};
pub use prob::Prevalence;
pub use sim::{simulate, verify_against_analytic, SimConfig, SimResult};
