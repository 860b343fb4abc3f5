//! Dilution-dependent pool sensitivity.
//!
//! A pool of `n` specimens holding `k` positives is detected with probability
//!
//! ```text
//! Se(n, k) = 1 - Sp + (Se_I + Sp - 1) * (k / n)^alpha + beta * n
//! ```
//!
//! clamped to `[0, 1]`. The dilution ratio and the variable multiplying `beta`
//! are both configurable (see [`RatioOrientation`] and [`LinearTerm`]); the
//! defaults are the forms that reproduce measured PCR pool sensitivities.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Individual-test characteristics of an assay.
///
/// The specificity is shared by pool and individual tests: a pool with no
/// positive specimen looks exactly like a negative individual sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestKit {
    pub se_i: f64,
    pub sp: f64,
}

impl TestKit {
    pub fn new(se_i: f64, sp: f64) -> Result<Self> {
        if !(se_i > 0.0 && se_i <= 1.0) {
            return domain(format!("individual sensitivity must be in (0, 1], got {se_i}"));
        }
        if !(sp > 0.0 && sp <= 1.0) {
            return domain(format!("specificity must be in (0, 1], got {sp}"));
        }
        Ok(Self { se_i, sp })
    }

    pub fn perfect() -> Self {
        Self { se_i: 1.0, sp: 1.0 }
    }
}

impl Default for TestKit {
    fn default() -> Self {
        Self { se_i: 0.99, sp: 0.99 }
    }
}

/// Which dilution ratio is raised to `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioOrientation {
    /// `(k/n)^alpha`: sensitivity falls as the positive fraction shrinks.
    #[default]
    KOverN,
    /// `(n/k)^alpha`: the inverse ratio; needs `alpha < 0` to model dilution.
    NOverK,
}

/// Variable multiplying `beta` in the linear correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearTerm {
    /// `beta * n`, the total amount of material in the pool.
    #[default]
    PoolSize,
    /// `beta * k`, the number of positive specimens.
    PositiveCount,
}

/// Anything that can report the sensitivity of a single pool test.
///
/// The evaluators and the simulator are generic over this so that tabulated
/// or idealised sensitivities can be plugged in next to [`DilutionModel`].
pub trait PoolSensitivity: Sync {
    fn kit(&self) -> TestKit;

    /// Sensitivity of one test of a pool of size `n` holding `k >= 1`
    /// positives. Callers guarantee `1 <= k <= n`.
    fn pool_se(&self, n: u32, k: u32) -> f64;
}

/// Result of evaluating the dilution formula, before and after clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityEval {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilutionModel {
    pub kit: TestKit,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub orientation: RatioOrientation,
    #[serde(default)]
    pub linear_term: LinearTerm,
}

pub const PCR_FIT_ALPHA: f64 = 0.032482;
pub const PCR_FIT_BETA: f64 = -0.001255;

impl DilutionModel {
    pub fn new(kit: TestKit, alpha: f64, beta: f64) -> Self {
        Self {
            kit,
            alpha,
            beta,
            orientation: RatioOrientation::default(),
            linear_term: LinearTerm::default(),
        }
    }

    /// Parameters fitted to the published SARS-CoV-2 PCR pooling data, with
    /// `Se_I = Sp = 0.99`.
    pub fn pcr_fit() -> Self {
        Self::new(TestKit::default(), PCR_FIT_ALPHA, PCR_FIT_BETA)
    }

    /// A model whose pools are exactly as sensitive as individual tests.
    pub fn no_dilution(kit: TestKit) -> Self {
        Self::new(kit, 0.0, 0.0)
    }

    pub fn with_orientation(mut self, orientation: RatioOrientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_linear_term(mut self, linear_term: LinearTerm) -> Self {
        self.linear_term = linear_term;
        self
    }

    /// Unclamped formula value; the fitter works on this.
    pub fn raw_sensitivity(&self, n: u32, k: u32) -> f64 {
        let (n, k) = (f64::from(n), f64::from(k));
        let ratio = match self.orientation {
            RatioOrientation::KOverN => k / n,
            RatioOrientation::NOverK => n / k,
        };
        let linear = match self.linear_term {
            LinearTerm::PoolSize => n,
            LinearTerm::PositiveCount => k,
        };
        let TestKit { se_i, sp } = self.kit;
        1.0 - sp + (se_i + sp - 1.0) * ratio.powf(self.alpha) + self.beta * linear
    }

    pub fn evaluate(&self, n: u32, k: u32) -> Result<SensitivityEval> {
        check_shape(n, k)?;
        let raw = self.raw_sensitivity(n, k);
        let value = raw.clamp(0.0, 1.0);
        Ok(SensitivityEval {
            value,
            raw,
            clamped: value != raw,
        })
    }

    /// Pool sensitivity `Se(n, k)`, clamped to a valid probability.
    pub fn sensitivity(&self, n: u32, k: u32) -> Result<f64> {
        self.evaluate(n, k).map(|e| e.value)
    }

    /// Sensitivity of a pool test repeated up to `r` times that is declared
    /// positive on the first positive result.
    pub fn repeated_sensitivity(&self, n: u32, k: u32, r: u32) -> Result<f64> {
        repeated_pool_sensitivity(self.sensitivity(n, k)?, r)
    }
}

impl PoolSensitivity for DilutionModel {
    fn kit(&self) -> TestKit {
        self.kit
    }

    fn pool_se(&self, n: u32, k: u32) -> f64 {
        self.raw_sensitivity(n, k).clamp(0.0, 1.0)
    }
}

/// A pool sensitivity that ignores the pool composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSensitivity {
    pub kit: TestKit,
    pub se: f64,
}

impl PoolSensitivity for ConstantSensitivity {
    fn kit(&self) -> TestKit {
        self.kit
    }

    fn pool_se(&self, _n: u32, _k: u32) -> f64 {
        self.se
    }
}

fn check_shape(n: u32, k: u32) -> Result<()> {
    if k == 0 || k > n {
        return domain(format!("positive count must satisfy 1 <= k <= n, got k={k}, n={n}"));
    }
    Ok(())
}

/// `1 - (1 - se)^r`
pub fn repeated_pool_sensitivity(se: f64, r: u32) -> Result<f64> {
    if r == 0 {
        return domain("repeat count must be at least 1");
    }
    if !(0.0..=1.0).contains(&se) {
        return domain(format!("sensitivity must be in [0, 1], got {se}"));
    }
    Ok(repeated_se_unchecked(se, r))
}

/// `sp^r`: a truly negative pool survives `r` tests only if every one is negative.
pub fn repeated_specificity(sp: f64, r: u32) -> Result<f64> {
    if r == 0 {
        return domain("repeat count must be at least 1");
    }
    if !(0.0..=1.0).contains(&sp) {
        return domain(format!("specificity must be in [0, 1], got {sp}"));
    }
    Ok(sp.powi(r as i32))
}

#[inline]
pub(crate) fn repeated_se_unchecked(se: f64, r: u32) -> f64 {
    1.0 - (1.0 - se).powi(r as i32)
}

/// One measured pool sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityObservation {
    pub n: u32,
    pub k: u32,
    #[serde(rename = "se")]
    pub se_observed: f64,
}

impl SensitivityObservation {
    pub fn new(n: u32, k: u32, se_observed: f64) -> Result<Self> {
        check_shape(n, k)?;
        if !(0.0..=1.0).contains(&se_observed) {
            return domain(format!("observed sensitivity must be in [0, 1], got {se_observed}"));
        }
        Ok(Self { n, k, se_observed })
    }
}

/// Single-positive pool sensitivities for pools of 1, 5, 10 and 50.
pub fn pcr_observations() -> Vec<SensitivityObservation> {
    [(1, 0.99), (5, 0.93), (10, 0.91), (50, 0.81)]
        .into_iter()
        .map(|(n, se)| SensitivityObservation {
            n,
            k: 1,
            se_observed: se,
        })
        .collect()
}

/// Reads observations from CSV with header `n,k,se`.
pub fn read_observations<R: std::io::Read>(reader: R) -> Result<Vec<SensitivityObservation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["n", "k", "se"] {
        return domain(format!(
            "observation CSV header must be `n,k,se`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        ));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let obs: SensitivityObservation = row?;
        out.push(SensitivityObservation::new(obs.n, obs.k, obs.se_observed)?);
    }
    Ok(out)
}

pub fn load_observations(path: impl AsRef<std::path::Path>) -> Result<Vec<SensitivityObservation>> {
    read_observations(std::fs::File::open(path)?)
}
