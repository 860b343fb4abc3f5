//! Probability kernels shared by the evaluators.

use serde::{Deserialize, Serialize};

use crate::dilution::{repeated_se_unchecked, PoolSensitivity};
use crate::error::{domain, Result};

/// Probability that a subject is positive, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Prevalence(f64);

impl Prevalence {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p < 1.0 {
            Ok(Self(p))
        } else {
            domain(format!("prevalence must be in (0, 1), got {p}"))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Prevalence {
    type Error = crate::Error;

    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<Prevalence> for f64 {
    fn from(p: Prevalence) -> f64 {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolShape {
    n: u32,
    k: u32,
}

impl PoolShape {
    pub fn new(n: u32, k: u32) -> Result<Self> {
        if n == 0 || k > n {
            return domain(format!("pool shape needs n >= 1 and 0 <= k <= n, got n={n}, k={k}"));
        }
        Ok(Self { n, k })
    }

    pub fn n(self) -> u32 {
        self.n
    }

    pub fn k(self) -> u32 {
        self.k
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        domain(format!("{name} must be in [0, 1], got {p}"))
    }
}

/// `C(n, k) p^k (1-p)^(n-k)`, evaluated in log space.
///
/// Uses Loader's saddle-point expansion rather than differences of
/// log-factorials, which lose about `n * 1e-16` in absolute log error.
pub fn binomial_pmf(k: u32, n: u32, p: f64) -> Result<f64> {
    if k > n {
        return domain(format!("k={k} exceeds n={n}"));
    }
    check_probability("p", p)?;
    Ok(pmf(k, n, p))
}

pub(crate) fn pmf(k: u32, n: u32, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let n_f = f64::from(n);
    if k == 0 {
        return (n_f * (-p).ln_1p()).exp();
    }
    if k == n {
        return (n_f * p.ln()).exp();
    }
    // Saddle-point form: every term is O(1), so the relative error stays
    // near machine precision even for n in the tens of thousands.
    let (x, y) = (f64::from(k), f64::from(n - k));
    let q = 1.0 - p;
    let lc =
        stirling_error(n) - stirling_error(k) - stirling_error(n - k) - deviance(x, n_f * p) - deviance(y, n_f * q);
    let lf = std::f64::consts::TAU.ln() + x.ln() + (-x / n_f).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)`.
fn stirling_error(n: u32) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15 {
        // n! is exact in f64 up to here
        let fact: f64 = (1..=n).map(f64::from).product();
        let n = f64::from(n);
        return fact.ln() - (n + 0.5) * n.ln() + n - 0.5 * std::f64::consts::TAU.ln();
    }
    let n = f64::from(n);
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// `x ln(x / np) + np - x`, evaluated without cancellation near `x = np`.
fn deviance(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / f64::from(2 * j + 1);
            if next == s {
                return next;
            }
            s = next;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Binomial weights `Pr(k; n, p)` for `k = 0..=n`.
pub(crate) fn pmf_table(n: u32, p: f64) -> Vec<f64> {
    (0..=n).map(|k| pmf(k, n, p)).collect()
}

/// Probability that a pool of `n` holds at least one positive: `1 - (1-p)^n`.
pub fn pool_positive_prob(p: f64, n: u32) -> Result<f64> {
    if n == 0 {
        return domain("pool size must be at least 1");
    }
    check_probability("p", p)?;
    if n == 1 {
        return Ok(p);
    }
    Ok(-(f64::from(n) * (-p).ln_1p()).exp_m1())
}

/// Sensitivity of a pool test averaged over the number of positives, given
/// that the pool holds at least one.
pub fn pool_sensitivity_avg<M: PoolSensitivity + ?Sized>(model: &M, n: u32, p: f64) -> Result<f64> {
    let p_pool = pool_positive_prob(p, n)?;
    if p_pool == 0.0 {
        return domain("pool positivity probability is zero; average sensitivity undefined");
    }
    let weighted: f64 = (1..=n).map(|k| model.pool_se(n, k) * pmf(k, n, p)).sum();
    Ok(weighted / p_pool)
}

/// Probabilities that a pool is declared positive or negative when a negative
/// result is retested up to `r` times in total.
///
/// For `r = 1` this is the plain single pool test.
pub fn pool_test_outcome_probs<M: PoolSensitivity + ?Sized>(
    model: &M,
    n: u32,
    p: f64,
    sp: f64,
    r: u32,
) -> Result<(f64, f64)> {
    if r == 0 {
        return domain("repeat count must be at least 1");
    }
    if n == 0 {
        return domain("pool size must be at least 1");
    }
    check_probability("p", p)?;
    check_probability("sp", sp)?;
    let weights = pmf_table(n, p);
    let sp_r = sp.powi(r as i32);
    let mut positive = (1.0 - sp_r) * weights[0];
    let mut negative = sp_r * weights[0];
    for k in 1..=n {
        let se = model.pool_se(n, k);
        positive += repeated_se_unchecked(se, r) * weights[k as usize];
        negative += (1.0 - se).powi(r as i32) * weights[k as usize];
    }
    Ok((positive, negative))
}
