use thiserror::Error;

/// Parameters recovered by the fitter at the point it gave up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestSoFar {
    pub alpha: f64,
    pub beta: f64,
    pub mse: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit did not converge after {iterations} iterations (best alpha={}, beta={}, mse={})", best.alpha, best.beta, best.mse)]
    NonConvergence { iterations: usize, best: BestSoFar },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
