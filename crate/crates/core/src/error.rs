use thiserror::Error;

/// Errors raised by the analytic solvers and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("hyper-exponential law needs at least one phase")]
    EmptyPhases,
    #[error("non-positive parameter: {name} = {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("phase weights sum to {sum}, expected 1")]
    WeightsNotNormalized { sum: f64 },
    #[error("negative argument: {name} = {value}")]
    NegativeArgument { name: &'static str, value: f64 },
    #[error("evaluation at pole s = {s} (rate {rate})")]
    PoleEvaluation { s: f64, rate: f64 },
    #[error("unstable: rho = {rho} >= 1")]
    UnstableSystem { rho: f64 },
    #[error("no sign change in root bracket {index} ({lo}, {hi})")]
    BracketFailure { index: usize, lo: f64, hi: f64 },
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("singular matrix in dense solve")]
    SingularMatrix,
    #[error("unstable simulation config: rho = {rho} >= 1")]
    UnstableConfig { rho: f64 },
    #[error("invalid size bins: {0}")]
    InvalidBins(String),
    #[error("invalid batch law: {0}")]
    InvalidBatchLaw(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeArgument { name, value })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}
