use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("pattern entry {entry} at slot {slot} exceeds the channel count {max}")]
    PatternRange { slot: usize, entry: usize, max: usize },

    #[error("not in periodic-vector form: {0}")]
    PatternForm(String),

    #[error("period mismatch: {0} vs {1}")]
    PeriodMismatch(usize, usize),

    #[error("composite mode count {count} exceeds the cap {cap}")]
    Capacity { count: u128, cap: usize },

    #[error("infeasible: loss probability {alpha} is not below the critical bound {bound}")]
    Infeasible { alpha: f64, bound: f64 },

    #[error("boundary-inconclusive at {rho}: {context}")]
    Boundary { rho: f64, context: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("system is not stochastically stable (rho = {rho})")]
    Unstable { rho: f64 },

    #[error("decoder rejected (spectral radius {rho}): {reason}")]
    DecoderRejected { rho: f64, reason: String },

    #[error("no finite norm bound found below {last_gamma}")]
    UnboundedNorm { last_gamma: f64 },
}
