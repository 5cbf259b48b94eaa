use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is not a probability")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("frozen source: q01 and q10 are both zero")]
    FrozenSource,

    #[error("degenerate joint chain: stationary normalizer is zero")]
    DegenerateChain,

    #[error("source is not symmetric (q01 = {q01}, q10 = {q10})")]
    AsymmetricSource { q01: f64, q10: f64 },

    #[error("power iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("only {batches} batches available, at least {required} needed")]
    TooFewBatches { batches: usize, required: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}
