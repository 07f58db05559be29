use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A physical parameter lies outside the domain of its boundary condition.
    #[error("parameter `{name}` = {value} is out of domain: {reason}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("momentum must be positive and finite, got k = {0}")]
    Momentum(f64),

    #[error("length must be non-negative and finite, got {0}")]
    Length(f64),

    #[error("element {index}: {reason}")]
    InvalidElement { index: usize, reason: String },

    #[error("invalid momentum grid: {0}")]
    Grid(String),

    /// The outgoing-amplitude system has no unique solution at this momentum.
    #[error("spectral singularity at k = {k}")]
    SpectralSingularity { k: f64 },

    #[error("transfer matrix violates probability-current conservation (residual {residual:e})")]
    InvalidTransfer { residual: f64 },

    #[error("band fit failed: {0}")]
    Fit(String),
}
