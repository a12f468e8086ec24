use thiserror::Error;

/// Errors raised by the analytic models and the allocation policies.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("residual bandwidth {0} bit/s is not positive; delay is unbounded")]
    NonPositiveResidual(f64),
    #[error("rate {rate} bit/s is not below the available bandwidth {abr} bit/s on network {network}")]
    InfeasibleRate { network: usize, rate: f64, abr: f64 },
    #[error("rate {rate} bit/s is not above the distortion-rate offset {r0} bit/s")]
    RateBelowOffset { rate: f64, r0: f64 },
    #[error("degenerate distortion-rate fit: {0}")]
    DegenerateFit(String),
    #[error("all per-stream available bit rates are zero")]
    AllZeroAbr,
    #[error("empty feasible region: upper bound {upper} bit/s <= minimum rate {min_rate} bit/s")]
    EmptyFeasibleRegion { upper: f64, min_rate: f64 },
    #[error("performance factor {gamma} does not exceed the lowest attainable {gamma_star}")]
    GammaTooSmall { gamma: f64, gamma_star: f64 },
    #[error("no stabilizing Riccati solution: {0}")]
    NoSolution(String),
    #[error("infeasible allocation problem: {0}")]
    Infeasible(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type ModelResult<T> = Result<T, ModelError>;
