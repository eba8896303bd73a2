use thiserror::Error;

/// Errors shared across the crate. Soft conditions (resolution concerns,
/// truncated tails) are reported through [`crate::report::Diagnostics`]
/// instead, so callers can keep partial results.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// The requested group element has no chart preimage (wrong component,
    /// or the principal logarithm lands outside the chart ball).
    #[error("group element outside the exp chart: {0}")]
    OutOfChart(String),

    /// An integral over a noncompact domain failed its tail estimate.
    #[error("integral tail estimate exceeds tolerance: {0}")]
    NonConvergent(String),

    /// Orbit-level operations require `lambda < 0`.
    #[error("unsupported orbit parameter lambda = {0} (need lambda < 0)")]
    UnsupportedOrbit(f64),

    /// An integrand carries mass outside the region where the formula
    /// in use is valid.
    #[error("support violation: {0}")]
    SupportViolation(String),

    /// A matrix point is outside the polar-coordinate region.
    #[error("matrix point outside the polar region: {0}")]
    OutOfRegion(String),

    /// A convolution or product support escaped the chart it must
    /// live in.
    #[error("support escaped the chart: {0}")]
    ChartOverflow(String),

    /// A quadrature request exceeds the documented node budget.
    #[error("quadrature budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Invalid run or model parameters.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// LAPACK failure (should not happen on well-formed input).
    #[error("eigensolver failed with info = {0}")]
    Eigen(i32),
}

pub type Result<T> = std::result::Result<T, CoreError>;
