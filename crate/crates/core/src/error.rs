//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// The adaptive step controller drove the step size below the
    /// representable floor without meeting the error tolerance.
    #[error("integrator failure: step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    /// Safety cap on the number of accepted steps for a single arc.
    #[error("integrator failure: step budget exhausted at t = {t:.6e}")]
    StepBudgetExhausted { t: f64 },

    /// The switching function stayed at numerical zero over a sustained
    /// stretch while the reduced costate was nonzero, so the bang control is
    /// not determined by sign maximization. Singular arcs are reported, not
    /// silently integrated.
    #[error("degenerate arc: switching function identically zero near t = {t:.6e}")]
    DegenerateArc { t: f64 },

    /// The linear system fixing the seed costate is singular for this seed.
    #[error("singular seed: {0}")]
    SingularSeed(String),

    /// Scalar root search on the seed parameter failed to bracket or
    /// converge.
    #[error("shooting failed: {0}")]
    ShootingFailed(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
