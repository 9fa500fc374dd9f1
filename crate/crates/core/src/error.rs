use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the function (negative lag,
    /// evaluation time beyond the observation window, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data or configuration violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A required collection was empty.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// An expectation or series that the caller asked for does not converge.
    #[error("divergent: {0}")]
    Divergent(String),

    /// Closed-form popularity prediction requested for a model with n* >= 1.
    #[error("supercritical model (branching factor {branching_factor}); use simulation-based prediction")]
    Supercritical { branching_factor: f64 },

    /// No restart of the optimizer produced a finite objective.
    #[error("fit did not converge after {restarts} restarts: {diagnostic}")]
    NonConvergence {
        restarts: usize,
        best: Option<alloc::vec::Vec<f64>>,
        diagnostic: String,
    },

    #[error("unknown model type `{0}` (valid: EXP, PL, mEXP, mPL, EXPN, PLN, SEISMIC)")]
    UnknownModelType(String),
}
