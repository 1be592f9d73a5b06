use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes shared by every module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("invalid decay hierarchy: gamma_f = {gamma_f} exceeds gamma_e = {gamma_e}")]
    InvalidHierarchy { gamma_e: f64, gamma_f: f64 },

    #[error("manifold weight {weight:e} is below the degenerate-weight floor")]
    DegenerateWeight { weight: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeFailure { t: f64, h: f64 },

    #[error("positivity violated at t = {t}: smallest eigenvalue {min_eigenvalue:e}")]
    PositivityViolation { t: f64, min_eigenvalue: f64 },

    #[error("two slowest modes are degenerate (gap {gap:e}); integrate from an initial state instead")]
    DegenerateGap { gap: f64 },

    #[error("no trajectory survives post-selection at t = {t}")]
    EmptyEnsemble { t: f64 },

    #[error("every shot was discarded by post-selection")]
    AllShotsDiscarded,

    #[error("no interior minimum of the stationarity signal")]
    NoMinimum,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("rank-deficient Jacobian")]
    RankDeficient,
}

impl Error {
    /// Failures caused by sampling statistics rather than by numerics or input.
    pub fn is_statistical(&self) -> bool {
        matches!(self, Error::EmptyEnsemble { .. } | Error::AllShotsDiscarded)
    }

    /// Failures caused by invalid input parameters.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams { .. } | Error::InvalidHierarchy { .. } | Error::Precondition(_)
        )
    }
}
