use thiserror::Error;

/// Errors raised by model construction, equilibrium solves, time stepping
/// and Lyapunov evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("{what} is undefined for argument {value:e}")]
    Domain { what: &'static str, value: f64 },

    #[error("implicit endpoint weight {weight} >= 1 at step {delta}; reduce the step size")]
    StepTooLarge { weight: f64, delta: f64 },

    #[error("state at t = {t} is not warm (needs t >= {tau_bar})")]
    NotWarm { t: f64, tau_bar: f64 },

    #[error("failed to bracket the endemic force of infection after {doublings} doublings")]
    Bracketing { doublings: usize },

    #[error("endemic identity violated: etabar * kernel mass = {value}")]
    Consistency { value: f64 },

    #[error("no endemic equilibrium exists (R0 = {r0})")]
    NoEndemic { r0: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<ModelError>,
    },
}

impl ModelError {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        ModelError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Strips any `AtTime` wrappers.
    pub fn root_cause(&self) -> &ModelError {
        match self {
            ModelError::AtTime { source, .. } => source.root_cause(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
