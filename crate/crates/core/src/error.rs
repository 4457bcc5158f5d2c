use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrator failed at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("steady state is ambiguous: Liouvillian null space has dimension {nullity}")]
    AmbiguousSteadyState { nullity: usize },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("outside validity regime: {0}")]
    Regime(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure is numerical (as opposed to a bad input or contract).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integrator { .. }
                | Error::AmbiguousSteadyState { .. }
                | Error::Quadrature(_)
                | Error::Fit(_)
                | Error::Regime(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
