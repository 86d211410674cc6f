use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

/// Every failure the lab can report. Variants map onto the CLI exit-code
/// contract through [`LabError::exit_code`].
#[derive(Debug, Error)]
pub enum LabError {
    #[error("direction is not a unit vector: |omega| = {norm}")]
    Domain { norm: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not hyperbolic{}: {reason}", location(.t, .omega))]
    NotHyperbolic {
        t: Option<f64>,
        omega: Option<Vec<f64>>,
        reason: String,
    },

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("tail not converged for {what}: tail {tail:.3e} exceeds tolerance {tol:.3e}")]
    TailNotConverged { what: String, tail: f64, tol: f64 },

    #[error("time grid too coarse near t = {t}: consecutive overlap {overlap:.3} < 0.5")]
    GridTooCoarse { t: f64, overlap: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    Stiffness { t: f64, h: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn location(t: &Option<f64>, omega: &Option<Vec<f64>>) -> String {
    match (t, omega) {
        (Some(t), Some(w)) => format!(" at t = {t}, omega = {w:?}"),
        (Some(t), None) => format!(" at t = {t}"),
        (None, Some(w)) => format!(" at omega = {w:?}"),
        (None, None) => String::new(),
    }
}

impl LabError {
    pub fn not_hyperbolic(reason: impl Into<String>) -> Self {
        LabError::NotHyperbolic {
            t: None,
            omega: None,
            reason: reason.into(),
        }
    }

    /// Attaches the sample location to a `NotHyperbolic` error; other
    /// variants pass through untouched.
    pub fn at(self, t: f64, omega: &[f64]) -> Self {
        match self {
            LabError::NotHyperbolic { reason, .. } => LabError::NotHyperbolic {
                t: Some(t),
                omega: Some(omega.to_vec()),
                reason,
            },
            other => other,
        }
    }

    /// Process exit code: 2 config, 3 not hyperbolic, 4 tail not converged,
    /// 5 invalid state, 1 for every other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Json(_) => 2,
            LabError::NotHyperbolic { .. } => 3,
            LabError::TailNotConverged { .. } => 4,
            LabError::InvalidState(_) => 5,
            _ => 1,
        }
    }
}
