use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix block is near-singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("all membership grades vanish at premise {premise:?}")]
    DegeneratePremise { premise: Vec<f64> },

    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("simulation diverged at t = {t} after {} samples", partial.len())]
    Diverged {
        t: f64,
        partial: Box<crate::sim::SimulationTrace>,
    },

    #[error("no feasible point: {0}")]
    NoFeasiblePoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Short machine-readable tag, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Input(_) | Error::Dimension { .. } => "input-error",
            Error::Singular { .. } => "singular",
            Error::DegeneratePremise { .. } => "degenerate-premise",
            Error::Divergence { .. } | Error::Diverged { .. } => "divergence",
            Error::NoFeasiblePoint(_) => "no-feasible-point",
            Error::Json(_) => "parse-error",
        }
    }
}
