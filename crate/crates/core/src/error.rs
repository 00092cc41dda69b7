use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value {value} in {context}")]
    NonFinite { context: &'static str, value: f64 },

    #[error("path has {got} grid values, level {level} needs {expected}")]
    GridLength {
        level: u32,
        expected: usize,
        got: usize,
    },

    #[error("cannot refine a level-{from} path down to level {to}")]
    Coarsening { from: u32, to: u32 },

    #[error("derivatives unavailable for functional `{0}`")]
    DerivativesUnavailable(String),

    #[error("Stein operator inapplicable to `{0}`: no exact derivatives")]
    OperatorInapplicable(String),

    #[error("functional `{name}` is not centred under Z ({reason})")]
    NotCentered { name: String, reason: String },

    #[error("unknown functional `{name}`; registry: {}", .known.join(", "))]
    UnknownFunctional {
        name: String,
        known: Vec<&'static str>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(context: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { context, value })
    }
}
