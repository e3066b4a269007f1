use crate::dynamics::Trajectory;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("integration failed: {0}")]
    Integration(String),

    #[error("snapshot generation failed: {0}")]
    Generation(String),

    /// The closed-loop controller produced a non-finite input. The trajectory
    /// recorded up to that point is kept for inspection.
    #[error("simulation failed at t = {time}: {message}")]
    Simulation {
        time: f64,
        message: String,
        partial: Box<Trajectory>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("projection failed: {message} (Gram condition estimate {condition:.3e})")]
    Projection { message: String, condition: f64 },

    #[error("EDMD fit failed: {0}")]
    Fit(String),

    #[error("row normalization failed: row {row} (center {center:?}) has sum {sum:.3e}")]
    Normalization {
        row: usize,
        center: Vec<f64>,
        sum: f64,
    },

    #[error("[{label}] {source}")]
    Channel {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("controller error: {0}")]
    Controller(String),

    #[error("parse error in {what} at line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Wraps an error with the input channel it came from (`u=0`, `u=e1`, ...).
    pub fn in_channel(self, label: impl Into<String>) -> Self {
        Error::Channel {
            label: label.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
