use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, noise model or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Network solve or operating point problems while building a scenario.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// The simulated machine lost synchronism.
    #[error("scenario is transiently unstable: |domega| = {domega:.4} pu at t = {time:.3} s")]
    Unstable { time: f64, domega: f64 },

    /// Could not back-solve an initial state from the first phasors.
    #[error("initialization error: {0}")]
    Initialization(String),

    /// Numerical failure inside the filter recursion.
    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    /// Malformed trajectory or measurement file.
    #[error("ingestion error (row {row}): {reason}")]
    Ingestion { row: usize, reason: String },

    /// A Monte-Carlo trial failed.
    #[error("trial {trial} ({mode}) failed: {source}")]
    Trial {
        trial: usize,
        mode: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
