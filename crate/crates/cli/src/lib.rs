//! Experiment pipeline behind the `amsp` binary.

pub mod commands;
pub mod config;
pub mod output;

use amsp_core::Error;

pub use config::ExperimentConfig;

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Trial { source, .. } => exit_code(source),
        Error::Unstable { .. } => 3,
        Error::Numerical { .. } | Error::Initialization(_) => 4,
        Error::Config(_)
        | Error::Scenario(_)
        | Error::Ingestion { .. }
        | Error::Argument(_)
        | Error::Io(_)
        | Error::Csv(_) => 2,
    }
}
