//! Experiment runner behind the `edgecache` binary.

pub mod commands;
pub mod config;

pub use commands::{run, Command, Report};
pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] edgecache::Error),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// 1 for configuration problems, 2 when the parameters leave the model's
    /// domain of validity.
    pub fn exit_code(&self) -> u8 {
        use edgecache::Error as E;
        match self {
            CliError::Model(E::NonPositiveSpectralEfficiency { .. } | E::UnboundedDelay { .. }) => {
                2
            }
            _ => 1,
        }
    }
}

/// Exit status when a validation run finds a violated property.
pub const VALIDATION_FAILURE: u8 = 3;
