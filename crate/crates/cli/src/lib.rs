//! Experiment runners behind the `iscc` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

pub use commands::{
    cmd_compare, cmd_eval, cmd_inspect, cmd_oracle, cmd_robustness, cmd_simulate, cmd_train, RobustnessReport,
    RunSummary,
};
pub use config::{parse_seeds, RunConfig, POLICY_NAMES, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] iscc_core::Error),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output error: {0}")]
    Output(String),
    /// A run completed but its built-in check did not hold.
    #[error("{0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use iscc_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Core(E::Config(_) | E::InstanceTooLarge { .. } | E::Params(_) | E::LayoutMismatch { .. }) => 2,
            CliError::Assertion(_) => 3,
            _ => 1,
        }
    }
}
