//! Configuration and orchestration for the `opinion-limits` command-line tool.

pub mod config;
pub mod experiment;

pub use config::{
    load_config, parse_config, resolve, ExperimentConfig, Manifest, Plan, ResolveOptions,
};
pub use experiment::{run_experiment, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<opinion_limits::Error> for CliError {
    fn from(e: opinion_limits::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
