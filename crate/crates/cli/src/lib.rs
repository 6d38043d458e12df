//! Scenario files and the `stoch-consensus` command-line pipeline.

pub mod pipeline;
pub mod scenario;

pub use pipeline::{
    certify, execute, execute_with_workers, write_artifacts, Certificate, Outcome, Report, Stage,
};
pub use scenario::{load_scenario, parse_scenario, Overrides, Scenario, ScenarioSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}
