//! Scripted scenarios: parsing, validation, batch runs and export.

pub mod builtin;
pub mod export;
pub mod predicate;
pub mod runner;
pub mod script;

use thiserror::Error;

use crate::engine::CommandError;
use crate::model::BuildError;

pub use builtin::{builtin, builtin_names, resolve};
pub use export::{export, Format};
pub use runner::{lookup, run_replication, run_scenario, Replication, ReplicationRunner, RunArtifacts, StopReason, Summary, TriggerQueue};
pub use script::{CompiledScript, ScenarioScript, Trigger};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {message}")]
    InvalidScript { message: String, path: Option<String> },
    #[error("unknown scenario `{0}` (see `mobias list`)")]
    UnknownScenario(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Command(#[from] CommandError),
}

impl ScenarioError {
    /// The parameter path or name at fault, if any.
    pub fn path(&self) -> Option<&str> {
        match self {
            ScenarioError::InvalidScript { path, .. } => path.as_deref(),
            ScenarioError::Command(e) => e.path(),
            ScenarioError::Build(e) => e.path(),
            _ => None,
        }
    }

    /// Errors in the script itself, as opposed to failures while running it.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ScenarioError::InvalidScript { .. }
                | ScenarioError::UnknownScenario(_)
                | ScenarioError::Parse(_)
                | ScenarioError::Io(_)
                | ScenarioError::Build(BuildError::UnknownModel(_) | BuildError::Param(_))
        )
    }
}
