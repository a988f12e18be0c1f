//! Deterministic agent-based simulators of cognitive biases in mobility
//! choices: habits, reactance to persuasion, and the halo effect.
//!
//! Every run is a pure function of its configuration, seed and command log.

pub mod engine;
pub mod habits;
pub mod halo;
pub mod metrics;
pub mod model;
pub mod params;
pub mod reactance;
pub mod rng;
pub mod scenario;
pub mod world;

pub use engine::{replay, Command, CommandError, CommandQueue, Simulation};
pub use metrics::{MetricIndex, MetricsFrame};
pub use model::{build_model, metric_names, parameter_specs, AgentView, BuildError, Model, ModelKind};
pub use params::{ParamError, ParamSet, ParamSpec, ParamValue};
