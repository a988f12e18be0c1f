//! The interface every simulator implements, and model construction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::habits::HabitsModel;
use crate::halo::{HaloError, HaloModel};
use crate::metrics::MetricsFrame;
use crate::params::{ParamError, ParamSet, ParamSpec, ParamValue};
use crate::reactance::ReactanceModel;
use crate::world::WorldConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Habits,
    Reactance,
    Halo,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Habits, ModelKind::Reactance, ModelKind::Halo];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Habits => "habits",
            ModelKind::Reactance => "reactance",
            ModelKind::Halo => "halo",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BuildError::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error("unknown model `{0}` (expected habits, reactance or halo)")]
    UnknownModel(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Halo(#[from] HaloError),
}

impl BuildError {
    pub fn path(&self) -> Option<&str> {
        match self {
            BuildError::Param(e) => e.path(),
            _ => None,
        }
    }
}

/// Glyph shape class of an agent on the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Bike,
    Car,
    Bus,
    Walk,
    /// Reactance citizen not susceptible to the bias.
    Circle,
    /// Reactance citizen susceptible to the bias.
    Triangle,
    /// The messenger.
    Square,
}

/// Which colour scale applies to the glyph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scale", rename_all = "snake_case")]
pub enum Colour {
    /// Satisfaction in `[0, 100]`, red (0) to green (100).
    Satisfaction { value: f64 },
    /// Opinion in `[0, 1]`, blue (0) to red (1).
    Opinion { value: f64 },
    /// Fixed per-mode colour.
    Mode { mode: String },
}

/// Derived display record of one agent. Never authoritative state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub shape: Shape,
    pub colour: Colour,
    #[serde(default)]
    pub halo: bool,
    #[serde(default = "visible_default")]
    pub visible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opinion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub satisfaction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_len: Option<u32>,
}

fn visible_default() -> bool {
    true
}

/// A simulator the engine can drive.
pub trait Model: Send {
    fn kind(&self) -> ModelKind;

    fn world(&self) -> &WorldConfig;

    /// Every parameter path the model accepts, including initialisation-only ones.
    fn parameters(&self) -> Vec<ParamSpec>;

    /// Current value of a parameter path (actions have none).
    fn value(&self, path: &str) -> Option<ParamValue>;

    /// Apply a validated runtime command.
    fn apply(&mut self, path: &str, value: &ParamValue) -> Result<(), ParamError>;

    /// Advance the agents by one tick.
    fn step(&mut self);

    /// Names of the values returned by [`Model::metrics`], fixed for the model.
    fn metric_names(&self) -> Vec<String>;

    fn metrics(&self) -> Vec<f64>;

    fn agents(&self) -> Vec<AgentView>;

    /// Model-specific automatic halt (the reactance simulator stops once the
    /// message has nobody left to persuade).
    fn halted(&self) -> bool {
        false
    }

    fn as_any(&self) -> &dyn std::any::Any;
}

/// Build a model from overrides layered on its defaults.
pub fn build_model(kind: ModelKind, overrides: &ParamSet, seed: u64) -> Result<Box<dyn Model>, BuildError> {
    Ok(match kind {
        ModelKind::Habits => Box::new(HabitsModel::from_params(overrides, seed)?),
        ModelKind::Reactance => Box::new(ReactanceModel::from_params(overrides, seed)?),
        ModelKind::Halo => Box::new(HaloModel::from_params(overrides, seed)?),
    })
}

/// Parameter specs of a model kind without building a population.
pub fn parameter_specs(kind: ModelKind) -> Vec<ParamSpec> {
    match kind {
        ModelKind::Habits => HabitsModel::param_specs(),
        ModelKind::Reactance => ReactanceModel::param_specs(),
        ModelKind::Halo => HaloModel::param_specs(),
    }
}

/// Metric names of a model kind.
pub fn metric_names(kind: ModelKind) -> Vec<String> {
    match kind {
        ModelKind::Habits => crate::habits::metric_names(),
        ModelKind::Reactance => crate::reactance::metric_names(),
        ModelKind::Halo => crate::halo::metric_names(),
    }
}

/// Snapshot the current metrics of `model` at `tick`.
pub fn frame_of(model: &dyn Model, tick: u64) -> MetricsFrame {
    MetricsFrame { tick, values: model.metrics() }
}

/// Route a config entry through a model's spec list: validated, then applied
/// by `apply`. Shared by the three `from_params` constructors.
pub(crate) fn apply_overrides(
    specs: &[ParamSpec],
    overrides: &ParamSet,
    mut apply: impl FnMut(&str, &ParamValue) -> Result<(), ParamError>,
) -> Result<(), ParamError> {
    for (path, value) in overrides.iter() {
        let spec = crate::params::validate(specs, path, value)?;
        if spec.is_action() {
            return Err(ParamError::Invalid(format!("`{path}` is an action, not a setting")));
        }
        apply(path, value)?;
    }
    Ok(())
}

/// Mean of an iterator, 0 for an empty one. Group metrics over empty groups
/// report 0.
pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `(mean, min, max)`, all 0 for an empty iterator.
pub(crate) fn mean_min_max(values: impl IntoIterator<Item = f64>) -> (f64, f64, f64) {
    let mut n = 0usize;
    let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        n += 1;
        sum += v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if n == 0 {
        (0.0, 0.0, 0.0)
    } else {
        (sum / n as f64, lo, hi)
    }
}
