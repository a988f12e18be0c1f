//! Tick loop and command queue.
//!
//! Tick `t` runs in three phases: commands scheduled for `t` are applied in
//! submission order, agents are stepped, and the frame for `t` is taken.
//! The state right after construction is tick 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricsFrame;
use crate::model::{build_model, frame_of, AgentView, BuildError, Model, ModelKind};
use crate::params::{validate, ParamError, ParamSet, ParamSpec, ParamValue};

/// Parameter change or action applied at the start of `tick`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub tick: u64,
    pub target: String,
    #[serde(default = "trigger")]
    pub value: ParamValue,
}

fn trigger() -> ParamValue {
    ParamValue::Trigger
}

impl Command {
    pub fn new(tick: u64, target: impl Into<String>, value: impl Into<ParamValue>) -> Self {
        Self { tick, target: target.into(), value: value.into() }
    }

    pub fn action(tick: u64, target: impl Into<String>) -> Self {
        Self { tick, target: target.into(), value: ParamValue::Trigger }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("command for tick {tick} arrives after tick {current} has already run")]
    TooLate { tick: u64, current: u64 },
}

impl CommandError {
    pub fn path(&self) -> Option<&str> {
        match self {
            CommandError::Param(e) => e.path(),
            CommandError::TooLate { .. } => None,
        }
    }
}

/// Pending commands kept in `(tick, submission order)` order.
#[derive(Debug, Clone, Default)]
pub struct CommandQueue {
    pending: Vec<Command>,
}

impl CommandQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, command: Command) {
        // stable insertion after every command with tick <= command.tick
        let at = self.pending.partition_point(|c| c.tick <= command.tick);
        self.pending.insert(at, command);
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Command> {
        self.pending.iter()
    }

    /// Remove and return the commands due at `tick`, in submission order.
    fn take_due(&mut self, tick: u64) -> Vec<Command> {
        let end = self.pending.partition_point(|c| c.tick <= tick);
        self.pending.drain(..end).collect()
    }
}

/// Validate a command target and value against the model's parameters.
pub fn check_command(specs: &[ParamSpec], target: &str, value: &ParamValue) -> Result<(), ParamError> {
    let spec = validate(specs, target, value)?;
    if !spec.runtime {
        return Err(ParamError::NotRuntime { path: target.to_string() });
    }
    Ok(())
}

/// Apply every command of `queue` due at `tick`. Commands scheduled for
/// earlier ticks that were never drained are applied too, in order.
/// Returns the applied commands.
pub fn apply_commands(model: &mut dyn Model, queue: &mut CommandQueue, tick: u64) -> Result<Vec<Command>, CommandError> {
    let specs = model.parameters();
    let due = queue.take_due(tick);
    for command in &due {
        check_command(&specs, &command.target, &command.value)?;
        model.apply(&command.target, &command.value)?;
    }
    Ok(due)
}

/// A model plus its clock, command queue and applied-command log.
pub struct Simulation {
    model: Box<dyn Model>,
    tick: u64,
    queue: CommandQueue,
    specs: Vec<ParamSpec>,
    names: Vec<String>,
    applied: Vec<Command>,
}

impl Simulation {
    pub fn new(kind: ModelKind, overrides: &ParamSet, seed: u64) -> Result<Self, BuildError> {
        Ok(Self::from_model(build_model(kind, overrides, seed)?))
    }

    pub fn from_model(model: Box<dyn Model>) -> Self {
        let specs = model.parameters();
        let names = model.metric_names();
        Self { model, tick: 0, queue: CommandQueue::new(), specs, names, applied: Vec::new() }
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    /// Concrete model, for inspection in tests and analyses.
    pub fn model_as<M: 'static>(&self) -> Option<&M> {
        let any: &dyn std::any::Any = self.model.as_any();
        any.downcast_ref::<M>()
    }

    pub fn parameters(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn metric_names(&self) -> &[String] {
        &self.names
    }

    pub fn pending(&self) -> &CommandQueue {
        &self.queue
    }

    /// Commands applied so far, in application order.
    pub fn applied(&self) -> &[Command] {
        &self.applied
    }

    /// Queue `command`. It must target a runtime parameter and a future tick.
    pub fn schedule(&mut self, command: Command) -> Result<u64, CommandError> {
        if command.tick <= self.tick {
            return Err(CommandError::TooLate { tick: command.tick, current: self.tick });
        }
        check_command(&self.specs, &command.target, &command.value)?;
        let tick = command.tick;
        self.queue.push(command);
        Ok(tick)
    }

    /// Queue a command for the next tick boundary; returns that tick.
    pub fn schedule_next(&mut self, target: &str, value: ParamValue) -> Result<u64, CommandError> {
        self.schedule(Command { tick: self.tick + 1, target: target.to_string(), value })
    }

    /// Run one tick and return its frame.
    pub fn advance(&mut self) -> Result<MetricsFrame, CommandError> {
        let next = self.tick + 1;
        let applied = apply_commands(self.model.as_mut(), &mut self.queue, next)?;
        self.applied.extend(applied);
        self.model.step();
        self.tick = next;
        Ok(self.frame())
    }

    /// Metrics of the current state.
    pub fn frame(&self) -> MetricsFrame {
        frame_of(self.model.as_ref(), self.tick)
    }

    pub fn agents(&self) -> Vec<AgentView> {
        self.model.agents()
    }

    pub fn halted(&self) -> bool {
        self.model.halted()
    }
}

/// Rebuild the frame stream `1..=until` from a config, seed and command log.
pub fn replay(
    kind: ModelKind,
    overrides: &ParamSet,
    seed: u64,
    commands: &[Command],
    until: u64,
) -> Result<Vec<MetricsFrame>, ReplayError> {
    let mut sim = Simulation::new(kind, overrides, seed)?;
    for command in commands {
        sim.schedule(command.clone())?;
    }
    (0..until).map(|_| sim.advance().map_err(ReplayError::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Command(#[from] CommandError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_keeps_tick_then_submission_order() {
        let mut q = CommandQueue::new();
        q.push(Command::new(5, "a", 1.0));
        q.push(Command::new(2, "b", 1.0));
        q.push(Command::new(5, "c", 1.0));
        q.push(Command::new(2, "d", 1.0));
        let order: Vec<_> = q.iter().map(|c| c.target.as_str()).collect();
        assert_eq!(order, ["b", "d", "a", "c"]);
        assert_eq!(q.take_due(2).len(), 2);
        assert_eq!(q.take_due(4).len(), 0);
        assert_eq!(q.take_due(5).len(), 2);
        assert!(q.is_empty());
    }

    fn planning(sim: &Simulation) -> f64 {
        sim.model().value("urban_planning").and_then(|v| v.as_f64()).unwrap()
    }

    #[test]
    fn commands_apply_at_their_tick_only() {
        let mut sim = Simulation::new(ModelKind::Habits, &ParamSet::new().with("urban_planning", 10.0), 3).unwrap();
        sim.schedule(Command::new(100, "urban_planning", 85.0)).unwrap();
        for _ in 0..99 {
            sim.advance().unwrap();
        }
        assert_eq!(planning(&sim), 10.0);
        let frame = sim.advance().unwrap();
        assert_eq!(frame.tick, 100);
        assert_eq!(planning(&sim), 85.0);
        assert_eq!(frame.get(sim.metric_names(), "urban_planning"), Some(85.0));
    }

    #[test]
    fn empty_queue_leaves_parameters_unchanged() {
        let mut sim = Simulation::new(ModelKind::Habits, &ParamSet::new().with("urban_planning", 30.0), 3).unwrap();
        let before: Vec<_> = sim.parameters().iter().map(|s| sim.model().value(&s.path)).collect();
        let mut queue = CommandQueue::new();
        let applied = apply_commands(sim.model.as_mut(), &mut queue, 1).unwrap();
        assert!(applied.is_empty());
        let after: Vec<_> = sim.parameters().iter().map(|s| sim.model().value(&s.path)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn bad_commands_name_their_path() {
        let mut sim = Simulation::new(ModelKind::Habits, &ParamSet::new(), 3).unwrap();
        let err = sim.schedule(Command::new(1, "urban_planning", 150.0)).unwrap_err();
        assert!(matches!(err, CommandError::Param(ParamError::ValueOutOfRange { .. })));
        assert_eq!(err.path(), Some("urban_planning"));
        let err = sim.schedule(Command::new(1, "no.such.path", 1.0)).unwrap_err();
        assert!(matches!(err, CommandError::Param(ParamError::UnknownParameter { .. })));
        assert_eq!(err.path(), Some("no.such.path"));
        let err = sim.schedule(Command::new(1, "population_size", 10.0)).unwrap_err();
        assert!(matches!(err, CommandError::Param(ParamError::NotRuntime { .. })));
        sim.advance().unwrap();
        assert!(matches!(sim.schedule(Command::new(1, "urban_planning", 5.0)), Err(CommandError::TooLate { .. })));

        // unvalidated queues are checked on application too
        let mut queue = CommandQueue::new();
        queue.push(Command::new(2, "urban_planning", -1.0));
        let err = apply_commands(sim.model.as_mut(), &mut queue, 2).unwrap_err();
        assert_eq!(err.path(), Some("urban_planning"));
    }

    #[test]
    fn replay_reproduces_a_live_run() {
        let overrides = ParamSet::new().with("population_size", 50.0);
        let mut live = Simulation::new(ModelKind::Habits, &overrides, 11).unwrap();
        let mut frames = Vec::new();
        for t in 0..60u64 {
            if t == 10 {
                live.schedule_next("urban_planning", 85.0.into()).unwrap();
            }
            if t == 30 {
                live.schedule_next("reset_habits", ParamValue::Trigger).unwrap();
            }
            frames.push(live.advance().unwrap());
        }
        let replayed = replay(ModelKind::Habits, &overrides, 11, live.applied(), 60).unwrap();
        assert_eq!(frames, replayed);
    }
}
