//! Habits simulator: bike vs car under a single urban-planning scalar.
//!
//! Each tick every citizen makes one trip. A citizen with a full trip window
//! decides by routine with probability equal to its habit strength (the
//! frequency of its dominant mode in the window), otherwise rationally, using
//! the planning mark of a mode as the probability of picking it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{mean, AgentView, Colour, Model, ModelKind, Shape};
use crate::params::{ParamError, ParamSet, ParamSpec, ParamValue};
use crate::rng::{chance, Purpose, RngFactory, SimRng};
use crate::world::{step_world, AgentCore, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bike,
    Car,
}

/// Infrastructure favour: 0 is entirely car-friendly, 100 entirely bike-friendly.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct UrbanPlanning(f64);

impl UrbanPlanning {
    pub fn new(value: f64) -> Result<Self, ParamError> {
        if (0.0..=100.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(ParamError::ValueOutOfRange { path: "urban_planning".into(), value, min: 0.0, max: 100.0 })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HabitsError {
    #[error("routine choice needs a full trip window ({len} of {window} trips recorded)")]
    HistoryTooShort { len: usize, window: usize },
}

/// Rational mark of `mode` in `[0, 100]`.
pub fn rational_mark(mode: Mode, planning: UrbanPlanning) -> f64 {
    match mode {
        Mode::Bike => planning.0,
        Mode::Car => 100.0 - planning.0,
    }
}

/// Bike with probability `planning / 100`, car otherwise.
pub fn rational_choice(planning: UrbanPlanning, rng: &mut SimRng) -> Mode {
    if chance(rng, planning.0 / 100.0) {
        Mode::Bike
    } else {
        Mode::Car
    }
}

/// Sliding window of the most recent trips.
#[derive(Debug, Clone, PartialEq)]
pub struct TripHistory {
    trips: VecDeque<Mode>,
    capacity: usize,
}

impl TripHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "trip window must hold at least one trip");
        Self { trips: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn from_trips(capacity: usize, trips: impl IntoIterator<Item = Mode>) -> Self {
        let mut h = Self::new(capacity);
        for m in trips {
            h.push(m);
        }
        h
    }

    /// Append a trip, evicting the oldest one when full.
    pub fn push(&mut self, mode: Mode) {
        if self.trips.len() == self.capacity {
            self.trips.pop_front();
        }
        self.trips.push_back(mode);
    }

    pub fn count(&self, mode: Mode) -> usize {
        self.trips.iter().filter(|&&m| m == mode).count()
    }

    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.trips.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.trips.clear();
    }

    /// Share of `mode` in a full window, 0 while the window is filling.
    pub fn frequency(&self, mode: Mode) -> f64 {
        if self.is_full() {
            self.count(mode) as f64 / self.capacity as f64
        } else {
            0.0
        }
    }
}

/// Reuse mode `m` with probability `count(m) / W`.
pub fn routine_choice(history: &TripHistory, rng: &mut SimRng) -> Result<Mode, HabitsError> {
    if !history.is_full() {
        return Err(HabitsError::HistoryTooShort { len: history.len(), window: history.capacity() });
    }
    let p_bike = history.count(Mode::Bike) as f64 / history.capacity() as f64;
    Ok(if chance(rng, p_bike) { Mode::Bike } else { Mode::Car })
}

/// Frequency of the dominant mode in a full window; 0 before the window fills.
pub fn habit_strength(history: &TripHistory) -> f64 {
    history.frequency(Mode::Bike).max(history.frequency(Mode::Car))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionKind {
    Rational,
    Routine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HabitsConfig {
    pub window: usize,
    pub habits_enabled: bool,
    pub happy_threshold: f64,
    pub planning: UrbanPlanning,
}

impl Default for HabitsConfig {
    fn default() -> Self {
        Self { window: 20, habits_enabled: true, happy_threshold: 50.0, planning: UrbanPlanning(50.0) }
    }
}

#[derive(Debug, Clone)]
pub struct MobilityAgent {
    pub core: AgentCore,
    pub history: TripHistory,
    pub current_mode: Mode,
    pub satisfaction: f64,
    pub last_decision: DecisionKind,
    rng: SimRng,
}

impl MobilityAgent {
    pub fn new(core: AgentCore, window: usize, planning: UrbanPlanning, rngs: &RngFactory) -> Self {
        let mut rng = rngs.stream(Purpose::Decision, core.id as u64);
        let current_mode = rational_choice(planning, &mut rng);
        Self {
            core,
            history: TripHistory::new(window),
            current_mode,
            satisfaction: rational_mark(current_mode, planning),
            last_decision: DecisionKind::Rational,
            rng,
        }
    }

    /// Replace the trip window (for setting up specific situations).
    pub fn with_history(mut self, history: TripHistory) -> Self {
        self.history = history;
        self
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }
}

/// Make one trip: pick the routine or rational branch, then record the mode
/// and refresh satisfaction.
pub fn decide(agent: &mut MobilityAgent, planning: UrbanPlanning, config: &HabitsConfig) -> (Mode, DecisionKind) {
    let routine = config.habits_enabled
        && agent.history.is_full()
        && chance(&mut agent.rng, habit_strength(&agent.history));
    let (mode, kind) = if routine {
        let mode = routine_choice(&agent.history, &mut agent.rng).expect("window checked full");
        (mode, DecisionKind::Routine)
    } else {
        (rational_choice(planning, &mut agent.rng), DecisionKind::Rational)
    };
    agent.history.push(mode);
    agent.current_mode = mode;
    agent.satisfaction = rational_mark(mode, planning);
    agent.last_decision = kind;
    (mode, kind)
}

/// Erase every citizen's trip window.
pub fn reset_habits(agents: &mut [MobilityAgent]) {
    for agent in agents {
        agent.history.clear();
    }
}

pub struct HabitsModel {
    world: WorldConfig,
    config: HabitsConfig,
    agents: Vec<MobilityAgent>,
}

const METRICS: &[&str] = &[
    "urban_planning",
    "bike_share",
    "car_share",
    "bike_count",
    "car_count",
    "satisfaction_all",
    "satisfaction_bike",
    "satisfaction_car",
    "happy_bike",
    "unhappy_bike",
    "happy_car",
    "unhappy_car",
    "habit_strength_bike",
    "habit_strength_car",
    "rational_count",
    "routine_count",
    "habits_formed",
];

pub fn metric_names() -> Vec<String> {
    METRICS.iter().map(|s| s.to_string()).collect()
}

impl HabitsModel {
    pub const DEFAULT_POPULATION: usize = 500;

    pub fn param_specs() -> Vec<ParamSpec> {
        let mut specs = WorldConfig::param_specs();
        specs.extend([
            ParamSpec::real("urban_planning", 0.0, 100.0, true, "Urban planning (0 car, 100 bike)"),
            ParamSpec::toggle("habits_enabled", true, "Habits"),
            ParamSpec::action("reset_habits", "Reset habits"),
            ParamSpec::integer("habits.window", 1.0, 10_000.0, "Trip window length"),
            ParamSpec::real("happy_threshold", 0.0, 100.0, true, "Happiness threshold"),
        ]);
        specs
    }

    pub fn from_params(overrides: &ParamSet, seed: u64) -> Result<Self, ParamError> {
        let mut world = WorldConfig::with_population(Self::DEFAULT_POPULATION);
        let mut config = HabitsConfig::default();
        crate::model::apply_overrides(&Self::param_specs(), overrides, |path, value| {
            if !world.apply(path, value)? {
                set_config(&mut config, path, value)?;
            }
            Ok(())
        })?;
        Ok(Self::new(world, config, seed))
    }

    pub fn new(world: WorldConfig, config: HabitsConfig, seed: u64) -> Self {
        let rngs = RngFactory::new(seed);
        let torus = world.torus();
        let agents = (0..world.population_size as u32)
            .map(|id| MobilityAgent::new(AgentCore::spawn(id, &torus, &rngs), config.window, config.planning, &rngs))
            .collect();
        Self { world, config, agents }
    }

    pub fn config(&self) -> &HabitsConfig {
        &self.config
    }

    pub fn agents_state(&self) -> &[MobilityAgent] {
        &self.agents
    }

    pub fn planning(&self) -> UrbanPlanning {
        self.config.planning
    }

    fn share(&self, mode: Mode) -> usize {
        self.agents.iter().filter(|a| a.current_mode == mode).count()
    }
}

fn set_config(config: &mut HabitsConfig, path: &str, value: &ParamValue) -> Result<(), ParamError> {
    match (path, value) {
        ("urban_planning", ParamValue::Number(v)) => config.planning = UrbanPlanning::new(*v)?,
        ("habits_enabled", ParamValue::Bool(b)) => config.habits_enabled = *b,
        ("habits.window", ParamValue::Number(v)) => config.window = *v as usize,
        ("happy_threshold", ParamValue::Number(v)) => config.happy_threshold = *v,
        _ => return Err(ParamError::UnknownParameter { path: path.to_string() }),
    }
    Ok(())
}

impl Model for HabitsModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Habits
    }

    fn world(&self) -> &WorldConfig {
        &self.world
    }

    fn parameters(&self) -> Vec<ParamSpec> {
        Self::param_specs()
    }

    fn value(&self, path: &str) -> Option<ParamValue> {
        if let Some(v) = self.world.value(path) {
            return Some(v);
        }
        Some(match path {
            "urban_planning" => self.config.planning.0.into(),
            "habits_enabled" => self.config.habits_enabled.into(),
            "habits.window" => (self.config.window as f64).into(),
            "happy_threshold" => self.config.happy_threshold.into(),
            _ => return None,
        })
    }

    fn apply(&mut self, path: &str, value: &ParamValue) -> Result<(), ParamError> {
        match path {
            "reset_habits" => reset_habits(&mut self.agents),
            _ => set_config(&mut self.config, path, value)?,
        }
        Ok(())
    }

    fn step(&mut self) {
        step_world(self.agents.iter_mut().map(|a| &mut a.core), &self.world);
        let planning = self.config.planning;
        for agent in &mut self.agents {
            decide(agent, planning, &self.config);
        }
    }

    fn metric_names(&self) -> Vec<String> {
        metric_names()
    }

    fn metrics(&self) -> Vec<f64> {
        let n = self.agents.len().max(1) as f64;
        let threshold = self.config.happy_threshold;
        let users = |mode: Mode| self.agents.iter().filter(move |a| a.current_mode == mode);
        let happy = |mode: Mode| users(mode).filter(|a| a.satisfaction > threshold).count() as f64;
        let unhappy = |mode: Mode| users(mode).filter(|a| a.satisfaction < threshold).count() as f64;
        let bikes = self.share(Mode::Bike) as f64;
        let cars = self.share(Mode::Car) as f64;
        vec![
            self.config.planning.0,
            bikes / n,
            cars / n,
            bikes,
            cars,
            mean(self.agents.iter().map(|a| a.satisfaction)),
            mean(users(Mode::Bike).map(|a| a.satisfaction)),
            mean(users(Mode::Car).map(|a| a.satisfaction)),
            happy(Mode::Bike),
            unhappy(Mode::Bike),
            happy(Mode::Car),
            unhappy(Mode::Car),
            mean(users(Mode::Bike).map(|a| a.history.frequency(Mode::Bike))),
            mean(users(Mode::Car).map(|a| a.history.frequency(Mode::Car))),
            self.agents.iter().filter(|a| a.last_decision == DecisionKind::Rational).count() as f64,
            self.agents.iter().filter(|a| a.last_decision == DecisionKind::Routine).count() as f64,
            self.agents.iter().filter(|a| a.history.is_full()).count() as f64,
        ]
    }

    fn agents(&self) -> Vec<AgentView> {
        self.agents
            .iter()
            .map(|a| AgentView {
                id: a.core.id,
                x: a.core.x,
                y: a.core.y,
                shape: match a.current_mode {
                    Mode::Bike => Shape::Bike,
                    Mode::Car => Shape::Car,
                },
                colour: Colour::Satisfaction { value: a.satisfaction },
                halo: false,
                visible: true,
                opinion: None,
                satisfaction: Some(a.satisfaction),
                history_len: Some(a.history.len() as u32),
            })
            .collect()
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
