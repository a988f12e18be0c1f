//! Halo simulator: four mobility modes scored on six criteria. Agents pick the
//! mode with the best priority-weighted mark; susceptible agents ignore the
//! criteria on which their current mode falls too far below their priority.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{mean, AgentView, Colour, Model, ModelKind, Shape};
use crate::params::{ParamError, ParamSet, ParamSpec, ParamValue};
use crate::rng::{Purpose, RngFactory};
use crate::world::{step_world, AgentCore, WorldConfig};

/// Mode order doubles as the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TravelMode {
    Car,
    Bike,
    Bus,
    Walk,
}

impl TravelMode {
    pub const ALL: [TravelMode; 4] = [TravelMode::Car, TravelMode::Bike, TravelMode::Bus, TravelMode::Walk];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TravelMode::Car => "car",
            TravelMode::Bike => "bike",
            TravelMode::Bus => "bus",
            TravelMode::Walk => "walk",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for TravelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Time,
    Cost,
    Comfort,
    Safety,
    Ecology,
    Praticity,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::Time,
        Criterion::Cost,
        Criterion::Comfort,
        Criterion::Safety,
        Criterion::Ecology,
        Criterion::Praticity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Time => "time",
            Criterion::Cost => "cost",
            Criterion::Comfort => "comfort",
            Criterion::Safety => "safety",
            Criterion::Ecology => "ecology",
            Criterion::Praticity => "praticity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Small bit set of criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CriterionSet(u8);

impl CriterionSet {
    pub const EMPTY: CriterionSet = CriterionSet(0);

    pub fn insert(&mut self, c: Criterion) {
        self.0 |= 1 << c.index();
    }

    pub fn with(mut self, c: Criterion) -> Self {
        self.insert(c);
        self
    }

    pub fn contains(self, c: Criterion) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: CriterionSet) -> Self {
        CriterionSet(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Criterion> {
        Criterion::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

impl FromIterator<Criterion> for CriterionSet {
    fn from_iter<I: IntoIterator<Item = Criterion>>(iter: I) -> Self {
        iter.into_iter().fold(CriterionSet::EMPTY, CriterionSet::with)
    }
}

pub type Priorities = [f64; 6];

/// Town-wide rating of every mode on every criterion, each in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix(pub [[f64; 6]; 4]);

impl Default for ScoreMatrix {
    fn default() -> Self {
        ScoreMatrix([
            [90.0, 40.0, 90.0, 80.0, 10.0, 80.0],
            [70.0, 90.0, 40.0, 50.0, 95.0, 60.0],
            [60.0, 70.0, 70.0, 85.0, 60.0, 50.0],
            [20.0, 100.0, 40.0, 90.0, 100.0, 40.0],
        ])
    }
}

impl ScoreMatrix {
    pub fn get(&self, mode: TravelMode, c: Criterion) -> f64 {
        self.0[mode.index()][c.index()]
    }

    pub fn row(&self, mode: TravelMode) -> &[f64; 6] {
        &self.0[mode.index()]
    }

    pub fn set(&mut self, mode: TravelMode, c: Criterion, value: f64) -> Result<(), ParamError> {
        if !(0.0..=100.0).contains(&value) {
            return Err(ParamError::ValueOutOfRange { path: score_path(mode, c), value, min: 0.0, max: 100.0 });
        }
        self.0[mode.index()][c.index()] = value;
        Ok(())
    }
}

pub fn score_path(mode: TravelMode, c: Criterion) -> String {
    format!("score.{mode}.{c}")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HaloError {
    #[error("every criterion with a positive priority is suppressed")]
    AllCriteriaSuppressed,
    #[error("no priority vector near the {mode} profile makes {mode} the best choice")]
    InfeasibleProfile { mode: TravelMode },
}

/// Priority-weighted average of `mode`'s scores over the criteria not in
/// `suppressed`.
pub fn global_mark(mode: TravelMode, scores: &ScoreMatrix, priorities: &Priorities, suppressed: CriterionSet) -> Result<f64, HaloError> {
    let row = scores.row(mode);
    let (mut weighted, mut total) = (0.0, 0.0);
    for c in Criterion::ALL {
        if suppressed.contains(c) {
            continue;
        }
        weighted += row[c.index()] * priorities[c.index()];
        total += priorities[c.index()];
    }
    if total > 0.0 {
        Ok(weighted / total)
    } else {
        Err(HaloError::AllCriteriaSuppressed)
    }
}

/// Criteria on which `mode` falls at least `threshold` below the priority.
/// Suppressing every weighted criterion would leave no mark; in that case
/// nothing is suppressed.
pub fn halo_set(mode: TravelMode, scores: &ScoreMatrix, priorities: &Priorities, threshold: f64) -> CriterionSet {
    let row = scores.row(mode);
    let set: CriterionSet = Criterion::ALL
        .into_iter()
        .filter(|c| priorities[c.index()] - row[c.index()] >= threshold)
        .collect();
    let weighted_left = Criterion::ALL.into_iter().any(|c| !set.contains(c) && priorities[c.index()] > 0.0);
    if weighted_left {
        set
    } else {
        CriterionSet::EMPTY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaloConfig {
    pub halo_threshold: f64,
    pub susceptible_fraction: f64,
    /// Initial modal split in mode order; sums to 1.
    pub split: [f64; 4],
    /// Half-width of the uniform noise added to the priority profiles.
    pub priority_noise: f64,
    /// Priority template per mode.
    pub profiles: [Priorities; 4],
    /// Keep halos once activated until the agent changes mode.
    pub halo_latching: bool,
    pub scores: ScoreMatrix,
}

impl Default for HaloConfig {
    fn default() -> Self {
        Self {
            halo_threshold: 15.0,
            susceptible_fraction: 0.5,
            split: [0.5, 0.2, 0.2, 0.1],
            priority_noise: 10.0,
            profiles: [
                [61.0, 13.0, 68.0, 39.0, 34.0, 32.0],
                [50.0, 70.0, 20.0, 30.0, 80.0, 50.0],
                [55.0, 60.0, 60.0, 80.0, 45.0, 30.0],
                [10.0, 70.0, 20.0, 70.0, 80.0, 30.0],
            ],
            halo_latching: false,
            scores: ScoreMatrix::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaloAgent {
    pub core: AgentCore,
    pub priorities: Priorities,
    pub current_mode: TravelMode,
    pub susceptible: bool,
    pub active_halos: CriterionSet,
    pub satisfaction: f64,
}

impl HaloAgent {
    pub fn new(core: AgentCore, priorities: Priorities, mode: TravelMode, susceptible: bool, scores: &ScoreMatrix, config: &HaloConfig) -> Self {
        let mut agent = Self { core, priorities, current_mode: mode, susceptible, active_halos: CriterionSet::EMPTY, satisfaction: 0.0 };
        update_halos(&mut agent, scores, config);
        agent.satisfaction = agent.mark_of(agent.current_mode, scores);
        agent
    }

    /// The agent's mark of `mode`: halo-filtered for its current mode only.
    pub fn mark_of(&self, mode: TravelMode, scores: &ScoreMatrix) -> f64 {
        let suppressed = if mode == self.current_mode { self.active_halos } else { CriterionSet::EMPTY };
        global_mark(mode, scores, &self.priorities, suppressed).unwrap_or(0.0)
    }
}

/// Recompute the suppressed criteria against the current mode.
pub fn update_halos(agent: &mut HaloAgent, scores: &ScoreMatrix, config: &HaloConfig) {
    if !agent.susceptible {
        agent.active_halos = CriterionSet::EMPTY;
        return;
    }
    let fresh = halo_set(agent.current_mode, scores, &agent.priorities, config.halo_threshold);
    agent.active_halos = if config.halo_latching {
        let merged = agent.active_halos.union(fresh);
        let weighted_left = Criterion::ALL
            .into_iter()
            .any(|c| !merged.contains(c) && agent.priorities[c.index()] > 0.0);
        if weighted_left {
            merged
        } else {
            fresh
        }
    } else {
        fresh
    };
}

/// Best mode by mark, first in mode order on ties.
pub fn choose_mode(agent: &HaloAgent, scores: &ScoreMatrix) -> TravelMode {
    let mut best = TravelMode::Car;
    let mut best_mark = f64::NEG_INFINITY;
    for mode in TravelMode::ALL {
        let mark = agent.mark_of(mode, scores);
        if mark > best_mark {
            best = mode;
            best_mark = mark;
        }
    }
    best
}

/// Mode a fully rational agent with these priorities would pick.
pub fn rational_choice(priorities: &Priorities, scores: &ScoreMatrix) -> TravelMode {
    let mut best = TravelMode::Car;
    let mut best_mark = f64::NEG_INFINITY;
    for mode in TravelMode::ALL {
        let mark = global_mark(mode, scores, priorities, CriterionSet::EMPTY).unwrap_or(0.0);
        if mark > best_mark {
            best = mode;
            best_mark = mark;
        }
    }
    best
}

/// One evaluation: halos on the current mode, argmax, switch, then halos and
/// satisfaction for the mode actually used.
pub fn decide(agent: &mut HaloAgent, scores: &ScoreMatrix, config: &HaloConfig) {
    update_halos(agent, scores, config);
    let choice = choose_mode(agent, scores);
    if choice != agent.current_mode {
        agent.current_mode = choice;
        agent.active_halos = CriterionSet::EMPTY;
        update_halos(agent, scores, config);
    }
    agent.satisfaction = agent.mark_of(agent.current_mode, scores);
}

/// Split `n` agents by `fractions` with the largest-remainder rule.
pub fn apportion(n: usize, fractions: &[f64; 4]) -> [usize; 4] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 4];
    for (i, r) in raw.iter().enumerate() {
        counts[i] = r.floor() as usize;
    }
    let mut order: Vec<usize> = (0..4).collect();
    // stable: equal remainders favour mode order
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    let mut left = n.saturating_sub(counts.iter().sum());
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Draw the population: modes by the split, susceptibility stratified per
/// mode, priorities sampled around each mode's profile until the agent's own
/// choice is its assigned mode.
pub fn init_population(world: &WorldConfig, config: &HaloConfig, rngs: &RngFactory) -> Result<Vec<HaloAgent>, HaloError> {
    let n = world.population_size;
    let counts = apportion(n, &config.split);
    let mut modes: Vec<TravelMode> = TravelMode::ALL
        .into_iter()
        .zip(counts)
        .flat_map(|(m, k)| std::iter::repeat_n(m, k))
        .collect();
    modes.shuffle(&mut rngs.stream(Purpose::Setup, 0));

    let torus = world.torus();
    let frac = config.susceptible_fraction;
    let mut seen = [0usize; 4];
    let mut agents = Vec::with_capacity(n);
    for (id, mode) in modes.into_iter().enumerate() {
        let k = seen[mode.index()] as f64;
        seen[mode.index()] += 1;
        let susceptible = ((k + 1.0) * frac).floor() > (k * frac).floor();

        let mut rng = rngs.stream(Purpose::Init, id as u64);
        let core = AgentCore::spawn(id as u32, &torus, rngs);
        let mut found = None;
        for _ in 0..1000 {
            let mut priorities = config.profiles[mode.index()];
            for p in priorities.iter_mut() {
                let noise = if config.priority_noise > 0.0 {
                    rng.random_range(-config.priority_noise..=config.priority_noise)
                } else {
                    0.0
                };
                *p = (*p + noise).clamp(0.0, 100.0);
            }
            if priorities.iter().all(|p| *p <= 0.0) || rational_choice(&priorities, &config.scores) != mode {
                continue;
            }
            let agent = HaloAgent::new(core.clone(), priorities, mode, susceptible, &config.scores, config);
            if choose_mode(&agent, &config.scores) == mode {
                found = Some(agent);
                break;
            }
        }
        agents.push(found.ok_or(HaloError::InfeasibleProfile { mode })?);
    }
    Ok(agents)
}

/// Communication campaign: add `delta` to one priority of every agent.
pub fn shift_priorities(agents: &mut [HaloAgent], c: Criterion, delta: f64) {
    for a in agents {
        let p = &mut a.priorities[c.index()];
        *p = (*p + delta).clamp(0.0, 100.0);
    }
}

pub fn metric_names() -> Vec<String> {
    let mut names = Vec::new();
    for group in ["rational", "biased"] {
        for m in TravelMode::ALL {
            names.push(format!("share_{m}_{group}"));
        }
    }
    for group in ["rational", "biased"] {
        names.push(format!("satisfaction_{group}"));
        for m in TravelMode::ALL {
            names.push(format!("satisfaction_{m}_{group}"));
        }
    }
    for m in TravelMode::ALL {
        names.push(format!("mark_{m}_users"));
        names.push(format!("mark_{m}_others"));
    }
    names.push("halo_agents".to_string());
    for m in TravelMode::ALL {
        for c in Criterion::ALL {
            names.push(format!("halo_{m}_{c}"));
        }
    }
    names
}

pub struct HaloModel {
    world: WorldConfig,
    config: HaloConfig,
    agents: Vec<HaloAgent>,
}

impl HaloModel {
    pub const DEFAULT_POPULATION: usize = 200;

    pub fn param_specs() -> Vec<ParamSpec> {
        let mut specs = WorldConfig::param_specs();
        for m in TravelMode::ALL {
            for c in Criterion::ALL {
                specs.push(ParamSpec::real(score_path(m, c), 0.0, 100.0, true, &format!("{m} {c} score")));
            }
        }
        for c in Criterion::ALL {
            specs.push(ParamSpec::delta(format!("priority_shift.{c}"), -100.0, 100.0, &format!("Shift {c} priority")));
        }
        specs.push(ParamSpec::real("halo_threshold", 0.0, 100.0, true, "Halo threshold"));
        specs.push(ParamSpec::toggle("halo_latching", true, "Latch halos until mode change"));
        specs.push(ParamSpec::real("susceptible_fraction", 0.0, 1.0, false, "Share of susceptible agents"));
        specs.push(ParamSpec::real("priority_noise", 0.0, 50.0, false, "Priority noise half-width"));
        for m in TravelMode::ALL {
            specs.push(ParamSpec::real(format!("split.{m}"), 0.0, 1.0, false, &format!("Initial {m} share")));
        }
        for m in TravelMode::ALL {
            for c in Criterion::ALL {
                specs.push(ParamSpec::real(format!("profile.{m}.{c}"), 0.0, 100.0, false, &format!("{m} profile {c} priority")));
            }
        }
        specs
    }

    pub fn from_params(overrides: &ParamSet, seed: u64) -> Result<Self, crate::model::BuildError> {
        let mut world = WorldConfig::with_population(Self::DEFAULT_POPULATION);
        let mut config = HaloConfig::default();
        crate::model::apply_overrides(&Self::param_specs(), overrides, |path, value| {
            if !world.apply(path, value)? {
                set_config(&mut config, path, value)?;
            }
            Ok(())
        })?;
        let total: f64 = config.split.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ParamError::Invalid(format!("modal split sums to {total}, expected 1")).into());
        }
        Ok(Self::new(world, config, seed)?)
    }

    pub fn new(world: WorldConfig, config: HaloConfig, seed: u64) -> Result<Self, HaloError> {
        let agents = init_population(&world, &config, &RngFactory::new(seed))?;
        Ok(Self { world, config, agents })
    }

    pub fn from_parts(world: WorldConfig, config: HaloConfig, agents: Vec<HaloAgent>) -> Self {
        Self { world, config, agents }
    }

    pub fn config(&self) -> &HaloConfig {
        &self.config
    }

    pub fn scores(&self) -> &ScoreMatrix {
        &self.config.scores
    }

    pub fn population(&self) -> &[HaloAgent] {
        &self.agents
    }

    /// Every agent re-evaluates against the current scores.
    pub fn evaluate(&mut self) {
        for agent in &mut self.agents {
            decide(agent, &self.config.scores, &self.config);
        }
    }
}

fn parse_pair(rest: &str) -> Option<(TravelMode, Criterion)> {
    let (m, c) = rest.split_once('.')?;
    Some((TravelMode::from_name(m)?, Criterion::from_name(c)?))
}

fn set_config(config: &mut HaloConfig, path: &str, value: &ParamValue) -> Result<(), ParamError> {
    let unknown = || ParamError::UnknownParameter { path: path.to_string() };
    let number = || value.as_f64().ok_or(ParamError::TypeMismatch { path: path.to_string(), expected: "number" });
    match path {
        "halo_threshold" => config.halo_threshold = number()?,
        "susceptible_fraction" => config.susceptible_fraction = number()?,
        "priority_noise" => config.priority_noise = number()?,
        "halo_latching" => {
            config.halo_latching = value.as_bool().ok_or(ParamError::TypeMismatch { path: path.to_string(), expected: "boolean" })?
        }
        _ => {
            if let Some(rest) = path.strip_prefix("score.") {
                let (m, c) = parse_pair(rest).ok_or_else(unknown)?;
                config.scores.set(m, c, number()?)?;
            } else if let Some(rest) = path.strip_prefix("profile.") {
                let (m, c) = parse_pair(rest).ok_or_else(unknown)?;
                config.profiles[m.index()][c.index()] = number()?;
            } else if let Some(m) = path.strip_prefix("split.").and_then(TravelMode::from_name) {
                config.split[m.index()] = number()?;
            } else {
                return Err(unknown());
            }
        }
    }
    Ok(())
}

impl Model for HaloModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Halo
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
        let c = &self.config;
        Some(match path {
            "halo_threshold" => c.halo_threshold.into(),
            "susceptible_fraction" => c.susceptible_fraction.into(),
            "priority_noise" => c.priority_noise.into(),
            "halo_latching" => c.halo_latching.into(),
            _ => {
                if let Some(rest) = path.strip_prefix("score.") {
                    let (m, cr) = parse_pair(rest)?;
                    c.scores.get(m, cr).into()
                } else if let Some(rest) = path.strip_prefix("profile.") {
                    let (m, cr) = parse_pair(rest)?;
                    c.profiles[m.index()][cr.index()].into()
                } else {
                    let m = path.strip_prefix("split.").and_then(TravelMode::from_name)?;
                    c.split[m.index()].into()
                }
            }
        })
    }

    fn apply(&mut self, path: &str, value: &ParamValue) -> Result<(), ParamError> {
        if let Some(name) = path.strip_prefix("priority_shift.") {
            let c = Criterion::from_name(name).ok_or_else(|| ParamError::UnknownParameter { path: path.to_string() })?;
            let delta = value.as_f64().ok_or(ParamError::TypeMismatch { path: path.to_string(), expected: "number" })?;
            shift_priorities(&mut self.agents, c, delta);
            return Ok(());
        }
        set_config(&mut self.config, path, value)
    }

    fn step(&mut self) {
        step_world(self.agents.iter_mut().map(|a| &mut a.core), &self.world);
        self.evaluate();
    }

    fn metric_names(&self) -> Vec<String> {
        metric_names()
    }

    fn metrics(&self) -> Vec<f64> {
        let scores = &self.config.scores;
        let mut out = Vec::with_capacity(51);
        let groups = [false, true];
        for susceptible in groups {
            let group: Vec<&HaloAgent> = self.agents.iter().filter(|a| a.susceptible == susceptible).collect();
            let size = group.len().max(1) as f64;
            for m in TravelMode::ALL {
                out.push(group.iter().filter(|a| a.current_mode == m).count() as f64 / size);
            }
        }
        for susceptible in groups {
            let group = || self.agents.iter().filter(move |a| a.susceptible == susceptible);
            out.push(mean(group().map(|a| a.satisfaction)));
            for m in TravelMode::ALL {
                out.push(mean(group().filter(|a| a.current_mode == m).map(|a| a.satisfaction)));
            }
        }
        for m in TravelMode::ALL {
            out.push(mean(self.agents.iter().filter(|a| a.current_mode == m).map(|a| a.satisfaction)));
            out.push(mean(self.agents.iter().filter(|a| a.current_mode != m).map(|a| a.mark_of(m, scores))));
        }
        out.push(self.agents.iter().filter(|a| !a.active_halos.is_empty()).count() as f64);
        for m in TravelMode::ALL {
            for c in Criterion::ALL {
                out.push(
                    self.agents
                        .iter()
                        .filter(|a| a.current_mode == m && a.active_halos.contains(c))
                        .count() as f64,
                );
            }
        }
        out
    }

    fn agents(&self) -> Vec<AgentView> {
        self.agents
            .iter()
            .map(|a| AgentView {
                id: a.core.id,
                x: a.core.x,
                y: a.core.y,
                shape: match a.current_mode {
                    TravelMode::Car => Shape::Car,
                    TravelMode::Bike => Shape::Bike,
                    TravelMode::Bus => Shape::Bus,
                    TravelMode::Walk => Shape::Walk,
                },
                colour: Colour::Satisfaction { value: a.satisfaction },
                halo: !a.active_halos.is_empty(),
                visible: true,
                opinion: None,
                satisfaction: Some(a.satisfaction),
                history_len: None,
            })
            .collect()
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
