//! Reactance simulator: a messenger broadcasts an official opinion that
//! citizens either absorb or, when susceptible and too far from it, push
//! away from.
//!
//! Opinions live in `[0, 1]` and are clamped after every update. Encounters
//! within one tick are applied sequentially in `(lower id, higher id)` order;
//! the messenger carries the highest id.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{mean_min_max, AgentView, Colour, Model, ModelKind, Shape};
use crate::params::{ParamError, ParamSet, ParamSpec, ParamValue};
use crate::rng::{chance, Purpose, RngFactory};
use crate::world::{encounters, step_world, within_radius, AgentCore, WorldConfig};

pub fn clamp_opinion(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Asymmetric average weighting one's own opinion by `w`.
pub fn blend(own: f64, other: f64, w: f64) -> f64 {
    clamp_opinion(w * own + (1.0 - w) * other)
}

/// Move away from `source`, mirroring the attraction gain.
pub fn repel(own: f64, source: f64, w: f64) -> f64 {
    let d = (own - source).abs();
    let direction = if own > source {
        1.0
    } else if own < source {
        -1.0
    } else {
        0.0
    };
    clamp_opinion(own + (1.0 - w) * direction * d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactanceConfig {
    pub initial_mean: f64,
    pub init_variance: f64,
    pub susceptible_fraction: f64,
    /// Weight of one's own opinion when blending, in `(0.5, 1]`.
    pub self_weight: f64,
    /// Distance above which a susceptible agent reacts against an opinion.
    pub reactance_delta: f64,
    pub contagion: bool,
    pub confirmation_bias: bool,
    pub agree_tolerance: f64,
    /// Distance to the message at or below which an agent counts as convinced.
    pub convinced_tolerance: f64,
    pub extremization_step: f64,
    /// Susceptible agents also react against peers, not only the messenger.
    pub peer_reactance: bool,
    pub message: f64,
    pub broadcasting: bool,
}

impl Default for ReactanceConfig {
    fn default() -> Self {
        Self {
            initial_mean: 0.8,
            init_variance: 0.25,
            susceptible_fraction: 0.5,
            self_weight: 0.8,
            reactance_delta: 1.0,
            contagion: false,
            confirmation_bias: false,
            agree_tolerance: 0.2,
            convinced_tolerance: 0.05,
            extremization_step: 0.02,
            peer_reactance: false,
            message: 0.2,
            broadcasting: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpinionAgent {
    pub core: AgentCore,
    pub opinion: f64,
    pub susceptible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Messenger {
    pub core: AgentCore,
    pub message: f64,
    pub broadcasting: bool,
}

/// Draw the initial population: clamped Gaussian opinions and independent
/// susceptibility draws.
pub fn init_population(world: &WorldConfig, config: &ReactanceConfig, rngs: &RngFactory) -> Vec<OpinionAgent> {
    let torus = world.torus();
    let normal = Normal::new(config.initial_mean, config.init_variance.sqrt()).expect("variance validated non-negative");
    (0..world.population_size as u32)
        .map(|id| {
            let mut rng = rngs.stream(Purpose::Init, id as u64);
            let opinion = clamp_opinion(normal.sample(&mut rng));
            let susceptible = chance(&mut rng, config.susceptible_fraction);
            OpinionAgent { core: AgentCore::spawn(id, &torus, rngs), opinion, susceptible }
        })
        .collect()
}

/// Encounter between two citizens. Returns their new opinions.
pub fn peer_interact(a: &OpinionAgent, b: &OpinionAgent, config: &ReactanceConfig) -> (f64, f64) {
    let update = |own: &OpinionAgent, other: &OpinionAgent| {
        let d = (own.opinion - other.opinion).abs();
        if config.peer_reactance && own.susceptible && d > config.reactance_delta {
            return repel(own.opinion, other.opinion, config.self_weight);
        }
        if !config.confirmation_bias {
            return blend(own.opinion, other.opinion, config.self_weight);
        }
        if d > config.agree_tolerance {
            return own.opinion;
        }
        extremize(blend(own.opinion, other.opinion, config.self_weight), config.extremization_step)
    };
    (update(a, b), update(b, a))
}

/// Push an opinion `step` further from the centre of the continuum.
pub fn extremize(opinion: f64, step: f64) -> f64 {
    if opinion > 0.5 {
        clamp_opinion(opinion + step)
    } else if opinion < 0.5 {
        clamp_opinion(opinion - step)
    } else {
        opinion
    }
}

/// New opinion of `agent` after meeting a broadcasting messenger.
pub fn messenger_influence(agent: &OpinionAgent, message: f64, config: &ReactanceConfig) -> f64 {
    let d = (agent.opinion - message).abs();
    if agent.susceptible && d > config.reactance_delta {
        repel(agent.opinion, message, config.self_weight)
    } else {
        blend(agent.opinion, message, config.self_weight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Convinced,
    Positive,
    Negative,
}

pub fn classify(opinion: f64, susceptible: bool, message: f64, config: &ReactanceConfig) -> Target {
    let d = (opinion - message).abs();
    if d <= config.convinced_tolerance {
        Target::Convinced
    } else if susceptible && d > config.reactance_delta {
        Target::Negative
    } else {
        Target::Positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TargetCounts {
    pub convinced: usize,
    pub positive: usize,
    pub negative: usize,
}

impl TargetCounts {
    pub fn total(&self) -> usize {
        self.convinced + self.positive + self.negative
    }
}

pub fn classify_targets(agents: &[OpinionAgent], message: f64, config: &ReactanceConfig) -> TargetCounts {
    agents.iter().fold(TargetCounts::default(), |mut c, a| {
        match classify(a.opinion, a.susceptible, message, config) {
            Target::Convinced => c.convinced += 1,
            Target::Positive => c.positive += 1,
            Target::Negative => c.negative += 1,
        }
        c
    })
}

/// The message has nobody left to persuade.
pub fn stop_condition(counts: &TargetCounts) -> bool {
    counts.positive == 0
}

pub struct ReactanceModel {
    world: WorldConfig,
    config: ReactanceConfig,
    agents: Vec<OpinionAgent>,
    messenger: Messenger,
}

const METRICS: &[&str] = &[
    "message",
    "broadcasting",
    "opinion_mean_all",
    "opinion_min_all",
    "opinion_max_all",
    "opinion_mean_rational",
    "opinion_min_rational",
    "opinion_max_rational",
    "opinion_mean_susceptible",
    "opinion_min_susceptible",
    "opinion_max_susceptible",
    "convinced",
    "positive",
    "negative",
    "pct_convinced",
    "pct_positive",
    "pct_negative",
    "rational_count",
    "susceptible_count",
];

pub fn metric_names() -> Vec<String> {
    METRICS.iter().map(|s| s.to_string()).collect()
}

impl ReactanceModel {
    pub const DEFAULT_POPULATION: usize = 200;

    pub fn param_specs() -> Vec<ParamSpec> {
        let mut specs = WorldConfig::param_specs();
        specs.extend([
            ParamSpec::real("message", 0.0, 1.0, true, "Message content"),
            ParamSpec::toggle("broadcasting", true, "Broadcast"),
            ParamSpec::real("reactance_delta", 0.0, 1.0, true, "Reactance threshold"),
            ParamSpec::toggle("contagion", true, "Contagion between citizens"),
            ParamSpec::toggle("confirmation_bias", true, "Confirmation bias"),
            ParamSpec::toggle("peer_reactance", true, "Reactance against peers"),
            ParamSpec::real("self_weight", 0.5, 1.0, true, "Weight of own opinion"),
            ParamSpec::real("agree_tolerance", 0.0, 1.0, true, "Agreement tolerance"),
            ParamSpec::real("convinced_tolerance", 0.0, 1.0, true, "Convinced tolerance"),
            ParamSpec::real("extremization_step", 0.0, 1.0, true, "Extremization step"),
            ParamSpec::real("initial_mean", 0.0, 1.0, false, "Initial mean opinion"),
            ParamSpec::real("init_variance", 0.0, 1.0, false, "Initial opinion variance"),
            ParamSpec::real("susceptible_fraction", 0.0, 1.0, false, "Share of susceptible citizens"),
        ]);
        specs
    }

    pub fn from_params(overrides: &ParamSet, seed: u64) -> Result<Self, ParamError> {
        let mut world = WorldConfig::with_population(Self::DEFAULT_POPULATION);
        let mut config = ReactanceConfig::default();
        crate::model::apply_overrides(&Self::param_specs(), overrides, |path, value| {
            if !world.apply(path, value)? {
                set_config(&mut config, path, value)?;
            }
            Ok(())
        })?;
        Ok(Self::new(world, config, seed))
    }

    pub fn new(world: WorldConfig, config: ReactanceConfig, seed: u64) -> Self {
        let rngs = RngFactory::new(seed);
        let agents = init_population(&world, &config, &rngs);
        let messenger = Messenger {
            core: AgentCore::spawn(world.population_size as u32, &world.torus(), &rngs),
            message: config.message,
            broadcasting: config.broadcasting,
        };
        Self { world, config, agents, messenger }
    }

    /// Assemble a model from explicit agents (messenger id must be the highest).
    pub fn from_parts(world: WorldConfig, config: ReactanceConfig, agents: Vec<OpinionAgent>, messenger: Messenger) -> Self {
        assert!(agents.iter().all(|a| a.core.id < messenger.core.id), "messenger must carry the highest id");
        let mut config = config;
        config.message = messenger.message;
        config.broadcasting = messenger.broadcasting;
        Self { world, config, agents, messenger }
    }

    pub fn config(&self) -> &ReactanceConfig {
        &self.config
    }

    pub fn citizens(&self) -> &[OpinionAgent] {
        &self.agents
    }

    pub fn messenger(&self) -> &Messenger {
        &self.messenger
    }

    pub fn targets(&self) -> TargetCounts {
        classify_targets(&self.agents, self.messenger.message, &self.config)
    }

    /// Random-walk phase of a tick.
    pub fn move_agents(&mut self) {
        step_world(
            self.agents.iter_mut().map(|a| &mut a.core).chain(std::iter::once(&mut self.messenger.core)),
            &self.world,
        );
    }

    /// Encounter phase of a tick: every meeting applied in pair order.
    pub fn interact(&mut self) {
        let n = self.agents.len();
        let torus = self.world.torus();
        let radius = self.world.encounter_radius;
        let mut positions: Vec<(f64, f64)> = self.agents.iter().map(|a| a.core.position()).collect();
        let pairs: Vec<(usize, usize)> = if self.config.contagion {
            positions.push(self.messenger.core.position());
            encounters(&positions, &torus, radius)
        } else {
            within_radius(&positions, &torus, self.messenger.core.position(), radius)
                .into_iter()
                .map(|i| (i, n))
                .collect()
        };
        for (i, j) in pairs {
            if j == n {
                if self.messenger.broadcasting {
                    let agent = &mut self.agents[i];
                    agent.opinion = messenger_influence(agent, self.messenger.message, &self.config);
                }
            } else if self.config.contagion {
                let (a, b) = peer_interact(&self.agents[i], &self.agents[j], &self.config);
                self.agents[i].opinion = a;
                self.agents[j].opinion = b;
            }
        }
    }
}

fn set_config(config: &mut ReactanceConfig, path: &str, value: &ParamValue) -> Result<(), ParamError> {
    match (path, value) {
        ("message", ParamValue::Number(v)) => config.message = *v,
        ("broadcasting", ParamValue::Bool(b)) => config.broadcasting = *b,
        ("reactance_delta", ParamValue::Number(v)) => config.reactance_delta = *v,
        ("contagion", ParamValue::Bool(b)) => config.contagion = *b,
        ("confirmation_bias", ParamValue::Bool(b)) => config.confirmation_bias = *b,
        ("peer_reactance", ParamValue::Bool(b)) => config.peer_reactance = *b,
        ("self_weight", ParamValue::Number(v)) => {
            if *v <= 0.5 {
                return Err(ParamError::ValueOutOfRange { path: path.into(), value: *v, min: 0.5, max: 1.0 });
            }
            config.self_weight = *v
        }
        ("agree_tolerance", ParamValue::Number(v)) => config.agree_tolerance = *v,
        ("convinced_tolerance", ParamValue::Number(v)) => config.convinced_tolerance = *v,
        ("extremization_step", ParamValue::Number(v)) => config.extremization_step = *v,
        ("initial_mean", ParamValue::Number(v)) => config.initial_mean = *v,
        ("init_variance", ParamValue::Number(v)) => config.init_variance = *v,
        ("susceptible_fraction", ParamValue::Number(v)) => config.susceptible_fraction = *v,
        _ => return Err(ParamError::UnknownParameter { path: path.to_string() }),
    }
    Ok(())
}

impl Model for ReactanceModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Reactance
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
            "message" => self.messenger.message.into(),
            "broadcasting" => self.messenger.broadcasting.into(),
            "reactance_delta" => c.reactance_delta.into(),
            "contagion" => c.contagion.into(),
            "confirmation_bias" => c.confirmation_bias.into(),
            "peer_reactance" => c.peer_reactance.into(),
            "self_weight" => c.self_weight.into(),
            "agree_tolerance" => c.agree_tolerance.into(),
            "convinced_tolerance" => c.convinced_tolerance.into(),
            "extremization_step" => c.extremization_step.into(),
            "initial_mean" => c.initial_mean.into(),
            "init_variance" => c.init_variance.into(),
            "susceptible_fraction" => c.susceptible_fraction.into(),
            _ => return None,
        })
    }

    fn apply(&mut self, path: &str, value: &ParamValue) -> Result<(), ParamError> {
        set_config(&mut self.config, path, value)?;
        self.messenger.message = self.config.message;
        self.messenger.broadcasting = self.config.broadcasting;
        Ok(())
    }

    fn step(&mut self) {
        self.move_agents();
        self.interact();
    }

    fn metric_names(&self) -> Vec<String> {
        metric_names()
    }

    fn metrics(&self) -> Vec<f64> {
        let all = mean_min_max(self.agents.iter().map(|a| a.opinion));
        let rational = mean_min_max(self.agents.iter().filter(|a| !a.susceptible).map(|a| a.opinion));
        let susceptible = mean_min_max(self.agents.iter().filter(|a| a.susceptible).map(|a| a.opinion));
        let t = self.targets();
        let n = self.agents.len().max(1) as f64;
        let susceptible_count = self.agents.iter().filter(|a| a.susceptible).count() as f64;
        vec![
            self.messenger.message,
            if self.messenger.broadcasting { 1.0 } else { 0.0 },
            all.0,
            all.1,
            all.2,
            rational.0,
            rational.1,
            rational.2,
            susceptible.0,
            susceptible.1,
            susceptible.2,
            t.convinced as f64,
            t.positive as f64,
            t.negative as f64,
            100.0 * t.convinced as f64 / n,
            100.0 * t.positive as f64 / n,
            100.0 * t.negative as f64 / n,
            self.agents.len() as f64 - susceptible_count,
            susceptible_count,
        ]
    }

    fn agents(&self) -> Vec<AgentView> {
        let mut views: Vec<AgentView> = self
            .agents
            .iter()
            .map(|a| AgentView {
                id: a.core.id,
                x: a.core.x,
                y: a.core.y,
                shape: if a.susceptible { Shape::Triangle } else { Shape::Circle },
                colour: Colour::Opinion { value: a.opinion },
                halo: false,
                visible: true,
                opinion: Some(a.opinion),
                satisfaction: None,
                history_len: None,
            })
            .collect();
        views.push(AgentView {
            id: self.messenger.core.id,
            x: self.messenger.core.x,
            y: self.messenger.core.y,
            shape: Shape::Square,
            colour: Colour::Opinion { value: self.messenger.message },
            halo: false,
            visible: self.messenger.broadcasting,
            opinion: Some(self.messenger.message),
            satisfaction: None,
            history_len: None,
        });
        views
    }

    fn halted(&self) -> bool {
        stop_condition(&self.targets())
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
