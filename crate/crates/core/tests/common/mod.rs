//! Brute-force re-derivations of the model rules, written from the
//! definitions without calling the engine's update functions, plus random
//! instance generators. Shared by the acceptance suite and the oracle tests.

#![allow(dead_code)]

use mobias_core::halo::{Criterion, CriterionSet, HaloAgent, HaloConfig, HaloModel, ScoreMatrix, TravelMode};
use mobias_core::reactance::{Messenger, OpinionAgent, ReactanceConfig, ReactanceModel, TargetCounts};
use mobias_core::rng::RngFactory;
use mobias_core::world::{AgentCore, WorldConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[allow(clippy::manual_clamp)]
fn clamp01(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else if v > 1.0 {
        1.0
    } else {
        v
    }
}

/// Shortest torus distance squared, by checking all nine periodic images.
fn torus_dist_sq(a: (f64, f64), b: (f64, f64), w: f64, h: f64) -> f64 {
    let mut best = f64::INFINITY;
    for kx in [-1.0, 0.0, 1.0] {
        for ky in [-1.0, 0.0, 1.0] {
            let dx = a.0 - b.0 + kx * w;
            let dy = a.1 - b.1 + ky * h;
            best = best.min(dx * dx + dy * dy);
        }
    }
    best
}

// ---------------------------------------------------------------- reactance

#[derive(Debug, Clone)]
pub struct OpinionInstance {
    pub world: WorldConfig,
    pub config: ReactanceConfig,
    pub agents: Vec<OpinionAgent>,
    pub messenger: Messenger,
}

pub fn random_opinion_instance(seed: u64) -> OpinionInstance {
    let mut r = rng(seed);
    let n = r.random_range(2..=12usize);
    let width = r.random_range(2..=8u32);
    let height = r.random_range(2..=8u32);
    let world = WorldConfig {
        width,
        height,
        encounter_radius: r.random_range(0.3..3.0),
        population_size: n,
        ..WorldConfig::default()
    };
    let config = ReactanceConfig {
        self_weight: r.random_range(0.51..=1.0),
        reactance_delta: if r.random_bool(0.2) { r.random_range(0..=1) as f64 } else { r.random_range(0.0..=1.0) },
        contagion: r.random_bool(0.6),
        confirmation_bias: r.random_bool(0.5),
        agree_tolerance: r.random_range(0.0..0.6),
        convinced_tolerance: r.random_range(0.0..0.2),
        extremization_step: r.random_range(0.0..0.1),
        peer_reactance: r.random_bool(0.4),
        message: r.random_range(0.0..=1.0),
        broadcasting: r.random_bool(0.8),
        ..ReactanceConfig::default()
    };
    let rngs = RngFactory::new(seed);
    let place = |r: &mut ChaCha8Rng, id: u32| {
        AgentCore::at(id, r.random_range(0.0..width as f64), r.random_range(0.0..height as f64), r.random_range(0.0..std::f64::consts::TAU), &rngs)
    };
    let agents = (0..n as u32)
        .map(|id| {
            let opinion = match r.random_range(0..5) {
                0 => 0.0,
                1 => 1.0,
                _ => r.random_range(0.0..=1.0),
            };
            OpinionAgent { core: place(&mut r, id), opinion, susceptible: r.random_bool(0.5) }
        })
        .collect();
    let messenger = Messenger { core: place(&mut r, n as u32), message: config.message, broadcasting: config.broadcasting };
    OpinionInstance { world, config, agents, messenger }
}

impl OpinionInstance {
    pub fn model(&self) -> ReactanceModel {
        ReactanceModel::from_parts(self.world.clone(), self.config.clone(), self.agents.clone(), self.messenger.clone())
    }
}

fn oracle_blend(own: f64, other: f64, w: f64) -> f64 {
    clamp01(w * own + (1.0 - w) * other)
}

fn oracle_away(own: f64, source: f64, w: f64) -> f64 {
    let d = (own - source).abs();
    let sign = if own > source {
        1.0
    } else if own < source {
        -1.0
    } else {
        0.0
    };
    clamp01(own + (1.0 - w) * sign * d)
}

fn oracle_peer(own: f64, own_susceptible: bool, other: f64, c: &ReactanceConfig) -> f64 {
    let d = (own - other).abs();
    if c.peer_reactance && own_susceptible && d > c.reactance_delta {
        oracle_away(own, other, c.self_weight)
    } else if !c.confirmation_bias {
        oracle_blend(own, other, c.self_weight)
    } else if d <= c.agree_tolerance {
        let b = oracle_blend(own, other, c.self_weight);
        if b > 0.5 {
            clamp01(b + c.extremization_step)
        } else if b < 0.5 {
            clamp01(b - c.extremization_step)
        } else {
            b
        }
    } else {
        own
    }
}

/// Opinions after one encounter phase, given agent positions as they stand.
/// Every pair within the radius (messenger last by id) is visited in
/// `(lower id, higher id)` order, reading opinions as already updated.
pub fn oracle_interact(
    world: &WorldConfig,
    c: &ReactanceConfig,
    agents: &[(f64, f64, f64, bool)],
    messenger: (f64, f64),
    message: f64,
    broadcasting: bool,
) -> Vec<f64> {
    let n = agents.len();
    let (w, h) = (world.width as f64, world.height as f64);
    let r2 = world.encounter_radius * world.encounter_radius;
    let pos = |i: usize| if i == n { messenger } else { (agents[i].0, agents[i].1) };
    let mut opinions: Vec<f64> = agents.iter().map(|a| a.2).collect();
    for i in 0..=n {
        for j in i + 1..=n {
            if torus_dist_sq(pos(i), pos(j), w, h) > r2 {
                continue;
            }
            if j == n {
                if !broadcasting {
                    continue;
                }
                let own = opinions[i];
                let d = (own - message).abs();
                opinions[i] = if agents[i].3 && d > c.reactance_delta {
                    oracle_away(own, message, c.self_weight)
                } else {
                    oracle_blend(own, message, c.self_weight)
                };
            } else if c.contagion {
                let (a, b) = (opinions[i], opinions[j]);
                opinions[i] = oracle_peer(a, agents[i].3, b, c);
                opinions[j] = oracle_peer(b, agents[j].3, a, c);
            }
        }
    }
    opinions
}

/// Engine opinions vs oracle opinions after moving and interacting once.
pub fn check_opinion_update(seed: u64) -> Result<(), String> {
    let inst = random_opinion_instance(seed);
    let mut model = inst.model();
    model.move_agents();
    let snapshot: Vec<(f64, f64, f64, bool)> =
        model.citizens().iter().map(|a| (a.core.x, a.core.y, a.opinion, a.susceptible)).collect();
    let m = model.messenger();
    let expected = oracle_interact(&inst.world, &inst.config, &snapshot, (m.core.x, m.core.y), m.message, m.broadcasting);
    model.interact();
    let got: Vec<f64> = model.citizens().iter().map(|a| a.opinion).collect();
    if got == expected {
        Ok(())
    } else {
        Err(format!("seed {seed}: engine {got:?} oracle {expected:?}"))
    }
}

pub fn oracle_classify(opinions: &[(f64, bool)], message: f64, delta: f64, eps: f64) -> (usize, usize, usize) {
    let mut counts = (0, 0, 0);
    for &(o, susceptible) in opinions {
        let d = (o - message).abs();
        if d <= eps {
            counts.0 += 1;
        } else if susceptible && d > delta {
            counts.2 += 1;
        } else {
            counts.1 += 1;
        }
    }
    counts
}

/// Engine target counts (and metrics) after a few random ticks vs a direct
/// count from the definitions.
pub fn check_classification(seed: u64) -> Result<(), String> {
    let inst = random_opinion_instance(seed);
    let mut model = inst.model();
    let ticks = rng(seed ^ 0xC1A55).random_range(0..4);
    for _ in 0..ticks {
        mobias_core::Model::step(&mut model);
    }
    let pop: Vec<(f64, bool)> = model.citizens().iter().map(|a| (a.opinion, a.susceptible)).collect();
    let c = model.config();
    let (convinced, positive, negative) = oracle_classify(&pop, model.messenger().message, c.reactance_delta, c.convinced_tolerance);
    let got = model.targets();
    let expected = TargetCounts { convinced, positive, negative };
    let metrics = mobias_core::Model::metrics(&model);
    let names = mobias_core::reactance::metric_names();
    let metric = |n: &str| metrics[names.iter().position(|x| x == n).unwrap()] as usize;
    let from_metrics = TargetCounts { convinced: metric("convinced"), positive: metric("positive"), negative: metric("negative") };
    if got == expected && from_metrics == expected {
        Ok(())
    } else {
        Err(format!("seed {seed}: engine {got:?} metrics {from_metrics:?} oracle {expected:?}"))
    }
}

// --------------------------------------------------------------------- halo

fn oracle_mark(row: &[f64; 6], p: &[f64; 6], suppressed: &[bool; 6]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..6 {
        if !suppressed[c] {
            num += row[c] * p[c];
            den += p[c];
        }
    }
    (den > 0.0).then(|| num / den)
}

fn oracle_halos(row: &[f64; 6], p: &[f64; 6], threshold: f64, susceptible: bool) -> [bool; 6] {
    let mut s = [false; 6];
    if !susceptible {
        return s;
    }
    for c in 0..6 {
        s[c] = p[c] - row[c] >= threshold;
    }
    // never suppress every weighted criterion
    if (0..6).all(|c| s[c] || p[c] <= 0.0) {
        s = [false; 6];
    }
    s
}

/// Mode index, halos and satisfaction after one evaluation of an agent.
#[allow(clippy::needless_range_loop)]
pub fn oracle_decide(scores: &[[f64; 6]; 4], p: &[f64; 6], mode: usize, susceptible: bool, threshold: f64) -> (usize, [bool; 6], f64) {
    let halos = oracle_halos(&scores[mode], p, threshold, susceptible);
    let mut best = 0;
    let mut best_mark = f64::NEG_INFINITY;
    for m in 0..4 {
        let sup = if m == mode { halos } else { [false; 6] };
        let mark = oracle_mark(&scores[m], p, &sup).unwrap_or(0.0);
        if mark > best_mark {
            best = m;
            best_mark = mark;
        }
    }
    let halos = if best == mode { halos } else { oracle_halos(&scores[best], p, threshold, susceptible) };
    let satisfaction = oracle_mark(&scores[best], p, &halos).unwrap_or(0.0);
    (best, halos, satisfaction)
}

fn halo_bits(set: CriterionSet) -> [bool; 6] {
    let mut out = [false; 6];
    for c in Criterion::ALL {
        out[c.index()] = set.contains(c);
    }
    out
}

pub fn random_halo_population(seed: u64) -> (WorldConfig, HaloConfig, Vec<HaloAgent>) {
    let mut r = rng(seed);
    let n = r.random_range(1..=50usize);
    let mut scores = [[0.0; 6]; 4];
    for row in &mut scores {
        for v in row.iter_mut() {
            *v = if r.random_bool(0.1) { r.random_range(0..=10) as f64 * 10.0 } else { r.random_range(0.0..=100.0) };
        }
    }
    let config = HaloConfig {
        halo_threshold: r.random_range(0.0..40.0),
        scores: ScoreMatrix(scores),
        ..HaloConfig::default()
    };
    let world = WorldConfig::with_population(n);
    let rngs = RngFactory::new(seed);
    let agents = (0..n as u32)
        .map(|id| {
            let mut p = [0.0; 6];
            for v in p.iter_mut() {
                *v = if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..=100.0) };
            }
            if p.iter().all(|v| *v == 0.0) {
                p[r.random_range(0..6)] = 50.0;
            }
            let mode = TravelMode::ALL[r.random_range(0..4)];
            let core = AgentCore::at(id, r.random_range(0.0..40.0), r.random_range(0.0..40.0), 0.0, &rngs);
            HaloAgent::new(core, p, mode, r.random_bool(0.5), &config.scores, &config)
        })
        .collect();
    (world, config, agents)
}

/// Engine evaluation of a random population vs the brute-force rules, over a
/// few ticks with a score change in between.
pub fn check_halo_marks(seed: u64) -> Result<(), String> {
    let (world, config, agents) = random_halo_population(seed);
    let mut model = HaloModel::from_parts(world, config, agents);
    let mut r = rng(seed ^ 0x4A10);
    for round in 0..3 {
        let scores = model.scores().0;
        let threshold = model.config().halo_threshold;
        let expected: Vec<(usize, [bool; 6], f64)> = model
            .population()
            .iter()
            .map(|a| oracle_decide(&scores, &a.priorities, a.current_mode.index(), a.susceptible, threshold))
            .collect();
        model.evaluate();
        for (a, e) in model.population().iter().zip(&expected) {
            let got = (a.current_mode.index(), halo_bits(a.active_halos), a.satisfaction);
            if got != *e {
                return Err(format!("seed {seed} round {round} agent {}: engine {got:?} oracle {e:?}", a.core.id));
            }
            let own = oracle_mark(&scores[a.current_mode.index()], &a.priorities, &e.1).unwrap_or(0.0);
            if a.mark_of(a.current_mode, model.scores()) != own {
                return Err(format!("seed {seed}: mark_of disagrees for agent {}", a.core.id));
            }
        }
        let m = TravelMode::ALL[r.random_range(0..4)];
        let c = Criterion::ALL[r.random_range(0..6)];
        let v: f64 = r.random_range(0.0..=100.0);
        mobias_core::Model::apply(&mut model, &format!("score.{m}.{c}"), &v.into()).map_err(|e| e.to_string())?;
    }
    Ok(())
}
