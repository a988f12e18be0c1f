//! Executes compiled scripts over seeded replications.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::script::{CompiledScript, Trigger};
use super::ScenarioError;
use crate::engine::{Command, Simulation};
use crate::metrics::MetricsFrame;
use crate::model::ModelKind;
use crate::params::ParamValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxTicks,
    Condition,
}

/// Frame stream of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    /// State after construction (tick 0).
    pub initial: MetricsFrame,
    /// One frame per executed tick, starting at tick 1.
    pub frames: Vec<MetricsFrame>,
    pub stop_reason: StopReason,
    /// Every command applied, with its apply tick.
    pub commands: Vec<Command>,
}

impl Replication {
    pub fn last(&self) -> &MetricsFrame {
        self.frames.last().unwrap_or(&self.initial)
    }
}

/// Resolve a predicate variable: `tick`, a metric of `frame`, or the current
/// value of a parameter path.
pub fn lookup(sim: &Simulation, frame: &MetricsFrame, name: &str) -> Option<f64> {
    if name == "tick" {
        return Some(sim.tick() as f64);
    }
    if let Some(v) = frame.get(sim.metric_names(), name) {
        return Some(v);
    }
    match sim.model().value(name)? {
        ParamValue::Number(v) => Some(v),
        ParamValue::Bool(b) => Some(if b { 1.0 } else { 0.0 }),
        ParamValue::Trigger => None,
    }
}

/// Condition-triggered commands, armed one at a time in order. Each fires
/// at most once.
#[derive(Debug, Clone)]
pub struct TriggerQueue {
    triggers: Vec<Trigger>,
    next: usize,
}

impl TriggerQueue {
    pub fn new(triggers: Vec<Trigger>) -> Self {
        Self { triggers, next: 0 }
    }

    pub fn fired(&self) -> usize {
        self.next
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.triggers.len()
    }

    /// Before a tick: if the armed trigger holds on `frame` (the state the
    /// tick starts from), queue its command for that tick and arm the next.
    pub fn poll(&mut self, sim: &mut Simulation, frame: &MetricsFrame) -> Result<bool, ScenarioError> {
        let Some(trigger) = self.triggers.get(self.next) else {
            return Ok(false);
        };
        if trigger.condition.holds(&|n| lookup(sim, frame, n)) != Some(true) {
            return Ok(false);
        }
        sim.schedule_next(&trigger.target, trigger.value.clone())?;
        self.next += 1;
        Ok(true)
    }
}

impl CompiledScript {
    /// After a tick: why the run should stop, if it should. The `until`
    /// predicate only counts once every trigger has fired.
    pub fn stop_reason(&self, sim: &Simulation, frame: &MetricsFrame, triggers_done: bool) -> Option<StopReason> {
        if triggers_done {
            if let Some(until) = &self.until {
                if until.holds(&|n| lookup(sim, frame, n)) == Some(true) {
                    return Some(StopReason::Condition);
                }
            }
        }
        (sim.tick() >= self.max_ticks).then_some(StopReason::MaxTicks)
    }
}

/// Steps one replication of a script, exposing the live simulation between
/// ticks.
pub struct ReplicationRunner<'a> {
    script: &'a CompiledScript,
    sim: Simulation,
    seed: u64,
    initial: MetricsFrame,
    frames: Vec<MetricsFrame>,
    triggers: TriggerQueue,
    stopped: Option<StopReason>,
}

impl<'a> ReplicationRunner<'a> {
    pub fn new(script: &'a CompiledScript, seed: u64) -> Result<Self, ScenarioError> {
        let sim = script.simulation(seed)?;
        let initial = sim.frame();
        let stopped = (script.max_ticks == 0).then_some(StopReason::MaxTicks);
        let triggers = TriggerQueue::new(script.triggers.clone());
        Ok(Self { script, sim, seed, initial, frames: Vec::new(), triggers, stopped })
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn frames(&self) -> &[MetricsFrame] {
        &self.frames
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    /// Run one tick. Returns `None` once the run has stopped.
    pub fn step(&mut self) -> Result<Option<&MetricsFrame>, ScenarioError> {
        if self.stopped.is_some() {
            return Ok(None);
        }
        let last = self.frames.last().unwrap_or(&self.initial);
        self.triggers.poll(&mut self.sim, last)?;
        let frame = self.sim.advance()?;
        self.stopped = self.script.stop_reason(&self.sim, &frame, self.triggers.is_done());
        self.frames.push(frame);
        Ok(self.frames.last())
    }

    pub fn run_to_end(&mut self) -> Result<(), ScenarioError> {
        while self.step()?.is_some() {}
        Ok(())
    }

    pub fn finish(self) -> Replication {
        Replication {
            seed: self.seed,
            initial: self.initial,
            frames: self.frames,
            stop_reason: self.stopped.unwrap_or(StopReason::MaxTicks),
            commands: self.sim.applied().to_vec(),
        }
    }
}

pub fn run_replication(script: &CompiledScript, seed: u64) -> Result<Replication, ScenarioError> {
    let mut runner = ReplicationRunner::new(script, seed)?;
    runner.run_to_end()?;
    Ok(runner.finish())
}

fn frame_at(r: &Replication, t: usize) -> Option<&MetricsFrame> {
    if t == 0 {
        Some(&r.initial)
    } else {
        r.frames.get(t - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        Stats {
            mean: values.iter().sum::<f64>() / n,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Per-tick statistics of one metric across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Cross-replication aggregates. Tick `t` covers the replications that ran
/// at least `t` ticks; `n[t]` says how many.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub model: ModelKind,
    pub base_seed: u64,
    pub replications: usize,
    pub metric_names: Vec<String>,
    /// Ticks `0..=longest run`.
    pub ticks: Vec<u64>,
    pub n: Vec<usize>,
    pub series: BTreeMap<String, Series>,
    /// Statistics of the last frame of each replication.
    #[serde(rename = "final")]
    pub final_state: BTreeMap<String, Stats>,
    pub final_ticks: Vec<u64>,
    pub stop_reasons: Vec<StopReason>,
}

impl Summary {
    pub fn build(scenario: &str, model: ModelKind, base_seed: u64, metric_names: &[String], reps: &[Replication]) -> Self {
        let longest = reps.iter().map(|r| r.frames.len()).max().unwrap_or(0);
        let ticks: Vec<u64> = (0..=longest as u64).collect();
        let n = (0..=longest).map(|t| reps.iter().filter(|r| frame_at(r, t).is_some()).count()).collect();
        let mut series = BTreeMap::new();
        let mut final_state = BTreeMap::new();
        for (i, name) in metric_names.iter().enumerate() {
            let mut s = Series { mean: Vec::new(), min: Vec::new(), max: Vec::new() };
            for t in 0..=longest {
                let values: Vec<f64> = reps.iter().filter_map(|r| frame_at(r, t)).map(|f| f.values[i]).collect();
                let stats = Stats::of(&values);
                s.mean.push(stats.mean);
                s.min.push(stats.min);
                s.max.push(stats.max);
            }
            series.insert(name.clone(), s);
            let finals: Vec<f64> = reps.iter().map(|r| r.last().values[i]).collect();
            final_state.insert(name.clone(), Stats::of(&finals));
        }
        Summary {
            schema_version: super::export::SCHEMA_VERSION,
            scenario: scenario.to_string(),
            model,
            base_seed,
            replications: reps.len(),
            metric_names: metric_names.to_vec(),
            ticks,
            n,
            series,
            final_state,
            final_ticks: reps.iter().map(|r| r.last().tick).collect(),
            stop_reasons: reps.iter().map(|r| r.stop_reason).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub scenario: String,
    pub model: ModelKind,
    pub base_seed: u64,
    pub metric_names: Vec<String>,
    /// Replication `k` ran with seed `base_seed + k`.
    pub replications: Vec<Replication>,
    pub summary: Summary,
}

/// Run every replication (in parallel) and aggregate.
pub fn run_scenario(script: &CompiledScript) -> Result<RunArtifacts, ScenarioError> {
    let replications: Vec<Replication> = (0..script.replications as u64)
        .into_par_iter()
        .map(|k| run_replication(script, script.base_seed.wrapping_add(k)))
        .collect::<Result<_, _>>()?;
    let metric_names = crate::model::metric_names(script.model);
    let summary = Summary::build(&script.name, script.model, script.base_seed, &metric_names, &replications);
    Ok(RunArtifacts {
        scenario: script.name.clone(),
        model: script.model,
        base_seed: script.base_seed,
        metric_names,
        replications,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioScript;

    fn compile(body: &str) -> CompiledScript {
        ScenarioScript::parse(body).unwrap().compile().unwrap()
    }

    #[test]
    fn triggers_fire_in_order_once_each() {
        let script = compile(
            r#"
name = "t"
model = "reactance"
[overrides]
population_size = 20
[[commands]]
when = "tick >= 3"
set = "message"
value = 0.5
[[commands]]
when = "tick >= 3"
set = "message"
value = 0.4
[[commands]]
tick = 8
set = "message"
value = 0.1
[stop]
max_ticks = 10
"#,
        );
        let rep = run_replication(&script, 1).unwrap();
        let fired: Vec<(u64, Option<f64>)> = rep.commands.iter().map(|c| (c.tick, c.value.as_f64())).collect();
        assert_eq!(fired, [(4, Some(0.5)), (5, Some(0.4)), (8, Some(0.1))]);
        assert_eq!(rep.frames.len(), 10);
        assert_eq!(rep.stop_reason, StopReason::MaxTicks);
    }

    #[test]
    fn stop_rule_waits_for_triggers() {
        let script = compile(
            r#"
name = "t"
model = "habits"
[overrides]
population_size = 10
[[commands]]
when = "tick >= 5"
set = "urban_planning"
value = 60
[stop]
max_ticks = 50
until = "tick >= 2"
"#,
        );
        let rep = run_replication(&script, 1).unwrap();
        assert_eq!(rep.stop_reason, StopReason::Condition);
        assert_eq!(rep.frames.last().unwrap().tick, 6);
    }

    #[test]
    fn zero_ticks_runs_nothing() {
        let script = compile("name = \"z\"\nmodel = \"halo\"\n[overrides]\npopulation_size = 10\n[stop]\nmax_ticks = 0\n");
        let run = run_scenario(&script).unwrap();
        assert!(run.replications[0].frames.is_empty());
        assert_eq!(run.summary.ticks, [0]);
    }

    #[test]
    fn replications_use_consecutive_seeds() {
        let script = compile("name = \"r\"\nmodel = \"habits\"\nreplications = 3\nbase_seed = 40\n[overrides]\npopulation_size = 30\n[stop]\nmax_ticks = 5\n");
        let run = run_scenario(&script).unwrap();
        let seeds: Vec<u64> = run.replications.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, [40, 41, 42]);
        assert_eq!(run.replications[1], run_replication(&script, 41).unwrap());
        assert_eq!(run.summary.n, [3; 6]);
    }
}
