//! Scenario files: a model, overrides, a timeline of commands and a stop rule.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::predicate::{self, Expr};
use super::ScenarioError;
use crate::engine::{check_command, Command, Simulation};
use crate::model::{metric_names, parameter_specs, ModelKind};
use crate::params::{validate, ParamKind, ParamSet, ParamSpec, ParamValue};

pub const SCRIPT_VERSION: u32 = 1;

/// One entry of `[[commands]]`: either at a fixed `tick` or once `when`
/// first holds, it `set`s a parameter or fires an `action`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ParamValue>,
}

/// Linear change of a real parameter: the value at tick `start + k - 1` is
/// `from + (to - from) * k / ticks` for `k` in `1..=ticks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub path: String,
    pub from: f64,
    pub to: f64,
    pub start: u64,
    pub ticks: u64,
}

impl Ramp {
    pub fn commands(&self) -> Vec<Command> {
        (1..=self.ticks)
            .map(|k| {
                let v = self.from + (self.to - self.from) * k as f64 / self.ticks as f64;
                Command::new(self.start + k - 1, self.path.clone(), v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    /// Hard cap on executed ticks.
    pub max_ticks: u64,
    /// Stop once this predicate holds after a tick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<String>,
    /// Stop once the message has nobody left to persuade (`positive == 0`).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub positive_target_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub name: String,
    #[serde(default = "default_version")]
    pub version: u32,
    pub model: ModelKind,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub overrides: toml::Table,
    #[serde(default)]
    pub commands: Vec<CommandEntry>,
    #[serde(default)]
    pub ramps: Vec<Ramp>,
    pub stop: StopRule,
}

fn default_version() -> u32 {
    SCRIPT_VERSION
}

fn default_replications() -> u32 {
    1
}

/// A condition-triggered command.
#[derive(Debug, Clone, PartialEq)]
pub struct Trigger {
    pub source: String,
    pub condition: Expr,
    pub target: String,
    pub value: ParamValue,
}

/// A validated script ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledScript {
    pub name: String,
    pub model: ModelKind,
    pub replications: u32,
    pub base_seed: u64,
    pub overrides: ParamSet,
    /// Tick-scheduled commands, ramps included, in file order.
    pub timed: Vec<Command>,
    /// Condition-triggered commands, armed one after another in file order.
    pub triggers: Vec<Trigger>,
    pub max_ticks: u64,
    pub until: Option<Expr>,
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scripts serialize")
    }

    /// Check every path, value and expression against the model.
    pub fn compile(&self) -> Result<CompiledScript, ScenarioError> {
        let invalid = |message: String, path: Option<&str>| ScenarioError::InvalidScript { message, path: path.map(str::to_string) };
        if self.version != SCRIPT_VERSION {
            return Err(invalid(format!("unsupported script version {} (expected {SCRIPT_VERSION})", self.version), None));
        }
        if self.replications == 0 {
            return Err(invalid("replications must be at least 1".into(), None));
        }
        let specs = parameter_specs(self.model);
        let overrides = ParamSet::from_toml(&self.overrides).map_err(|e| invalid(e.to_string(), e.path()))?;
        for (path, value) in overrides.iter() {
            let spec = validate(&specs, path, value).map_err(|e| invalid(e.to_string(), Some(path)))?;
            if spec.is_action() {
                return Err(invalid(format!("`{path}` is an action and cannot be an override"), Some(path)));
            }
        }

        let names = metric_names(self.model);
        let resolvable = |name: &str| {
            name == "tick" || names.iter().any(|n| n == name) || specs.iter().any(|s| s.path == name && !s.is_action())
        };
        let compile_expr = |src: &str, what: &str| -> Result<Expr, ScenarioError> {
            let expr = predicate::parse(src).map_err(|e| invalid(format!("{what} `{src}`: {e}"), None))?;
            if let Some(name) = expr.variables().into_iter().find(|n| !resolvable(n)) {
                return Err(invalid(format!("{what} `{src}` refers to unknown name `{name}`"), Some(name)));
            }
            if expr.variables().is_empty() && expr.holds(&|_| None) == Some(false) {
                return Err(invalid(format!("{what} `{src}` can never hold"), None));
            }
            Ok(expr)
        };

        let mut timed = Vec::new();
        let mut triggers = Vec::new();
        for (i, entry) in self.commands.iter().enumerate() {
            let (target, value) = match (&entry.set, &entry.action) {
                (Some(path), None) => {
                    let value = entry
                        .value
                        .clone()
                        .ok_or_else(|| invalid(format!("command {} sets `{path}` without a value", i + 1), Some(path)))?;
                    (path.clone(), value)
                }
                (None, Some(name)) => (name.clone(), entry.value.clone().unwrap_or(ParamValue::Trigger)),
                _ => return Err(invalid(format!("command {} needs exactly one of `set` or `action`", i + 1), None)),
            };
            check_command(&specs, &target, &value).map_err(|e| invalid(format!("command {}: {e}", i + 1), Some(&target)))?;
            match (entry.tick, &entry.when) {
                (Some(0), None) => return Err(invalid(format!("command {}: ticks start at 1", i + 1), Some(&target))),
                (Some(tick), None) => timed.push(Command { tick, target, value }),
                (None, Some(src)) => {
                    let condition = compile_expr(src, "trigger")?;
                    triggers.push(Trigger { source: src.clone(), condition, target, value });
                }
                _ => return Err(invalid(format!("command {} needs exactly one of `tick` or `when`", i + 1), Some(&target))),
            }
        }

        for ramp in &self.ramps {
            let spec = specs
                .iter()
                .find(|s| s.path == ramp.path)
                .ok_or_else(|| invalid(format!("ramp over unknown parameter `{}`", ramp.path), Some(&ramp.path)))?;
            check_ramp(spec, ramp).map_err(|m| invalid(m, Some(&ramp.path)))?;
            timed.extend(ramp.commands());
        }

        let mut until = self.stop.until.as_deref().map(|src| compile_expr(src, "stop rule")).transpose()?;
        if self.stop.positive_target_empty {
            if self.model != ModelKind::Reactance {
                return Err(invalid("`positive_target_empty` only applies to the reactance model".into(), None));
            }
            let empty = predicate::parse("positive == 0").expect("literal predicate");
            until = Some(match until {
                Some(other) => Expr::Binary(predicate::BinOp::Or, Box::new(empty), Box::new(other)),
                None => empty,
            });
        }

        Ok(CompiledScript {
            name: self.name.clone(),
            model: self.model,
            replications: self.replications,
            base_seed: self.base_seed,
            overrides,
            timed,
            triggers,
            max_ticks: self.stop.max_ticks,
            until,
        })
    }
}

fn check_ramp(spec: &ParamSpec, ramp: &Ramp) -> Result<(), String> {
    let ParamKind::Real { min, max } = spec.kind else {
        return Err(format!("`{}` is not a continuous parameter and cannot be ramped", ramp.path));
    };
    if !spec.runtime {
        return Err(format!("`{}` can only be set at initialisation", ramp.path));
    }
    if ramp.ticks == 0 || ramp.start == 0 {
        return Err("ramps need `start >= 1` and `ticks >= 1`".into());
    }
    for v in [ramp.from, ramp.to] {
        if !(min..=max).contains(&v) {
            return Err(format!("ramp end {v} for `{}` is outside [{min}, {max}]", ramp.path));
        }
    }
    Ok(())
}

impl CompiledScript {
    /// Same script with `extra` overrides layered on top.
    pub fn with_overrides(mut self, extra: &ParamSet) -> Result<Self, ScenarioError> {
        let specs = parameter_specs(self.model);
        for (path, value) in extra.iter() {
            let spec = validate(&specs, path, value).map_err(|e| ScenarioError::InvalidScript { message: e.to_string(), path: Some(path.to_string()) })?;
            if spec.is_action() {
                return Err(ScenarioError::InvalidScript {
                    message: format!("`{path}` is an action and cannot be an override"),
                    path: Some(path.to_string()),
                });
            }
        }
        self.overrides.merge(extra);
        Ok(self)
    }

    /// A fresh simulation with the overrides applied and every tick-scheduled
    /// command queued.
    pub fn simulation(&self, seed: u64) -> Result<Simulation, ScenarioError> {
        let mut sim = Simulation::new(self.model, &self.overrides, seed)?;
        for command in &self.timed {
            sim.schedule(command.clone())?;
        }
        Ok(sim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(body: &str) -> Result<CompiledScript, ScenarioError> {
        ScenarioScript::parse(body)?.compile()
    }

    const BASE: &str = r#"
name = "t"
model = "reactance"
[stop]
max_ticks = 10
"#;

    #[test]
    fn ramp_values() {
        let r = Ramp { path: "urban_planning".into(), from: 10.0, to: 85.0, start: 101, ticks: 100 };
        let cmds = r.commands();
        assert_eq!(cmds.len(), 100);
        assert_eq!((cmds[0].tick, cmds[0].value.as_f64()), (101, Some(10.75)));
        assert_eq!((cmds[99].tick, cmds[99].value.as_f64()), (200, Some(85.0)));
    }

    #[test]
    fn minimal_script_compiles() {
        let c = script(BASE).unwrap();
        assert_eq!(c.replications, 1);
        assert_eq!(c.max_ticks, 10);
        assert!(c.until.is_none());
    }

    #[test]
    fn invalid_scripts_name_the_path() {
        let err = script(&format!("{BASE}\n[overrides]\nno_such = 1\n")).unwrap_err();
        assert_eq!(err.path(), Some("no_such"));

        let bad_cmd = BASE.replace("[stop]", "[[commands]]\ntick = 3\nset = \"mesage\"\nvalue = 0.3\n[stop]");
        assert_eq!(script(&bad_cmd).unwrap_err().path(), Some("mesage"));

        let bad_when = BASE.replace("[stop]", "[[commands]]\nwhen = \"opinion_avg < 0.5\"\nset = \"message\"\nvalue = 0.3\n[stop]");
        assert_eq!(script(&bad_when).unwrap_err().path(), Some("opinion_avg"));

        let never = BASE.replace("[stop]", "[[commands]]\nwhen = \"1 > 2\"\nset = \"message\"\nvalue = 0.3\n[stop]");
        assert!(matches!(script(&never), Err(ScenarioError::InvalidScript { .. })));

        let init_only = BASE.replace("[stop]", "[[commands]]\ntick = 2\nset = \"initial_mean\"\nvalue = 0.3\n[stop]");
        assert_eq!(script(&init_only).unwrap_err().path(), Some("initial_mean"));

        let both = BASE.replace("[stop]", "[[commands]]\ntick = 2\nwhen = \"tick > 1\"\nset = \"message\"\nvalue = 0.3\n[stop]");
        assert!(script(&both).is_err());

        assert!(matches!(script("name = 1"), Err(ScenarioError::Parse(_))));
        assert!(matches!(script(&format!("{BASE}\nbogus = 1\n")), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn positive_target_empty_is_reactance_only() {
        let r = script(&format!("{BASE}positive_target_empty = true\n")).unwrap();
        assert_eq!(r.until.unwrap().to_string(), "(positive == 0)");
        let h = format!("{BASE}positive_target_empty = true\n").replace("reactance", "halo");
        assert!(script(&h).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = ScenarioScript::parse(&BASE.replace("[stop]", "[[commands]]\ntick = 2\nset = \"message\"\nvalue = 0.3\n[stop]")).unwrap();
        assert_eq!(ScenarioScript::parse(&s.to_toml()).unwrap(), s);
    }
}
