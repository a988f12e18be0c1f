//! Parameter paths, values and validation.
//!
//! A single dotted-path namespace is shared by config files, scenario
//! overrides, runtime commands, CLI `--set` flags and the session protocol.
//! Each model publishes the list of paths it understands as [`ParamSpec`]s.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A value carried by a command or a config entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Number(f64),
    /// Argument-less action trigger (serialized as `null`).
    Trigger,
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Parse the textual form used by `--set path=value`.
    pub fn parse(text: &str) -> Option<ParamValue> {
        match text.trim() {
            "true" | "on" => Some(ParamValue::Bool(true)),
            "false" | "off" => Some(ParamValue::Bool(false)),
            "" => Some(ParamValue::Trigger),
            t => t.parse::<f64>().ok().filter(|v| v.is_finite()).map(ParamValue::Number),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Number(v) => write!(f, "{v}"),
            ParamValue::Trigger => write!(f, "trigger"),
        }
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Number(v)
    }
}

impl From<bool> for ParamValue {
    fn from(b: bool) -> Self {
        ParamValue::Bool(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    /// Continuous value in `[min, max]` (slider).
    Real { min: f64, max: f64 },
    /// Whole number in `[min, max]`.
    Integer { min: f64, max: f64 },
    /// On/off switch.
    Toggle,
    /// Button without argument.
    Action,
    /// Button applying a signed increment in `[min, max]`.
    Delta { min: f64, max: f64 },
}

/// Description of one parameter path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub path: String,
    #[serde(flatten)]
    pub kind: ParamKind,
    /// Settable while the simulation runs (otherwise initialisation only).
    pub runtime: bool,
    pub label: String,
}

impl ParamSpec {
    pub fn real(path: impl Into<String>, min: f64, max: f64, runtime: bool, label: &str) -> Self {
        Self { path: path.into(), kind: ParamKind::Real { min, max }, runtime, label: label.into() }
    }

    pub fn integer(path: impl Into<String>, min: f64, max: f64, label: &str) -> Self {
        Self { path: path.into(), kind: ParamKind::Integer { min, max }, runtime: false, label: label.into() }
    }

    pub fn toggle(path: impl Into<String>, runtime: bool, label: &str) -> Self {
        Self { path: path.into(), kind: ParamKind::Toggle, runtime, label: label.into() }
    }

    pub fn action(path: impl Into<String>, label: &str) -> Self {
        Self { path: path.into(), kind: ParamKind::Action, runtime: true, label: label.into() }
    }

    pub fn delta(path: impl Into<String>, min: f64, max: f64, label: &str) -> Self {
        Self { path: path.into(), kind: ParamKind::Delta { min, max }, runtime: true, label: label.into() }
    }

    pub fn is_action(&self) -> bool {
        matches!(self.kind, ParamKind::Action | ParamKind::Delta { .. })
    }

    /// Check that `value` fits this parameter's kind and range.
    pub fn check(&self, value: &ParamValue) -> Result<(), ParamError> {
        let out_of_range = |v: f64, min: f64, max: f64| ParamError::ValueOutOfRange {
            path: self.path.clone(),
            value: v,
            min,
            max,
        };
        let mismatch = |expected: &'static str| ParamError::TypeMismatch {
            path: self.path.clone(),
            expected,
        };
        match (self.kind, value) {
            (ParamKind::Real { min, max } | ParamKind::Delta { min, max }, ParamValue::Number(v)) => {
                if v.is_finite() && *v >= min && *v <= max {
                    Ok(())
                } else {
                    Err(out_of_range(*v, min, max))
                }
            }
            (ParamKind::Integer { min, max }, ParamValue::Number(v)) => {
                if v.fract() != 0.0 {
                    Err(mismatch("integer"))
                } else if *v >= min && *v <= max {
                    Ok(())
                } else {
                    Err(out_of_range(*v, min, max))
                }
            }
            (ParamKind::Toggle, ParamValue::Bool(_)) => Ok(()),
            (ParamKind::Action, ParamValue::Trigger) => Ok(()),
            (ParamKind::Real { .. } | ParamKind::Delta { .. }, _) => Err(mismatch("number")),
            (ParamKind::Integer { .. }, _) => Err(mismatch("integer")),
            (ParamKind::Toggle, _) => Err(mismatch("boolean")),
            (ParamKind::Action, _) => Err(mismatch("no value")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("unknown parameter `{path}`")]
    UnknownParameter { path: String },
    #[error("value {value} for `{path}` is outside [{min}, {max}]")]
    ValueOutOfRange { path: String, value: f64, min: f64, max: f64 },
    #[error("`{path}` expects {expected}")]
    TypeMismatch { path: String, expected: &'static str },
    #[error("`{path}` can only be set at initialisation")]
    NotRuntime { path: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ParamError {
    /// The parameter path this error is about, if any.
    pub fn path(&self) -> Option<&str> {
        match self {
            ParamError::UnknownParameter { path }
            | ParamError::ValueOutOfRange { path, .. }
            | ParamError::TypeMismatch { path, .. }
            | ParamError::NotRuntime { path } => Some(path),
            ParamError::Invalid(_) => None,
        }
    }
}

/// Look up `path` in `specs` and validate `value` against it.
pub fn validate<'a>(specs: &'a [ParamSpec], path: &str, value: &ParamValue) -> Result<&'a ParamSpec, ParamError> {
    let spec = specs
        .iter()
        .find(|s| s.path == path)
        .ok_or_else(|| ParamError::UnknownParameter { path: path.to_string() })?;
    spec.check(value)?;
    Ok(spec)
}

/// Ordered set of `path = value` overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet(BTreeMap<String, ParamValue>);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, path: impl Into<String>, value: impl Into<ParamValue>) -> &mut Self {
        self.0.insert(path.into(), value.into());
        self
    }

    pub fn with(mut self, path: impl Into<String>, value: impl Into<ParamValue>) -> Self {
        self.set(path, value);
        self
    }

    pub fn get(&self, path: &str) -> Option<&ParamValue> {
        self.0.get(path)
    }

    pub fn remove(&mut self, path: &str) -> Option<ParamValue> {
        self.0.remove(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Layer `other` on top of `self`.
    pub fn merge(&mut self, other: &ParamSet) {
        for (k, v) in other.iter() {
            self.0.insert(k.to_string(), v.clone());
        }
    }

    /// Parse `path=value`.
    pub fn push_assignment(&mut self, assignment: &str) -> Result<(), ParamError> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| ParamError::Invalid(format!("expected <path>=<value>, got `{assignment}`")))?;
        let path = path.trim();
        let value = ParamValue::parse(value).ok_or_else(|| ParamError::TypeMismatch {
            path: path.to_string(),
            expected: "number or boolean",
        })?;
        self.set(path, value);
        Ok(())
    }

    /// Build from a TOML table, flattening nested tables into dotted paths.
    pub fn from_toml(table: &toml::Table) -> Result<Self, ParamError> {
        let mut out = ParamSet::new();
        flatten_into(&mut out, "", table)?;
        Ok(out)
    }

    /// Parse a flat key/value config document.
    pub fn from_toml_str(text: &str) -> Result<Self, ParamError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ParamError::Invalid(e.to_string()))?;
        Self::from_toml(&table)
    }

    pub fn load(path: &Path) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParamError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

fn flatten_into(out: &mut ParamSet, prefix: &str, table: &toml::Table) -> Result<(), ParamError> {
    for (key, value) in table {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match value {
            toml::Value::Table(inner) => flatten_into(out, &path, inner)?,
            toml::Value::Boolean(b) => {
                out.set(path, *b);
            }
            toml::Value::Integer(i) => {
                out.set(path, *i as f64);
            }
            toml::Value::Float(f) => {
                out.set(path, *f);
            }
            _ => {
                return Err(ParamError::TypeMismatch { path, expected: "number or boolean" });
            }
        }
    }
    Ok(())
}
