//! Wire protocol: JSON text messages over a WebSocket, tagged by `type`.
//!
//! Client to server: `create`, `control`, `subscribe`, `unsubscribe`,
//! `close`. Server to client: `hello` (once, on connect), `ack`, `frame`,
//! `playback` and `error`. Any client message may carry an `id`, which the
//! matching `ack` or `error` echoes.

use std::collections::BTreeMap;

use mobias_core::model::AgentView;
use mobias_core::{Command, ModelKind, ParamSet, ParamSpec, ParamValue};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

pub type SessionId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Start a paused session at tick 0, from a model or a scenario preset.
    Create {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        protocol_version: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<ModelKind>,
        /// Built-in scenario whose overrides, commands and triggers seed the session.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<String>,
        #[serde(default)]
        overrides: ParamSet,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        /// Commands to pre-schedule, e.g. a recorded log being replayed.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        commands: Vec<Command>,
    },
    Control {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        #[serde(flatten)]
        verb: Verb,
    },
    /// Receive every frame after the current tick.
    Subscribe {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
    },
    Unsubscribe {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
    },
    Close {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum Verb {
    Play,
    Pause,
    /// Run `n` ticks now, whatever the playback state.
    Step {
        #[serde(default = "one")]
        n: u64,
    },
    /// Set a runtime parameter at the next tick boundary.
    Set { path: String, value: ParamValue },
    /// Fire an action (or a delta action with a numeric `value`) at the next tick boundary.
    Action {
        name: String,
        #[serde(default = "trigger")]
        value: ParamValue,
    },
    /// Target ticks per second while playing.
    Rate { ticks_per_second: f64 },
}

fn one() -> u64 {
    1
}

fn trigger() -> ParamValue {
    ParamValue::Trigger
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::Play => "play",
            Verb::Pause => "pause",
            Verb::Step { .. } => "step",
            Verb::Set { .. } => "set",
            Verb::Action { .. } => "action",
            Verb::Rate { .. } => "rate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaybackState {
    Paused,
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PauseReason {
    /// The model halted on its own (the reactance messenger has nobody left to persuade).
    Halted,
    /// The preset's stop rule was met.
    ScenarioEnd,
    /// A tick failed; the accompanying `error` says why.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldInfo {
    pub width: u32,
    pub height: u32,
}

/// What a client needs to build controls and charts for a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub protocol_version: u32,
    pub session: SessionId,
    pub model: ModelKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub world: WorldInfo,
    /// Every parameter path; `runtime` ones are controllable live.
    pub parameters: Vec<ParamSpec>,
    /// Current values of the non-action parameters.
    pub values: BTreeMap<String, ParamValue>,
    /// Names of the values in every frame's `metrics`, in order.
    pub metrics: Vec<String>,
    pub rate: f64,
}

/// Full state at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub metrics: Vec<f64>,
    pub agents: Vec<AgentView>,
    pub values: BTreeMap<String, ParamValue>,
    pub playback: PlaybackState,
    pub halted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentUpdate {
    /// Every agent.
    Snapshot { agents: Vec<AgentView> },
    /// Agents whose view changed since the last agent update for this session.
    Delta { agents: Vec<AgentView> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub session: SessionId,
    pub tick: u64,
    pub metrics: Vec<f64>,
    /// Absent when a backlog was coalesced; the next update is a snapshot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<AgentUpdate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    UnsupportedVersion,
    UnknownSession,
    UnknownScenario,
    InvalidConfig,
    UnknownParameter,
    ValueOutOfRange,
    TypeMismatch,
    NotRuntime,
    TooLate,
    Runtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol_version: u32,
        models: Vec<ModelKind>,
        scenarios: Vec<String>,
    },
    Ack {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        session: SessionId,
        /// The request acknowledged: `create`, a control verb, `subscribe`, ...
        request: String,
        /// Session tick when the request was handled.
        tick: u64,
        /// Tick whose frame first reflects a `set` or `action`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        apply_tick: Option<u64>,
        playback: PlaybackState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        capabilities: Option<Box<Capabilities>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshot: Option<Box<Snapshot>>,
    },
    Frame(Frame),
    /// Playback changed without a client asking.
    Playback {
        session: SessionId,
        tick: u64,
        state: PlaybackState,
        reason: PauseReason,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<SessionId>,
        code: ErrorCode,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
    },
}

impl ServerMessage {
    pub fn error(id: Option<u64>, session: Option<SessionId>, code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error { id, session, code, message: message.into(), path: None }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}
