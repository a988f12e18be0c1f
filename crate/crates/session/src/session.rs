//! Sessions: one engine per session, owned by its own task.
//!
//! Requests reach a session's task through a channel, so commands apply in
//! receipt order and never mid-tick. The task answers into the requesting
//! connection's outbox, which keeps each ack ahead of the frames it announces.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use mobias_core::scenario::{self, CompiledScript, ScenarioError, TriggerQueue};
use mobias_core::{Command, CommandError, MetricsFrame, ModelKind, ParamError, ParamSet, ParamValue, Simulation};
use tokio::sync::mpsc;
use tokio::time::Instant;

use crate::log::{log_file_name, LogRecord, LogWriter};
use crate::outbox::{ConnectionId, FrameEvent, Outbox, Outgoing};
use crate::protocol::{
    Capabilities, ClientMessage, ErrorCode, PauseReason, PlaybackState, ServerMessage, SessionId, Snapshot, Verb, WorldInfo,
    PROTOCOL_VERSION,
};

pub const DEFAULT_RATE: f64 = 10.0;
pub const MAX_RATE: f64 = 1000.0;
/// Largest `step` accepted in one request.
pub const MAX_STEP: u64 = 100_000;

/// Error as sent on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: ErrorCode,
    pub message: String,
    pub path: Option<String>,
}

impl Failure {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), path: None }
    }

    fn into_message(self, id: Option<u64>, session: Option<SessionId>) -> ServerMessage {
        ServerMessage::Error { id, session, code: self.code, message: self.message, path: self.path }
    }
}

impl From<&ParamError> for Failure {
    fn from(e: &ParamError) -> Self {
        let code = match e {
            ParamError::UnknownParameter { .. } => ErrorCode::UnknownParameter,
            ParamError::ValueOutOfRange { .. } => ErrorCode::ValueOutOfRange,
            ParamError::TypeMismatch { .. } => ErrorCode::TypeMismatch,
            ParamError::NotRuntime { .. } => ErrorCode::NotRuntime,
            ParamError::Invalid(_) => ErrorCode::InvalidConfig,
        };
        Self { code, message: e.to_string(), path: e.path().map(str::to_string) }
    }
}

impl From<&CommandError> for Failure {
    fn from(e: &CommandError) -> Self {
        match e {
            CommandError::Param(p) => p.into(),
            CommandError::TooLate { .. } => Self::new(ErrorCode::TooLate, e.to_string()),
        }
    }
}

/// Configuration-time errors all report as `invalid_config`, keeping the path.
fn config_failure(e: &ScenarioError) -> Failure {
    let code = match e {
        ScenarioError::UnknownScenario(_) => ErrorCode::UnknownScenario,
        _ => ErrorCode::InvalidConfig,
    };
    Failure { code, message: e.to_string(), path: e.path().map(str::to_string) }
}

enum Request {
    Control { id: Option<u64>, verb: Verb, reply: Arc<Outbox> },
    Subscribe { id: Option<u64>, outbox: Arc<Outbox> },
    Unsubscribe { id: Option<u64>, reply: Arc<Outbox> },
    Disconnect(ConnectionId),
    Close { id: Option<u64>, reply: Option<Arc<Outbox>> },
}

struct Handle {
    tx: mpsc::UnboundedSender<Request>,
}

/// Every live session of a server.
#[derive(Default)]
pub struct SessionManager {
    next_session: AtomicU64,
    next_connection: AtomicU64,
    sessions: Mutex<HashMap<SessionId, Handle>>,
    log_dir: Option<PathBuf>,
}

impl SessionManager {
    pub fn new(log_dir: Option<PathBuf>) -> Self {
        Self { log_dir, ..Self::default() }
    }

    pub fn connection_id(&self) -> ConnectionId {
        self.next_connection.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session table").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Route one client message; every outcome lands in `outbox`.
    pub fn dispatch(&self, message: ClientMessage, outbox: &Arc<Outbox>) {
        match message {
            ClientMessage::Create { id, protocol_version, model, scenario, overrides, seed, commands } => {
                if let Some(v) = protocol_version.filter(|v| *v != PROTOCOL_VERSION) {
                    let text = format!("protocol version {v} is not supported (server speaks {PROTOCOL_VERSION})");
                    outbox.send(ServerMessage::error(id, None, ErrorCode::UnsupportedVersion, text));
                    return;
                }
                let spec = CreateSpec { model, scenario, overrides, seed, commands };
                match self.create(spec) {
                    Ok((session, ack)) => {
                        outbox.send(with_id(ack, id));
                        tracing::info!(session, "session created");
                    }
                    Err(f) => outbox.send(f.into_message(id, None)),
                }
            }
            ClientMessage::Control { id, session, verb } => self.forward(session, id, outbox, Request::Control { id, verb, reply: outbox.clone() }),
            ClientMessage::Subscribe { id, session } => self.forward(session, id, outbox, Request::Subscribe { id, outbox: outbox.clone() }),
            ClientMessage::Unsubscribe { id, session } => self.forward(session, id, outbox, Request::Unsubscribe { id, reply: outbox.clone() }),
            ClientMessage::Close { id, session } => {
                let handle = self.sessions.lock().expect("session table").remove(&session);
                match handle {
                    Some(h) => {
                        let _ = h.tx.send(Request::Close { id, reply: Some(outbox.clone()) });
                    }
                    None => outbox.send(unknown_session(id, session)),
                }
            }
        }
    }

    fn forward(&self, session: SessionId, id: Option<u64>, outbox: &Arc<Outbox>, request: Request) {
        let sent = self.sessions.lock().expect("session table").get(&session).map(|h| h.tx.send(request).is_ok());
        if sent != Some(true) {
            outbox.send(unknown_session(id, session));
        }
    }

    /// Drop a closed connection's subscriptions everywhere.
    pub fn disconnect(&self, connection: ConnectionId) {
        for h in self.sessions.lock().expect("session table").values() {
            let _ = h.tx.send(Request::Disconnect(connection));
        }
    }

    /// Stop every session task.
    pub fn shutdown(&self) {
        for (_, h) in self.sessions.lock().expect("session table").drain() {
            let _ = h.tx.send(Request::Close { id: None, reply: None });
        }
    }

    /// Build a paused session at tick 0. Returns its id and the `create` ack.
    pub fn create(&self, spec: CreateSpec) -> Result<(SessionId, ServerMessage), Failure> {
        let id = self.next_session.fetch_add(1, Ordering::Relaxed) + 1;
        let mut state = SessionState::build(id, spec)?;
        if let Some(dir) = &self.log_dir {
            let header = LogRecord::Header {
                protocol_version: PROTOCOL_VERSION,
                session: id,
                model: state.sim.kind(),
                seed: state.seed,
                overrides: state.overrides.clone(),
                scenario: state.preset.as_ref().map(|p| p.script.name.clone()),
            };
            let writer = LogWriter::create(&dir.join(log_file_name(id)), &header)
                .map_err(|e| Failure::new(ErrorCode::Runtime, e.to_string()))?;
            state.log = Some(writer);
        }
        let ack = state.ack(None, "create", None, true, true);
        let (tx, rx) = mpsc::unbounded_channel();
        self.sessions.lock().expect("session table").insert(id, Handle { tx });
        tokio::spawn(state.run(rx));
        Ok((id, ack))
    }
}

fn with_id(mut message: ServerMessage, new_id: Option<u64>) -> ServerMessage {
    if let ServerMessage::Ack { id, .. } = &mut message {
        *id = new_id;
    }
    message
}

fn unknown_session(id: Option<u64>, session: SessionId) -> ServerMessage {
    ServerMessage::error(id, Some(session), ErrorCode::UnknownSession, format!("no session {session}"))
}

/// What to build a session from.
#[derive(Debug, Clone, Default)]
pub struct CreateSpec {
    pub model: Option<ModelKind>,
    pub scenario: Option<String>,
    pub overrides: ParamSet,
    pub seed: Option<u64>,
    pub commands: Vec<Command>,
}

struct Preset {
    script: CompiledScript,
    triggers: TriggerQueue,
    ended: bool,
}

struct SessionState {
    id: SessionId,
    seed: u64,
    overrides: ParamSet,
    sim: Simulation,
    last: MetricsFrame,
    preset: Option<Preset>,
    playing: bool,
    rate: f64,
    subscribers: Vec<Arc<Outbox>>,
    log: Option<LogWriter>,
    logged: usize,
}

impl SessionState {
    fn build(id: SessionId, spec: CreateSpec) -> Result<Self, Failure> {
        let (sim, overrides, seed, preset) = match (&spec.scenario, spec.model) {
            (Some(name), model) => {
                let script = scenario::builtin(name)
                    .and_then(|s| s.compile())
                    .and_then(|s| s.with_overrides(&spec.overrides))
                    .map_err(|e| config_failure(&e))?;
                if model.is_some_and(|m| m != script.model) {
                    return Err(Failure::new(ErrorCode::InvalidConfig, format!("scenario `{name}` runs the {} model", script.model)));
                }
                let seed = spec.seed.unwrap_or(script.base_seed);
                let sim = script.simulation(seed).map_err(|e| config_failure(&e))?;
                let overrides = script.overrides.clone();
                let triggers = TriggerQueue::new(script.triggers.clone());
                (sim, overrides, seed, Some(Preset { script, triggers, ended: false }))
            }
            (None, Some(model)) => {
                let seed = spec.seed.unwrap_or(0);
                let sim = Simulation::new(model, &spec.overrides, seed).map_err(|e| config_failure(&ScenarioError::Build(e)))?;
                (sim, spec.overrides, seed, None)
            }
            (None, None) => return Err(Failure::new(ErrorCode::BadRequest, "create needs a `model` or a `scenario`")),
        };
        let mut state = SessionState {
            id,
            seed,
            overrides,
            last: sim.frame(),
            sim,
            preset,
            playing: false,
            rate: DEFAULT_RATE,
            subscribers: Vec::new(),
            log: None,
            logged: 0,
        };
        for command in spec.commands {
            state.sim.schedule(command).map_err(|e| Failure::from(&e))?;
        }
        Ok(state)
    }

    fn playback(&self) -> PlaybackState {
        if self.playing {
            PlaybackState::Running
        } else {
            PlaybackState::Paused
        }
    }

    fn values(&self) -> BTreeMap<String, ParamValue> {
        self.sim
            .parameters()
            .iter()
            .filter(|s| !s.is_action())
            .filter_map(|s| Some((s.path.clone(), self.sim.model().value(&s.path)?)))
            .collect()
    }

    fn capabilities(&self) -> Capabilities {
        let world = self.sim.model().world();
        Capabilities {
            protocol_version: PROTOCOL_VERSION,
            session: self.id,
            model: self.sim.kind(),
            seed: self.seed,
            scenario: self.preset.as_ref().map(|p| p.script.name.clone()),
            world: WorldInfo { width: world.width, height: world.height },
            parameters: self.sim.parameters().to_vec(),
            values: self.values(),
            metrics: self.sim.metric_names().to_vec(),
            rate: self.rate,
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            tick: self.sim.tick(),
            metrics: self.last.values.clone(),
            agents: self.sim.agents(),
            values: self.values(),
            playback: self.playback(),
            halted: self.sim.halted(),
        }
    }

    fn ack(&self, id: Option<u64>, request: &str, apply_tick: Option<u64>, capabilities: bool, snapshot: bool) -> ServerMessage {
        ServerMessage::Ack {
            id,
            session: self.id,
            request: request.to_string(),
            tick: self.sim.tick(),
            apply_tick,
            playback: self.playback(),
            capabilities: capabilities.then(|| Box::new(self.capabilities())),
            snapshot: snapshot.then(|| Box::new(self.snapshot())),
        }
    }

    fn broadcast(&self, message: ServerMessage) {
        for s in &self.subscribers {
            s.send(message.clone());
        }
    }

    fn pause(&mut self, reason: PauseReason) {
        if self.playing {
            self.playing = false;
            self.broadcast(ServerMessage::Playback { session: self.id, tick: self.sim.tick(), state: PlaybackState::Paused, reason });
        }
    }

    /// One tick: arm preset triggers, advance, log, fan out, auto-pause.
    fn advance(&mut self) -> Result<(), Failure> {
        if let Some(p) = &mut self.preset {
            p.triggers.poll(&mut self.sim, &self.last).map_err(|e| config_failure(&e))?;
        }
        let frame = self.sim.advance().map_err(|e| Failure::from(&e))?;
        if let Some(log) = &mut self.log {
            let fresh = &self.sim.applied()[self.logged..];
            if let Err(e) = log.commands(fresh) {
                tracing::warn!(session = self.id, "command log disabled: {e}");
                self.log = None;
            }
        }
        self.logged = self.sim.applied().len();
        self.last = frame.clone();
        if !self.subscribers.is_empty() {
            let event = FrameEvent { session: self.id, frame: Arc::new(frame), agents: Arc::new(self.sim.agents()) };
            for s in &self.subscribers {
                s.push(Outgoing::Frame(event.clone()));
            }
        }
        if self.sim.halted() {
            self.pause(PauseReason::Halted);
        }
        if let Some(p) = &mut self.preset {
            if !p.ended && p.script.stop_reason(&self.sim, &self.last, p.triggers.is_done()).is_some() {
                p.ended = true;
                self.pause(PauseReason::ScenarioEnd);
            }
        }
        Ok(())
    }

    fn tick_failed(&mut self, failure: Failure) {
        tracing::warn!(session = self.id, "tick failed: {}", failure.message);
        self.pause(PauseReason::Error);
        self.broadcast(failure.into_message(None, Some(self.id)));
    }

    fn control(&mut self, id: Option<u64>, verb: Verb, reply: &Outbox) -> Result<(), Failure> {
        let name = verb.name();
        let apply_tick = match verb {
            Verb::Play => {
                self.playing = true;
                None
            }
            Verb::Pause => {
                self.playing = false;
                None
            }
            Verb::Step { n } => {
                if n > MAX_STEP {
                    return Err(Failure::new(ErrorCode::BadRequest, format!("step count {n} exceeds {MAX_STEP}")));
                }
                for _ in 0..n {
                    if let Err(f) = self.advance() {
                        self.tick_failed(f.clone());
                        return Err(f);
                    }
                }
                None
            }
            Verb::Set { path, value } => Some(self.schedule(&path, value, false)?),
            Verb::Action { name, value } => Some(self.schedule(&name, value, true)?),
            Verb::Rate { ticks_per_second } => {
                if !(ticks_per_second > 0.0 && ticks_per_second <= MAX_RATE) {
                    let text = format!("rate {ticks_per_second} is outside (0, {MAX_RATE}]");
                    return Err(Failure { code: ErrorCode::ValueOutOfRange, message: text, path: Some("rate".into()) });
                }
                self.rate = ticks_per_second;
                None
            }
        };
        reply.send(self.ack(id, name, apply_tick, false, false));
        Ok(())
    }

    fn schedule(&mut self, path: &str, value: ParamValue, action: bool) -> Result<u64, Failure> {
        let spec = self.sim.parameters().iter().find(|s| s.path == path);
        if let Some(spec) = spec {
            if spec.is_action() != action {
                let text = if action { format!("`{path}` is a parameter; use `set`") } else { format!("`{path}` is an action; use `action`") };
                return Err(Failure { code: ErrorCode::TypeMismatch, message: text, path: Some(path.to_string()) });
            }
        }
        self.sim.schedule_next(path, value).map_err(|e| Failure::from(&e))
    }

    fn handle(&mut self, request: Request) -> bool {
        match request {
            Request::Control { id, verb, reply } => {
                if let Err(f) = self.control(id, verb, &reply) {
                    reply.send(f.into_message(id, Some(self.id)));
                }
            }
            Request::Subscribe { id, outbox } => {
                if !self.subscribers.iter().any(|s| Arc::ptr_eq(s, &outbox)) {
                    self.subscribers.push(outbox.clone());
                }
                outbox.send(self.ack(id, "subscribe", None, true, true));
                outbox.push(Outgoing::Subscribed(self.id));
            }
            Request::Unsubscribe { id, reply } => {
                self.subscribers.retain(|s| !Arc::ptr_eq(s, &reply));
                reply.send(self.ack(id, "unsubscribe", None, false, false));
            }
            Request::Disconnect(connection) => self.subscribers.retain(|s| s.connection() != connection && !s.is_closed()),
            Request::Close { id, reply } => {
                self.playing = false;
                if let Some(reply) = reply {
                    reply.send(self.ack(id, "close", None, false, false));
                }
                tracing::info!(session = self.id, "session closed");
                return false;
            }
        }
        true
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Request>) {
        let mut next_tick: Option<Instant> = None;
        loop {
            let deadline = if self.playing {
                let period = Duration::from_secs_f64(1.0 / self.rate);
                *next_tick.get_or_insert_with(|| Instant::now() + period)
            } else {
                next_tick = None;
                Instant::now() + Duration::from_secs(3600)
            };
            tokio::select! {
                request = rx.recv() => {
                    let Some(request) = request else { break };
                    if !self.handle(request) {
                        break;
                    }
                }
                _ = tokio::time::sleep_until(deadline), if self.playing => {
                    if let Err(f) = self.advance() {
                        self.tick_failed(f);
                    }
                    let period = Duration::from_secs_f64(1.0 / self.rate);
                    let now = Instant::now();
                    // no catch-up bursts after a stall
                    next_tick = Some(if deadline + period < now { now + period } else { deadline + period });
                }
            }
        }
    }
}
