//! Per-connection delivery queue.
//!
//! Sessions push messages and frames into a connection's [`Outbox`]; the
//! connection's writer drains it in batches and runs them through a
//! [`FrameEncoder`]. Metrics are never dropped. When a writer falls behind,
//! intermediate frames of a batch lose their agents and the last one carries
//! a full snapshot instead.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use mobias_core::model::AgentView;
use mobias_core::MetricsFrame;
use tokio::sync::Notify;

use crate::protocol::{AgentUpdate, Frame, ServerMessage, SessionId};

/// One tick of one session, shared by every subscriber.
#[derive(Debug, Clone)]
pub struct FrameEvent {
    pub session: SessionId,
    pub frame: Arc<MetricsFrame>,
    pub agents: Arc<Vec<AgentView>>,
}

#[derive(Debug, Clone)]
pub enum Outgoing {
    Message(ServerMessage),
    Frame(FrameEvent),
    /// The connection subscribed to `session`: its next agent update is a snapshot.
    Subscribed(SessionId),
}

pub type ConnectionId = u64;

#[derive(Debug)]
pub struct Outbox {
    connection: ConnectionId,
    queue: Mutex<VecDeque<Outgoing>>,
    notify: Notify,
    closed: AtomicBool,
}

impl Outbox {
    pub fn new(connection: ConnectionId) -> Arc<Self> {
        Arc::new(Self { connection, queue: Mutex::new(VecDeque::new()), notify: Notify::new(), closed: AtomicBool::new(false) })
    }

    pub fn connection(&self) -> ConnectionId {
        self.connection
    }

    pub fn push(&self, item: Outgoing) {
        if self.closed.load(Ordering::Acquire) {
            return;
        }
        self.queue.lock().expect("outbox lock").push_back(item);
        self.notify.notify_one();
    }

    pub fn send(&self, message: ServerMessage) {
        self.push(Outgoing::Message(message));
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
        self.notify.notify_one();
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    pub fn len(&self) -> usize {
        self.queue.lock().expect("outbox lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Everything queued so far, waiting if nothing is. Empty once closed.
    pub async fn next_batch(&self) -> Vec<Outgoing> {
        loop {
            let batch: Vec<Outgoing> = self.queue.lock().expect("outbox lock").drain(..).collect();
            if !batch.is_empty() || self.is_closed() {
                return batch;
            }
            self.notify.notified().await;
        }
    }
}

#[derive(Debug, Default)]
struct Sent {
    agents: Option<Arc<Vec<AgentView>>>,
    stale: bool,
}

/// Turns drained batches into wire messages, tracking per-session agent
/// state for deltas.
#[derive(Debug, Default)]
pub struct FrameEncoder {
    sent: HashMap<SessionId, Sent>,
}

impl FrameEncoder {
    pub fn encode(&mut self, batch: Vec<Outgoing>) -> Vec<ServerMessage> {
        let mut last_of: HashMap<SessionId, usize> = HashMap::new();
        for (i, item) in batch.iter().enumerate() {
            if let Outgoing::Frame(e) = item {
                last_of.insert(e.session, i);
            }
        }
        let mut out = Vec::with_capacity(batch.len());
        for (i, item) in batch.into_iter().enumerate() {
            match item {
                Outgoing::Message(m) => out.push(m),
                Outgoing::Subscribed(session) => {
                    self.sent.insert(session, Sent::default());
                }
                Outgoing::Frame(e) => {
                    let sent = self.sent.entry(e.session).or_default();
                    // the first frame after subscribing always carries agents
                    let agents = if last_of[&e.session] == i || sent.agents.is_none() {
                        let update = match (&sent.agents, sent.stale) {
                            (Some(prev), false) => AgentUpdate::Delta { agents: changed(prev, &e.agents) },
                            _ => AgentUpdate::Snapshot { agents: e.agents.to_vec() },
                        };
                        sent.agents = Some(e.agents.clone());
                        sent.stale = false;
                        Some(update)
                    } else {
                        sent.stale = true;
                        None
                    };
                    out.push(ServerMessage::Frame(Frame {
                        session: e.session,
                        tick: e.frame.tick,
                        metrics: e.frame.values.clone(),
                        agents,
                    }));
                }
            }
        }
        out
    }
}

fn changed(prev: &[AgentView], next: &[AgentView]) -> Vec<AgentView> {
    if prev.len() != next.len() {
        return next.to_vec();
    }
    prev.iter().zip(next).filter(|(a, b)| a != b).map(|(_, b)| b.clone()).collect()
}
