//! The session owner: the only task that touches avatar state.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use rigserve_core::clock::Clock;
use rigserve_core::protocol::{Command, ProtocolError, Request, ServerMessage};
use rigserve_core::session::Session;
use serde::Serialize;
use tokio::sync::{mpsc, oneshot};
use tokio::time::{Instant, MissedTickBehavior};

pub type ClientId = u64;

/// Outbound half of a connection as seen by the owner.
pub(crate) struct ClientOut {
    pub lines: mpsc::Sender<Arc<str>>,
    pub goodbye: oneshot::Sender<String>,
}

pub(crate) enum Inbound {
    Connect {
        client: ClientId,
        out: ClientOut,
    },
    Request {
        client: ClientId,
        parsed: Result<Request, ProtocolError>,
    },
    Disconnect {
        client: ClientId,
    },
    Stats(oneshot::Sender<ServerStats>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ServerStats {
    pub ticks: u64,
    /// Ticks whose compose and broadcast finished after the next tick was due.
    pub deadline_misses: u64,
    /// Tick slots the timer skipped because the loop was running late.
    pub skipped_ticks: u64,
    pub commands: u64,
    pub clients: usize,
    pub subscribers: usize,
    pub dropped_subscribers: u64,
}

struct ClientEntry {
    lines: mpsc::Sender<Arc<str>>,
    goodbye: Option<oneshot::Sender<String>>,
    subscribed: bool,
}

pub(crate) struct Hub {
    session: Session,
    clock: Arc<dyn Clock>,
    period: Duration,
    clients: HashMap<ClientId, ClientEntry>,
    stats: ServerStats,
}

impl Hub {
    pub fn new(session: Session, clock: Arc<dyn Clock>, period: Duration) -> Self {
        Self {
            session,
            clock,
            period,
            clients: HashMap::new(),
            stats: ServerStats::default(),
        }
    }

    pub async fn run(
        mut self,
        mut inbound: mpsc::Receiver<Inbound>,
        mut shutdown: oneshot::Receiver<()>,
    ) {
        let mut interval = tokio::time::interval(self.period);
        interval.set_missed_tick_behavior(MissedTickBehavior::Skip);
        // The first tick of a tokio interval fires immediately.
        let mut last_scheduled: Option<Instant> = None;
        loop {
            tokio::select! {
                biased;
                _ = &mut shutdown => break,
                scheduled = interval.tick() => {
                    // Commands that arrived before the deadline land in this frame.
                    while let Ok(msg) = inbound.try_recv() {
                        self.on_message(msg);
                    }
                    self.on_tick();
                    if Instant::now() > scheduled + self.period {
                        self.stats.deadline_misses += 1;
                    }
                    if let Some(prev) = last_scheduled {
                        let slots = (scheduled - prev).as_secs_f64() / self.period.as_secs_f64();
                        self.stats.skipped_ticks += (slots.round() as u64).saturating_sub(1);
                    }
                    last_scheduled = Some(scheduled);
                }
                msg = inbound.recv() => match msg {
                    Some(m) => self.on_message(m),
                    None => break,
                },
            }
        }
        for (_, mut c) in self.clients.drain() {
            if let Some(g) = c.goodbye.take() {
                let _ = g.send("server shutting down".into());
            }
        }
    }

    fn on_message(&mut self, msg: Inbound) {
        match msg {
            Inbound::Connect { client, out } => {
                self.clients.insert(
                    client,
                    ClientEntry {
                        lines: out.lines,
                        goodbye: Some(out.goodbye),
                        subscribed: false,
                    },
                );
            }
            Inbound::Disconnect { client } => {
                self.clients.remove(&client);
            }
            Inbound::Request { client, parsed } => {
                self.stats.commands += 1;
                let response = match parsed {
                    Ok(req) => {
                        let now = self.clock.now_ms();
                        let resp = self.session.handle(&req, now);
                        if let Some(c) = self.clients.get_mut(&client) {
                            match req.command {
                                Command::Subscribe {} => c.subscribed = true,
                                Command::Unsubscribe {} => c.subscribed = false,
                                _ => {}
                            }
                        }
                        resp
                    }
                    Err(e) => e.into_response(),
                };
                let line: Arc<str> = ServerMessage::Response(response).to_line().into();
                self.deliver(client, line);
            }
            Inbound::Stats(reply) => {
                let mut s = self.stats.clone();
                s.clients = self.clients.len();
                s.subscribers = self.clients.values().filter(|c| c.subscribed).count();
                let _ = reply.send(s);
            }
        }
    }

    fn on_tick(&mut self) {
        let frame = self.session.tick(self.clock.now_ms());
        self.stats.ticks += 1;
        let subscribers: Vec<ClientId> = self
            .clients
            .iter()
            .filter(|(_, c)| c.subscribed)
            .map(|(id, _)| *id)
            .collect();
        if subscribers.is_empty() {
            return;
        }
        let line: Arc<str> = ServerMessage::Frame(Box::new(frame)).to_line().into();
        for id in subscribers {
            self.deliver(id, line.clone());
        }
    }

    /// Queues a line for a client, disconnecting it if its backlog is full.
    fn deliver(&mut self, client: ClientId, line: Arc<str>) {
        let Some(c) = self.clients.get_mut(&client) else {
            return;
        };
        match c.lines.try_send(line) {
            Ok(()) => {}
            Err(mpsc::error::TrySendError::Full(_)) => {
                if let Some(g) = c.goodbye.take() {
                    let _ = g.send("backlog exceeded".into());
                }
                self.clients.remove(&client);
                self.stats.dropped_subscribers += 1;
                tracing::warn!(client, "disconnected slow client");
            }
            Err(mpsc::error::TrySendError::Closed(_)) => {
                self.clients.remove(&client);
            }
        }
    }
}
