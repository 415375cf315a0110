//! In-process session on a virtual clock, for `--virtual-time` runs.

use std::sync::Arc;

use rigserve_core::protocol::{Command, FramePayload, Request, Response};
use rigserve_core::session::Session;
use rigserve_server::ServerConfig;

use crate::CliError;

pub struct VirtualSession {
    session: Session,
    tick_hz: f64,
    ticks: u64,
    next_id: u64,
}

impl VirtualSession {
    pub fn new(cfg: &ServerConfig) -> Result<Self, CliError> {
        let defs = cfg
            .load_rig()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let sc = cfg
            .session_config()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let session =
            Session::new(Arc::new(defs), sc, 0.0).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            session,
            tick_hz: cfg.tick_hz,
            ticks: 0,
            next_id: 1,
        })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    fn tick_time(&self, k: u64) -> f64 {
        k as f64 * 1000.0 / self.tick_hz
    }

    pub fn handle(&mut self, command: Command, at_ms: f64) -> Response {
        let req = Request::new(self.next_id, command);
        self.next_id += 1;
        self.session.handle(&req, at_ms)
    }

    /// Runs every tick scheduled at or before `t_ms`.
    pub fn run_until(&mut self, t_ms: f64) -> Vec<FramePayload> {
        let mut frames = Vec::new();
        while self.tick_time(self.ticks + 1) <= t_ms {
            self.ticks += 1;
            frames.push(self.session.tick(self.tick_time(self.ticks)));
        }
        frames
    }
}
