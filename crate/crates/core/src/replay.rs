//! Timestamped command scripts and deterministic virtual-time playback.

use std::sync::Arc;

use serde_json::Value;

use crate::blend::BlendConfigError;
use crate::protocol::{parse_message_value, FramePayload, ProtocolError, Request, Response};
use crate::rig::RigDefinition;
use crate::session::{Session, SessionConfig};

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("script is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("script must be a JSON array of command objects")]
    NotArray,
    #[error("entry {index}: {message}")]
    Entry { index: usize, message: String },
    #[error("entry {index}: {source}")]
    Command {
        index: usize,
        #[source]
        source: ProtocolError,
    },
    #[error("entry {index}: at_ms {at_ms} is earlier than the previous entry")]
    Unsorted { index: usize, at_ms: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedCommand {
    pub at_ms: f64,
    pub request: Request,
}

/// A list of protocol commands, each with an `at_ms` field. Entries without
/// an `id` are numbered by position, starting at 1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PuppetScript {
    pub entries: Vec<ScriptedCommand>,
}

impl PuppetScript {
    pub fn parse(document: &str) -> Result<Self, ScriptError> {
        let Value::Array(items) = serde_json::from_str(document)? else {
            return Err(ScriptError::NotArray);
        };
        let mut entries = Vec::with_capacity(items.len());
        let mut last = f64::NEG_INFINITY;
        for (index, item) in items.into_iter().enumerate() {
            let Value::Object(mut obj) = item else {
                return Err(ScriptError::Entry {
                    index,
                    message: "entry is not an object".into(),
                });
            };
            let at_ms = obj
                .remove("at_ms")
                .and_then(|v| v.as_f64())
                .filter(|t| *t >= 0.0)
                .ok_or_else(|| ScriptError::Entry {
                    index,
                    message: "missing or negative at_ms".into(),
                })?;
            if at_ms < last {
                return Err(ScriptError::Unsorted { index, at_ms });
            }
            last = at_ms;
            obj.entry("id")
                .or_insert_with(|| Value::from(index as u64 + 1));
            let request = parse_message_value(Value::Object(obj))
                .map_err(|source| ScriptError::Command { index, source })?;
            entries.push(ScriptedCommand { at_ms, request });
        }
        Ok(Self { entries })
    }

    pub fn end_ms(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.at_ms)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReplayOutput {
    pub frames: Vec<FramePayload>,
    pub responses: Vec<Response>,
}

impl ReplayOutput {
    /// The frame stream as it would go over the wire: one JSON line per
    /// frame, each terminated by `\n`.
    pub fn frame_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for f in &self.frames {
            out.extend_from_slice(
                crate::protocol::ServerMessage::Frame(Box::new(f.clone()))
                    .to_line()
                    .as_bytes(),
            );
            out.push(b'\n');
        }
        out
    }
}

/// Runs `script` against a fresh session on a virtual clock. Tick `k`
/// happens at `k * 1000 / tick_hz` ms for k = 1..=floor(duration_ms *
/// tick_hz / 1000); a command is applied at its own `at_ms`, before the
/// first tick at or after it.
pub fn run_virtual(
    defs: Arc<RigDefinition>,
    config: SessionConfig,
    script: &PuppetScript,
    tick_hz: f64,
    duration_ms: f64,
) -> Result<ReplayOutput, BlendConfigError> {
    let mut session = Session::new(defs, config, 0.0)?;
    let ticks = (duration_ms * tick_hz / 1000.0).floor() as u64;
    let mut out = ReplayOutput::default();
    let mut pending = script.entries.iter().peekable();
    for k in 1..=ticks {
        let now = k as f64 * 1000.0 / tick_hz;
        while let Some(e) = pending.next_if(|e| e.at_ms <= now) {
            out.responses.push(session.handle(&e.request, e.at_ms));
        }
        out.frames.push(session.tick(now));
    }
    Ok(out)
}
