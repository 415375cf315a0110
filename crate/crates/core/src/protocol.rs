//! Newline-delimited JSON control protocol.
//!
//! Clients send one command object per line, e.g.
//! `{"id":1,"cmd":"SetHeadPose","yaw":0.2,"pitch":0,"roll":0}`. The server
//! answers every line with exactly one `{"type":"response",...}` object and
//! streams `{"type":"frame",...}` objects to subscribers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::lipsync::{PhonemeEvent, VisemeWeights};
use crate::retarget::AuControls;
use crate::rig::{
    ActionUnit, AppearanceParams, BoneId, BoneOffset, BonePose, CameraPose, HeadPose, RigState,
    BONE_COUNT,
};

/// Client to server command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", deny_unknown_fields)]
pub enum Command {
    SetBonePose {
        bone: BoneId,
        pose: BonePose,
    },
    #[serde(rename = "SetAUs")]
    SetAus {
        intensities: BTreeMap<ActionUnit, f64>,
    },
    SetViseme {
        viseme: String,
        weight: f64,
    },
    PlayVisemeTrack {
        track: Vec<PhonemeEvent>,
        #[serde(default)]
        offset_ms: f64,
    },
    StopTrack {},
    SetHeadPose {
        yaw: f64,
        pitch: f64,
        roll: f64,
    },
    SetAppearance {
        skin_tone: f64,
        skin_age: f64,
    },
    SetCameraPose {
        pose: CameraPose,
    },
    SetEmotion {
        label: String,
        intensity: f64,
    },
    AuFrame {
        t_ms: f64,
        probabilities: [f64; 12],
    },
    BoneFrame {
        t_ms: f64,
        offsets: Vec<BoneOffset>,
    },
    Subscribe {},
    Unsubscribe {},
    QueryState {},
    Reset {},
}

/// Wire names of every command.
pub const COMMAND_NAMES: [&str; 15] = [
    "SetBonePose",
    "SetAUs",
    "SetViseme",
    "PlayVisemeTrack",
    "StopTrack",
    "SetHeadPose",
    "SetAppearance",
    "SetCameraPose",
    "SetEmotion",
    "AuFrame",
    "BoneFrame",
    "Subscribe",
    "Unsubscribe",
    "QueryState",
    "Reset",
];

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SetBonePose { .. } => "SetBonePose",
            Command::SetAus { .. } => "SetAUs",
            Command::SetViseme { .. } => "SetViseme",
            Command::PlayVisemeTrack { .. } => "PlayVisemeTrack",
            Command::StopTrack {} => "StopTrack",
            Command::SetHeadPose { .. } => "SetHeadPose",
            Command::SetAppearance { .. } => "SetAppearance",
            Command::SetCameraPose { .. } => "SetCameraPose",
            Command::SetEmotion { .. } => "SetEmotion",
            Command::AuFrame { .. } => "AuFrame",
            Command::BoneFrame { .. } => "BoneFrame",
            Command::Subscribe {} => "Subscribe",
            Command::Unsubscribe {} => "Unsubscribe",
            Command::QueryState {} => "QueryState",
            Command::Reset {} => "Reset",
        }
    }
}

/// A command with its client-chosen request id.
#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub id: u64,
    pub command: Command,
}

impl Request {
    pub fn new(id: u64, command: Command) -> Self {
        Self { id, command }
    }

    pub fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::from(self.id));
        if let Value::Object(fields) =
            serde_json::to_value(&self.command).expect("commands serialize")
        {
            obj.extend(fields);
        }
        Value::Object(obj)
    }

    /// One protocol line, without the trailing newline.
    pub fn to_line(&self) -> String {
        self.to_value().to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnknownCommand,
    InvalidField,
    OutOfRange,
    InvalidTrack,
    UnknownViseme,
    UnknownEmotion,
    QueueFull,
    ServerFull,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("error codes serialize");
        f.write_str(v.as_str().unwrap_or("error"))
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ProtocolError {
    /// Request id, when the line got far enough to carry one.
    pub id: Option<u64>,
    pub code: ErrorCode,
    pub message: String,
}

impl ProtocolError {
    pub fn new(id: Option<u64>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            id,
            code,
            message: message.into(),
        }
    }

    pub fn into_response(self) -> Response {
        Response::error(self.id, self.code, self.message)
    }
}

/// Parses one protocol line into a validated request.
pub fn parse_message(line: &str) -> Result<Request, ProtocolError> {
    let value: Value = serde_json::from_str(line.trim()).map_err(|e| {
        ProtocolError::new(
            None,
            ErrorCode::Malformed,
            format!("not a JSON object: {e}"),
        )
    })?;
    parse_message_value(value)
}

/// Same as [`parse_message`] for an already-decoded JSON value.
pub fn parse_message_value(value: Value) -> Result<Request, ProtocolError> {
    let Value::Object(mut obj) = value else {
        return Err(ProtocolError::new(
            None,
            ErrorCode::Malformed,
            "message must be a JSON object",
        ));
    };
    let id = match obj.remove("id") {
        Some(v) => v.as_u64().ok_or_else(|| {
            ProtocolError::new(
                None,
                ErrorCode::Malformed,
                "id must be a non-negative integer",
            )
        })?,
        None => {
            return Err(ProtocolError::new(
                None,
                ErrorCode::Malformed,
                "missing request id",
            ))
        }
    };
    let name = match obj.get("cmd") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(ProtocolError::new(
                Some(id),
                ErrorCode::Malformed,
                "cmd must be a string",
            ))
        }
        None => {
            return Err(ProtocolError::new(
                Some(id),
                ErrorCode::Malformed,
                "missing cmd",
            ))
        }
    };
    if !COMMAND_NAMES.contains(&name.as_str()) {
        return Err(ProtocolError::new(
            Some(id),
            ErrorCode::UnknownCommand,
            format!("unknown command {name:?}"),
        ));
    }
    let command: Command = serde_json::from_value(Value::Object(obj)).map_err(|e| {
        ProtocolError::new(Some(id), ErrorCode::InvalidField, format!("{name}: {e}"))
    })?;
    validate_ranges(&command)
        .map_err(|m| ProtocolError::new(Some(id), ErrorCode::OutOfRange, format!("{name}: {m}")))?;
    Ok(Request { id, command })
}

fn unit(v: f64, what: &str) -> Result<(), String> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{what} {v} is outside [0, 1]"))
    }
}

// Head pose and appearance are clamped when applied, not rejected.
fn validate_ranges(cmd: &Command) -> Result<(), String> {
    match cmd {
        Command::SetAus { intensities } => {
            for (au, v) in intensities {
                unit(*v, &format!("{au} intensity"))?;
            }
        }
        Command::SetViseme { weight, .. } => unit(*weight, "weight")?,
        Command::SetEmotion { intensity, .. } => unit(*intensity, "intensity")?,
        Command::AuFrame {
            t_ms,
            probabilities,
        } => {
            if *t_ms < 0.0 {
                return Err(format!("t_ms {t_ms} is negative"));
            }
            for (k, p) in probabilities.iter().enumerate() {
                unit(*p, &format!("probability[{k}]"))?;
            }
        }
        Command::BoneFrame { t_ms, .. } if *t_ms < 0.0 => {
            return Err(format!("t_ms {t_ms} is negative"));
        }
        _ => {}
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

/// Reply to exactly one request line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<u64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<ErrorCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
}

impl Response {
    pub fn ok(id: u64) -> Self {
        Self {
            id: Some(id),
            status: Status::Ok,
            code: None,
            message: None,
            note: None,
            payload: None,
        }
    }

    pub fn error(id: Option<u64>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            id,
            status: Status::Error,
            code: Some(code),
            message: Some(message.into()),
            note: None,
            payload: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn with_payload(mut self, payload: Value) -> Self {
        self.payload = Some(payload);
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// One broadcast tick of avatar state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramePayload {
    pub tick: u64,
    pub time_ms: f64,
    pub bones: Vec<BonePose>,
    pub head: HeadPose,
    pub appearance: AppearanceParams,
    pub camera: CameraPose,
    pub active_visemes: VisemeWeights,
    pub active_aus: AuControls,
    pub lipsync_active: bool,
}

impl FramePayload {
    pub fn new(
        tick: u64,
        time_ms: f64,
        state: &RigState,
        active_visemes: VisemeWeights,
        active_aus: AuControls,
        lipsync_active: bool,
    ) -> Self {
        Self {
            tick,
            time_ms,
            bones: state.bones().to_vec(),
            head: state.head,
            appearance: state.appearance,
            camera: state.camera,
            active_visemes,
            active_aus,
            lipsync_active,
        }
    }

    /// The pose carried by this frame. Panics if the frame lacks 38 bones.
    pub fn state(&self) -> RigState {
        RigState::new(self.bones.clone(), self.head, self.appearance, self.camera)
    }

    pub fn bone(&self, id: BoneId) -> &BonePose {
        &self.bones[id.index()]
    }
}

/// Everything the server writes to a client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Response(Response),
    Frame(Box<FramePayload>),
    Goodbye { reason: String },
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        let msg: ServerMessage = serde_json::from_str(line)?;
        if let ServerMessage::Frame(f) = &msg {
            if f.bones.len() != BONE_COUNT {
                return Err(serde::de::Error::custom(format!(
                    "frame carries {} bones, expected {BONE_COUNT}",
                    f.bones.len()
                )));
            }
        }
        Ok(msg)
    }
}
