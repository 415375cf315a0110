//! The authoritative avatar session: staged control inputs plus the
//! per-tick compose, smooth and blink pipeline.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use crate::blend::{
    blink_offsets, compose, smooth_state, BlendConfigError, BlinkSchedule, Layer, SmoothingConfig,
};
use crate::lipsync::{PhonemeTrack, RampConfig, TrackSampler, VisemeWeights};
use crate::protocol::{Command, ErrorCode, FramePayload, Request, Response};
use crate::retarget::{
    au_frame_to_controls, controls_to_offsets, emotion_to_aus, AuControls, AuProbabilityFrame,
    RetargetOptions,
};
use crate::rig::{
    AppearanceParams, BoneId, BoneOffset, BonePose, CameraPose, HeadPose, PresetId, RigDefinition,
    RigState,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlinkConfig {
    pub seed: u64,
    pub interval_s: (f64, f64),
    pub duration_ms: f64,
}

impl BlinkConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            interval_s: BlinkSchedule::DEFAULT_INTERVAL_S,
            duration_ms: BlinkSchedule::DEFAULT_DURATION_MS,
        }
    }

    fn schedule(&self, start_ms: f64) -> Result<BlinkSchedule, BlendConfigError> {
        BlinkSchedule::new(self.seed, self.interval_s, self.duration_ms, start_ms)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionConfig {
    pub smoothing: SmoothingConfig,
    pub ramp: RampConfig,
    pub retarget: RetargetOptions,
    /// `None` disables autonomous blinking.
    pub blink: Option<BlinkConfig>,
}

impl SessionConfig {
    pub const DEFAULT_ALPHA: f64 = 0.5;
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            smoothing: SmoothingConfig::new(Self::DEFAULT_ALPHA).expect("valid alpha"),
            ramp: RampConfig::default(),
            retarget: RetargetOptions::default(),
            blink: Some(BlinkConfig::with_seed(0)),
        }
    }
}

#[derive(Clone, Debug)]
struct ActiveTrack {
    sampler: TrackSampler,
    start_ms: f64,
    offset_ms: f64,
}

impl ActiveTrack {
    fn local_time(&self, now: f64) -> f64 {
        now - self.start_ms + self.offset_ms
    }

    fn finished(&self, now: f64) -> bool {
        match self.sampler.support() {
            Some((_, end)) => self.local_time(now) >= end,
            None => true,
        }
    }
}

/// One avatar's state, meant to be owned by a single task that calls
/// [`Session::handle`] and [`Session::tick`].
#[derive(Clone, Debug)]
pub struct Session {
    defs: Arc<RigDefinition>,
    config: SessionConfig,
    rest: RigState,

    direct: BTreeMap<BoneId, BonePose>,
    aus: AuControls,
    bone_frame: Vec<BoneOffset>,
    manual_visemes: VisemeWeights,
    track: Option<ActiveTrack>,
    head: HeadPose,
    appearance: AppearanceParams,
    camera: CameraPose,

    smoothed: RigState,
    blink: Option<BlinkSchedule>,
    tick: u64,
    last_frame: FramePayload,
}

impl Session {
    pub fn new(
        defs: Arc<RigDefinition>,
        config: SessionConfig,
        start_ms: f64,
    ) -> Result<Self, BlendConfigError> {
        let blink = config.blink.map(|b| b.schedule(start_ms)).transpose()?;
        let rest = defs.rest_state();
        let last_frame = rest_frame(0, start_ms, &rest);
        Ok(Self {
            camera: rest.camera,
            head: rest.head,
            appearance: rest.appearance,
            smoothed: rest.clone(),
            rest,
            defs,
            config,
            direct: BTreeMap::new(),
            aus: AuControls::zero(),
            bone_frame: Vec::new(),
            manual_visemes: VisemeWeights::new(),
            track: None,
            blink,
            tick: 0,
            last_frame,
        })
    }

    pub fn defs(&self) -> &Arc<RigDefinition> {
        &self.defs
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn last_frame(&self) -> &FramePayload {
        &self.last_frame
    }

    /// Applies one request and returns its response. Effects show up in the
    /// next [`Session::tick`]. Subscribe and Unsubscribe are acknowledged
    /// here; the transport tracks the subscription itself.
    pub fn handle(&mut self, req: &Request, now: f64) -> Response {
        let id = req.id;
        match &req.command {
            Command::SetBonePose { bone, pose } => {
                self.direct.insert(*bone, pose.normalized());
                Response::ok(id)
            }
            Command::SetAus { intensities } => {
                for (au, v) in intensities {
                    self.aus.set(*au, *v);
                }
                Response::ok(id)
            }
            Command::SetViseme { viseme, weight } => {
                if !self.defs.has_viseme(viseme) {
                    return Response::error(
                        Some(id),
                        ErrorCode::UnknownViseme,
                        format!("unknown viseme {viseme:?}"),
                    );
                }
                self.manual_visemes.set(viseme, *weight);
                Response::ok(id)
            }
            Command::PlayVisemeTrack { track, offset_ms } => {
                let parsed = match PhonemeTrack::new(track.clone(), &self.defs, &self.config.ramp) {
                    Ok(t) => t,
                    Err(e) => {
                        return Response::error(Some(id), ErrorCode::InvalidTrack, e.to_string())
                    }
                };
                let total_ms = parsed.total_ms();
                self.manual_visemes = VisemeWeights::new();
                self.track = Some(ActiveTrack {
                    sampler: TrackSampler::new(&parsed, &self.config.ramp, &self.defs),
                    start_ms: now,
                    offset_ms: *offset_ms,
                });
                Response::ok(id).with_payload(json!({
                    "track_start_ms": now,
                    "offset_ms": offset_ms,
                    "total_ms": total_ms,
                    "ramp_ms": self.config.ramp.ramp_ms,
                }))
            }
            Command::StopTrack {} => {
                self.track = None;
                Response::ok(id)
            }
            Command::SetHeadPose { yaw, pitch, roll } => {
                let head = HeadPose::clamped(*yaw, *pitch, *roll);
                self.head = head;
                let asked = HeadPose {
                    yaw: *yaw,
                    pitch: *pitch,
                    roll: *roll,
                };
                if asked.in_range() {
                    Response::ok(id)
                } else {
                    Response::ok(id).with_note(format!(
                        "head pose clamped to [-1, 1]: yaw {}, pitch {}, roll {}",
                        head.yaw, head.pitch, head.roll
                    ))
                }
            }
            Command::SetAppearance {
                skin_tone,
                skin_age,
            } => {
                let a = AppearanceParams::clamped(*skin_tone, *skin_age);
                self.appearance = a;
                let asked = AppearanceParams {
                    skin_tone: *skin_tone,
                    skin_age: *skin_age,
                };
                if asked.in_range() {
                    Response::ok(id)
                } else {
                    Response::ok(id).with_note(format!(
                        "appearance clamped to [0, 1]: skin_tone {}, skin_age {}",
                        a.skin_tone, a.skin_age
                    ))
                }
            }
            Command::SetCameraPose { pose } => {
                self.camera = *pose;
                Response::ok(id)
            }
            Command::SetEmotion { label, intensity } => {
                match emotion_to_aus(label, *intensity, &self.defs) {
                    Ok(c) => {
                        self.aus = c;
                        Response::ok(id)
                    }
                    Err(e) => Response::error(Some(id), ErrorCode::UnknownEmotion, e.to_string()),
                }
            }
            Command::AuFrame {
                t_ms,
                probabilities,
            } => {
                let frame = AuProbabilityFrame::new(*t_ms, *probabilities);
                self.aus = au_frame_to_controls(&frame, &self.aus, &self.config.retarget);
                Response::ok(id)
            }
            Command::BoneFrame { offsets, .. } => {
                self.bone_frame = offsets.clone();
                Response::ok(id)
            }
            Command::Subscribe {} | Command::Unsubscribe {} => Response::ok(id),
            Command::QueryState {} => Response::ok(id)
                .with_payload(serde_json::to_value(&self.last_frame).expect("frames serialize")),
            Command::Reset {} => {
                self.reset(now);
                Response::ok(id)
            }
        }
    }

    fn reset(&mut self, now: f64) {
        self.direct.clear();
        self.aus = AuControls::zero();
        self.bone_frame.clear();
        self.manual_visemes = VisemeWeights::new();
        self.track = None;
        self.head = self.rest.head;
        self.appearance = self.rest.appearance;
        self.camera = self.rest.camera;
        self.smoothed = self.rest.clone();
        self.last_frame = rest_frame(self.tick, now, &self.rest);
    }

    /// Current lip-sync weights and whether the lower-face mask applies.
    fn lipsync_weights(&mut self, now: f64) -> (VisemeWeights, bool) {
        if let Some(track) = &self.track {
            if track.finished(now) {
                self.track = None;
            }
        }
        match &self.track {
            Some(track) => {
                let t = track.local_time(now);
                (track.sampler.sample(t), track.sampler.is_active(t))
            }
            None => {
                let w = self.manual_visemes.clone();
                let active = !w.is_zero();
                (w, active)
            }
        }
    }

    /// Composes, smooths and blinks one frame at time `now`.
    pub fn tick(&mut self, now: f64) -> FramePayload {
        let (visemes, lipsync_active) = self.lipsync_weights(now);

        let mut lips = Vec::new();
        for (v, w) in visemes.iter() {
            let id = PresetId::Viseme(v.to_owned());
            lips.extend(
                self.defs
                    .preset_pose(&id, w)
                    .expect("track visemes are validated against the rig"),
            );
        }
        let mut expression = controls_to_offsets(&self.aus, &self.defs);
        expression.extend(self.bone_frame.iter().cloned());
        let direct = self
            .direct
            .iter()
            .map(|(bone, pose)| BoneOffset::between(*bone, self.rest.bone(*bone), pose))
            .collect();

        let layers = [
            Layer::expression(expression),
            Layer::lipsync(lips),
            Layer::direct(direct),
        ];
        let mut target = compose(&self.defs, &layers, lipsync_active);
        target.head = self.head;
        target.appearance = self.appearance;
        target.camera = self.camera;

        self.smoothed = smooth_state(&self.smoothed, &target, &self.config.smoothing);

        let shown = match &self.blink {
            Some(schedule) => {
                let (offsets, next) = blink_offsets(now, schedule, &self.defs);
                self.blink = Some(next);
                if offsets.is_empty() {
                    self.smoothed.clone()
                } else {
                    self.smoothed.with_offsets(offsets.iter())
                }
            }
            None => self.smoothed.clone(),
        };

        self.tick += 1;
        self.last_frame = FramePayload::new(
            self.tick,
            now,
            &shown,
            visemes,
            self.aus.clone(),
            lipsync_active,
        );
        self.last_frame.clone()
    }

    /// Whether `now` falls inside an autonomous blink window.
    pub fn blinking_at(&self, now: f64) -> bool {
        self.blink.as_ref().is_some_and(|b| b.profile_at(now) > 0.0)
    }
}

fn rest_frame(tick: u64, time_ms: f64, rest: &RigState) -> FramePayload {
    FramePayload::new(
        tick,
        time_ms,
        rest,
        VisemeWeights::new(),
        AuControls::zero(),
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipsync::PhonemeEvent;
    use crate::protocol::parse_message;
    use crate::rig::ActionUnit;

    fn session(blink: bool) -> Session {
        let cfg = SessionConfig {
            blink: blink.then(|| BlinkConfig::with_seed(7)),
            ..SessionConfig::default()
        };
        Session::new(Arc::new(RigDefinition::default_rig()), cfg, 0.0).unwrap()
    }

    fn send(s: &mut Session, line: &str, now: f64) -> Response {
        s.handle(&parse_message(line).unwrap(), now)
    }

    #[test]
    fn idle_session_emits_rest_frames() {
        let mut s = session(false);
        let rest = s.defs().rest_state();
        for k in 1..=120 {
            let f = s.tick(k as f64 * 1000.0 / 60.0);
            assert_eq!(f.tick, k);
            assert_eq!(f.state(), rest);
            assert!(!f.lipsync_active);
        }
    }

    #[test]
    fn reset_then_query_gives_rest_frame() {
        let mut s = session(false);
        send(
            &mut s,
            r#"{"id":1,"cmd":"SetEmotion","label":"anger","intensity":1}"#,
            0.0,
        );
        s.tick(16.0);
        send(&mut s, r#"{"id":2,"cmd":"Reset"}"#, 20.0);
        let r = send(&mut s, r#"{"id":3,"cmd":"QueryState"}"#, 20.0);
        let f: FramePayload = serde_json::from_value(r.payload.unwrap()).unwrap();
        assert_eq!(f.state(), s.defs().rest_state());
        assert!(f.active_aus.is_zero());
    }

    #[test]
    fn emotion_is_staged_into_active_aus() {
        let mut s = session(false);
        let r = send(
            &mut s,
            r#"{"id":1,"cmd":"SetEmotion","label":"happiness","intensity":1.0}"#,
            0.0,
        );
        assert!(r.is_ok());
        s.tick(16.0);
        let r = send(&mut s, r#"{"id":2,"cmd":"QueryState"}"#, 17.0);
        let f: FramePayload = serde_json::from_value(r.payload.unwrap()).unwrap();
        let expected = emotion_to_aus("happiness", 1.0, s.defs()).unwrap();
        assert_eq!(f.active_aus, expected);
    }

    #[test]
    fn head_pose_is_clamped_with_note() {
        let mut s = session(false);
        let r = send(
            &mut s,
            r#"{"id":2,"cmd":"SetHeadPose","yaw":1.5,"pitch":0,"roll":0}"#,
            0.0,
        );
        assert!(r.is_ok());
        assert!(r.note.unwrap().contains("clamped"));
        let cfg = SessionConfig {
            smoothing: SmoothingConfig::new(1.0).unwrap(),
            blink: None,
            ..SessionConfig::default()
        };
        let mut s = Session::new(Arc::new(RigDefinition::default_rig()), cfg, 0.0).unwrap();
        send(
            &mut s,
            r#"{"id":2,"cmd":"SetHeadPose","yaw":1.5,"pitch":-3,"roll":0.25}"#,
            0.0,
        );
        let f = s.tick(16.0);
        assert_eq!((f.head.yaw, f.head.pitch, f.head.roll), (1.0, -1.0, 0.25));
    }

    #[test]
    fn track_drives_lipsync_window() {
        let mut s = session(false);
        let track = vec![PhonemeEvent::new("ae", 0, 200)];
        let req = Request::new(
            1,
            Command::PlayVisemeTrack {
                track,
                offset_ms: 0.0,
            },
        );
        let r = s.handle(&req, 0.0);
        assert_eq!(r.payload.unwrap()["track_start_ms"], 0.0);
        let period = 1000.0 / 60.0;
        let mut last_active = 0.0;
        for k in 0..30 {
            let t = k as f64 * period;
            let f = s.tick(t);
            if f.lipsync_active {
                last_active = t;
                assert!(t < 240.0);
            }
        }
        assert!(last_active > 200.0);
    }

    #[test]
    fn unknown_viseme_and_emotion_are_errors() {
        let mut s = session(false);
        let r = send(
            &mut s,
            r#"{"id":1,"cmd":"SetViseme","viseme":"zz","weight":0.5}"#,
            0.0,
        );
        assert_eq!(r.code, Some(ErrorCode::UnknownViseme));
        let r = send(
            &mut s,
            r#"{"id":2,"cmd":"SetEmotion","label":"boredom","intensity":0.5}"#,
            0.0,
        );
        assert_eq!(r.code, Some(ErrorCode::UnknownEmotion));
        let r = send(
            &mut s,
            r#"{"id":3,"cmd":"PlayVisemeTrack","track":[{"phoneme":"qq","start_ms":0,"duration_ms":10}]}"#,
            0.0,
        );
        assert_eq!(r.code, Some(ErrorCode::InvalidTrack));
    }

    #[test]
    fn manual_viseme_masks_expression_lower_face() {
        let cfg = SessionConfig {
            smoothing: SmoothingConfig::new(1.0).unwrap(),
            blink: None,
            ..SessionConfig::default()
        };
        let mut s = Session::new(Arc::new(RigDefinition::default_rig()), cfg, 0.0).unwrap();
        send(
            &mut s,
            r#"{"id":1,"cmd":"SetAUs","intensities":{"12":1.0}}"#,
            0.0,
        );
        let smiling = s.tick(10.0);
        let rest = s.defs().rest_state();
        assert_ne!(
            smiling.bone(BoneId::LIP_CORNER_L),
            rest.bone(BoneId::LIP_CORNER_L)
        );
        send(
            &mut s,
            r#"{"id":2,"cmd":"SetViseme","viseme":"ae","weight":0.0001}"#,
            0.0,
        );
        let f = s.tick(20.0);
        assert!(f.lipsync_active);
        assert_eq!(f.active_aus.get(ActionUnit::new(12).unwrap()), 1.0);
        // Lip corners now come from the (tiny) viseme, not the smile.
        let ae = s
            .defs()
            .preset_pose(&PresetId::Viseme("ae".into()), 0.0001)
            .unwrap();
        let expected = rest.with_offsets(ae.iter());
        assert_eq!(
            f.bone(BoneId::LIP_CORNER_L),
            expected.bone(BoneId::LIP_CORNER_L)
        );
    }

    #[test]
    fn blinks_touch_only_eyelids() {
        let mut s = session(true);
        let rest = s.defs().rest_state();
        let mut blinked = 0;
        for k in 1..=600 {
            let t = k as f64 * 1000.0 / 60.0;
            let f = s.tick(t);
            for id in BoneId::all().filter(|b| !b.is_eyelid()) {
                assert_eq!(f.bone(id), rest.bone(id));
            }
            if f.state() != rest {
                blinked += 1;
            }
        }
        assert!(blinked > 0);
    }
}
