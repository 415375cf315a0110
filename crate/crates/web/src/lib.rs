//! In-browser face rig playground compiled to WebAssembly.
//!
//! Everything runs client-side on the core library: AU sliders and emotion
//! presets feed the expression layer, a typed phrase becomes a phoneme track
//! that can be scrubbed, and [`FaceDemo::project`] flattens the facial bones
//! to canvas coordinates.

use rigserve_core::blend::{compose, Layer};
use rigserve_core::lipsync::{
    parse_lexicon, text_to_phoneme_track, Lexicon, RampConfig, TrackSampler, VisemeWeights,
    DEMO_LEXICON,
};
use rigserve_core::retarget::{controls_to_offsets, emotion_to_aus, AuControls};
use rigserve_core::rig::{ActionUnit, BoneId, HeadPose, PresetId, RigState};
use rigserve_core::RigDefinition;
use wasm_bindgen::prelude::*;

/// Radians of head rotation at a head-pose value of 1.
const HEAD_SWING: f64 = 0.6;

struct Track {
    sampler: TrackSampler,
    length_ms: f64,
}

#[wasm_bindgen]
pub struct FaceDemo {
    defs: RigDefinition,
    lexicon: Lexicon,
    aus: AuControls,
    force_mask: bool,
    track: Option<Track>,
    t_ms: f64,
    head: HeadPose,
}

impl Default for FaceDemo {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl FaceDemo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> FaceDemo {
        FaceDemo {
            defs: RigDefinition::default_rig(),
            lexicon: parse_lexicon(DEMO_LEXICON).expect("bundled lexicon parses"),
            aus: AuControls::zero(),
            force_mask: false,
            track: None,
            t_ms: 0.0,
            head: HeadPose::default(),
        }
    }

    /// The 24 supported AU numbers, in slider order.
    pub fn au_numbers() -> Vec<u8> {
        ActionUnit::all().map(|a| a.number()).collect()
    }

    pub fn set_au(&mut self, au: u8, value: f64) -> Result<(), String> {
        let unit = ActionUnit::new(au).ok_or_else(|| format!("AU{au} is not supported"))?;
        self.aus.set(unit, value);
        Ok(())
    }

    pub fn au(&self, au: u8) -> f64 {
        ActionUnit::new(au).map_or(0.0, |a| self.aus.get(a))
    }

    pub fn emotions(&self) -> Vec<String> {
        self.defs.emotion_table().keys().cloned().collect()
    }

    /// Replaces every AU with the emotion's combination.
    pub fn set_emotion(&mut self, label: &str, intensity: f64) -> Result<(), String> {
        self.aus = emotion_to_aus(label, intensity, &self.defs).map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn clear(&mut self) {
        self.aus = AuControls::zero();
        self.track = None;
        self.t_ms = 0.0;
    }

    /// Applies the lip-sync mask even without a phrase, to show which bones
    /// the expression layer loses while the mouth is speaking.
    pub fn set_mask(&mut self, on: bool) {
        self.force_mask = on;
    }

    pub fn set_head(&mut self, yaw: f64, pitch: f64, roll: f64) {
        self.head = HeadPose::clamped(yaw, pitch, roll);
    }

    /// Builds a phrase track from the demo lexicon and returns its length
    /// in ms, release ramp included.
    pub fn say(&mut self, text: &str, rate: f64) -> Result<f64, String> {
        let track = text_to_phoneme_track(text, &self.lexicon, rate, &self.defs)
            .map_err(|e| e.to_string())?;
        let ramp = RampConfig::default();
        let length_ms = track.total_ms() as f64 + ramp.ramp_ms;
        self.track = Some(Track {
            sampler: TrackSampler::new(&track, &ramp, &self.defs),
            length_ms,
        });
        self.t_ms = 0.0;
        Ok(length_ms)
    }

    pub fn phrase_length_ms(&self) -> f64 {
        self.track.as_ref().map_or(0.0, |t| t.length_ms)
    }

    pub fn scrub(&mut self, t_ms: f64) {
        self.t_ms = t_ms;
    }

    pub fn lipsync_active(&self) -> bool {
        self.force_mask
            || self
                .track
                .as_ref()
                .is_some_and(|t| t.sampler.is_active(self.t_ms))
    }

    /// Active viseme weights at the scrub position, e.g. `"ae 0.50 i 0.50"`.
    pub fn visemes(&self) -> String {
        self.viseme_weights()
            .iter()
            .map(|(v, w)| format!("{v} {w:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Facial bone names, matching the point order of [`FaceDemo::project`].
    pub fn bone_names() -> Vec<String> {
        BoneId::facial().map(|b| b.name().to_owned()).collect()
    }

    /// `[x0, y0, x1, y1, ...]` canvas coordinates of the facial bones.
    pub fn project(&self, width: f64, height: f64) -> Vec<f64> {
        let state = self.state();
        let (sy, cy) = (self.head.yaw * HEAD_SWING).sin_cos();
        let (sp, cp) = (self.head.pitch * HEAD_SWING).sin_cos();
        let (sr, cr) = (self.head.roll * HEAD_SWING).sin_cos();
        // Face spans roughly x in [-4.5, 4.5] and y in [-7, 4.5] rig units.
        let scale = (width / 11.0).min(height / 13.5);
        let (ox, oy) = (width / 2.0, height / 2.0);
        let mut out = Vec::new();
        for b in BoneId::facial() {
            let [x, y, z] = state.bone(b).position;
            let y = y + 1.25;
            // yaw about y, then pitch about x, then roll about z
            let (x, z) = (x * cy + z * sy, -x * sy + z * cy);
            let (y, _z) = (y * cp - z * sp, y * sp + z * cp);
            let (x, y) = (x * cr - y * sr, x * sr + y * cr);
            out.push(ox + x * scale);
            out.push(oy - y * scale);
        }
        out
    }
}

impl FaceDemo {
    fn viseme_weights(&self) -> VisemeWeights {
        self.track
            .as_ref()
            .map(|t| t.sampler.sample(self.t_ms))
            .unwrap_or_default()
    }

    /// The composed pose at the current scrub position.
    pub fn state(&self) -> RigState {
        let mut lips = Vec::new();
        for (v, w) in self.viseme_weights().iter() {
            lips.extend(
                self.defs
                    .preset_pose(&PresetId::Viseme(v.to_owned()), w)
                    .expect("track visemes exist in the rig"),
            );
        }
        let layers = [
            Layer::expression(controls_to_offsets(&self.aus, &self.defs)),
            Layer::lipsync(lips),
        ];
        let mut s = compose(&self.defs, &layers, self.lipsync_active());
        s.head = self.head;
        s
    }
}
