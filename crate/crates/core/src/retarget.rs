//! Expression evidence to expression-layer controls: AU probability frames,
//! cardinal emotions and externally produced bone frames.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rig::{ActionUnit, BoneOffset, PresetId, RigDefinition};

/// AU order of the 12 recognizer outputs.
pub const RECOGNIZER_AUS: [u8; 12] = [1, 2, 4, 5, 6, 9, 12, 17, 20, 25, 26, 43];

/// Expected header of an AU stream file.
pub const AU_STREAM_HEADER: &str = "t_ms,au1,au2,au4,au5,au6,au9,au12,au17,au20,au25,au26,au43";

/// Eyes-closed AU, which has no preset and drives `eyelid_close` instead.
pub const AU_EYES_CLOSED: u8 = 43;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetargetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected 13 columns (t_ms + 12 AUs), found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: AU{au} probability {value} is outside [0, 1]")]
    OutOfRange { line: usize, au: u8, value: f64 },
    #[error("unknown emotion {0:?}")]
    UnknownEmotion(String),
    #[error("smoothing alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("rounding threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("bone offset on {0} is not finite")]
    NonFinite(String),
}

/// One recognizer output: probabilities for the 12 AUs in
/// [`RECOGNIZER_AUS`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct AuProbabilityFrame {
    pub timestamp_ms: f64,
    pub probabilities: [f64; 12],
}

impl AuProbabilityFrame {
    pub fn new(timestamp_ms: f64, probabilities: [f64; 12]) -> Self {
        Self {
            timestamp_ms,
            probabilities,
        }
    }

    pub fn zeros(timestamp_ms: f64) -> Self {
        Self::new(timestamp_ms, [0.0; 12])
    }

    /// Probability for an AU number, if the recognizer reports it.
    pub fn probability(&self, au: u8) -> Option<f64> {
        RECOGNIZER_AUS
            .iter()
            .position(|a| *a == au)
            .map(|i| self.probabilities[i])
    }
}

/// Intensities for the rig's 24 AUs plus the eyelid-close carrier for AU43.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuControls {
    intensities: [f64; 24],
    pub eyelid_close: f64,
}

impl AuControls {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn get(&self, au: ActionUnit) -> f64 {
        self.intensities[au.slot()]
    }

    /// Sets an intensity, clamped to [0, 1].
    pub fn set(&mut self, au: ActionUnit, value: f64) {
        self.intensities[au.slot()] = clamp_unit(value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ActionUnit, f64)> + '_ {
        ActionUnit::all().map(|au| (au, self.get(au)))
    }

    pub fn is_zero(&self) -> bool {
        self.eyelid_close == 0.0 && self.intensities.iter().all(|v| *v == 0.0)
    }

    pub fn in_range(&self) -> bool {
        self.intensities
            .iter()
            .chain(std::iter::once(&self.eyelid_close))
            .all(|v| (0.0..=1.0).contains(v))
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuControlsWire {
    intensities: BTreeMap<ActionUnit, f64>,
    eyelid_close: f64,
}

impl Serialize for AuControls {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        AuControlsWire {
            intensities: self.iter().collect(),
            eyelid_close: self.eyelid_close,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AuControls {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = AuControlsWire::deserialize(deserializer)?;
        let mut out = AuControls::zero();
        for (au, v) in wire.intensities {
            if !(0.0..=1.0).contains(&v) {
                return Err(D::Error::custom(format!(
                    "{au} intensity {v} outside [0, 1]"
                )));
            }
            out.set(au, v);
        }
        if !(0.0..=1.0).contains(&wire.eyelid_close) {
            return Err(D::Error::custom("eyelid_close outside [0, 1]"));
        }
        out.eyelid_close = wire.eyelid_close;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rounding {
    Off,
    Threshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetargetOptions {
    smoothing_alpha: f64,
    rounding: Rounding,
}

impl RetargetOptions {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    pub fn new(smoothing_alpha: f64, rounding: Rounding) -> Result<Self, RetargetError> {
        if !(smoothing_alpha > 0.0 && smoothing_alpha <= 1.0) {
            return Err(RetargetError::Alpha(smoothing_alpha));
        }
        if let Rounding::Threshold(t) = rounding {
            if !(t > 0.0 && t < 1.0) {
                return Err(RetargetError::Threshold(t));
            }
        }
        Ok(Self {
            smoothing_alpha,
            rounding,
        })
    }

    /// Raw probabilities, no smoothing.
    pub fn passthrough() -> Self {
        Self {
            smoothing_alpha: 1.0,
            rounding: Rounding::Off,
        }
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }
}

impl Default for RetargetOptions {
    fn default() -> Self {
        Self::passthrough()
    }
}

/// Parses an AU stream CSV. The header line is optional; frames are returned
/// sorted by timestamp.
pub fn parse_au_stream(document: &str) -> Result<Vec<AuProbabilityFrame>, RetargetError> {
    let mut frames = Vec::new();
    let mut seen_data = false;
    for (i, raw) in document.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if !seen_data && line.starts_with("t_ms") {
            let header: Vec<&str> = line.split(',').map(str::trim).collect();
            if header.join(",") != AU_STREAM_HEADER {
                return Err(RetargetError::Parse {
                    line: line_no,
                    message: format!("header must be `{AU_STREAM_HEADER}`"),
                });
            }
            seen_data = true;
            continue;
        }
        seen_data = true;
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 13 {
            return Err(RetargetError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        let num = |s: &str| -> Result<f64, RetargetError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| RetargetError::Parse {
                    line: line_no,
                    message: format!("{s:?} is not a finite number"),
                })
        };
        let t = num(cols[0])?;
        if t < 0.0 {
            return Err(RetargetError::Parse {
                line: line_no,
                message: format!("timestamp {t} is negative"),
            });
        }
        let mut probs = [0.0; 12];
        for (k, col) in cols[1..].iter().enumerate() {
            let v = num(col)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(RetargetError::OutOfRange {
                    line: line_no,
                    au: RECOGNIZER_AUS[k],
                    value: v,
                });
            }
            probs[k] = v;
        }
        frames.push(AuProbabilityFrame::new(t, probs));
    }
    frames.sort_by(|a, b| a.timestamp_ms.total_cmp(&b.timestamp_ms));
    Ok(frames)
}

fn pretreat(p: f64, rounding: Rounding) -> f64 {
    match rounding {
        Rounding::Off => p,
        Rounding::Threshold(theta) => {
            if p >= theta {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Rounds (optionally) then smooths each recognized AU toward its
/// probability. AU43 feeds `eyelid_close`; AUs the recognizer does not
/// report are zero.
pub fn au_frame_to_controls(
    frame: &AuProbabilityFrame,
    prev: &AuControls,
    opts: &RetargetOptions,
) -> AuControls {
    let a = opts.smoothing_alpha;
    let step = |raw: f64, prev: f64| {
        let target = pretreat(clamp_unit(raw), opts.rounding);
        clamp_unit(crate::blend::ema(prev, target, a))
    };
    let mut out = AuControls::zero();
    for (k, au) in RECOGNIZER_AUS.iter().enumerate() {
        let p = frame.probabilities[k];
        match ActionUnit::new(*au) {
            Some(unit) => out.set(unit, step(p, prev.get(unit))),
            None => out.eyelid_close = step(p, prev.eyelid_close),
        }
    }
    out
}

/// Controls for an emotion label from the rig's emotion table.
pub fn emotion_to_aus(
    label: &str,
    intensity: f64,
    defs: &RigDefinition,
) -> Result<AuControls, RetargetError> {
    let entry = defs
        .emotion_table()
        .get(label)
        .ok_or_else(|| RetargetError::UnknownEmotion(label.to_owned()))?;
    let k = clamp_unit(intensity);
    let mut out = AuControls::zero();
    for w in entry {
        out.set(w.au, out.get(w.au) + w.weight * k);
    }
    Ok(out)
}

/// Expression-layer offsets: each nonzero AU preset at its intensity, in AU
/// order, followed by the eyelid-close shape.
pub fn controls_to_offsets(controls: &AuControls, defs: &RigDefinition) -> Vec<BoneOffset> {
    let mut out = Vec::new();
    for (au, v) in controls.iter().filter(|(_, v)| *v > 0.0) {
        let offs = defs
            .preset_pose(&PresetId::Au(au), v)
            .expect("every supported AU has a preset");
        out.extend(offs);
    }
    if controls.eyelid_close > 0.0 {
        out.extend(
            defs.eyelid_close()
                .iter()
                .map(|o| o.scaled(controls.eyelid_close)),
        );
    }
    out
}

/// Bone parameters produced by an external retargeting model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalBoneFrame {
    pub timestamp_ms: f64,
    pub offsets: Vec<BoneOffset>,
}

/// Passes a frame's offsets through to the expression layer.
pub fn ingest_bone_frame(frame: &ExternalBoneFrame) -> Result<Vec<BoneOffset>, RetargetError> {
    if let Some(bad) = frame.offsets.iter().find(|o| !o.is_finite()) {
        return Err(RetargetError::NonFinite(bad.bone.name().to_owned()));
    }
    Ok(frame.offsets.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blend::{compose, Layer};
    use crate::rig::BoneId;

    fn au(n: u8) -> ActionUnit {
        ActionUnit::new(n).unwrap()
    }

    fn frame_with(au_no: u8, p: f64) -> AuProbabilityFrame {
        let mut f = AuProbabilityFrame::zeros(0.0);
        let i = RECOGNIZER_AUS.iter().position(|a| *a == au_no).unwrap();
        f.probabilities[i] = p;
        f
    }

    #[test]
    fn stream_parse_examples() {
        let frames = parse_au_stream("0,0,0,0,0,0,0,0,0,0,0,0,0").unwrap();
        assert_eq!(frames, vec![AuProbabilityFrame::zeros(0.0)]);

        let short = "0,0,0,0,0,0,0,0,0,0,0,0";
        assert!(matches!(
            parse_au_stream(short),
            Err(RetargetError::ColumnCount { found: 12, .. })
        ));
        let hot = "0,0,0,0,0,0,0,1.5,0,0,0,0,0";
        assert!(matches!(
            parse_au_stream(hot),
            Err(RetargetError::OutOfRange { au: 12, .. })
        ));
    }

    #[test]
    fn stream_header_and_sorting() {
        let doc = format!(
            "{AU_STREAM_HEADER}\n100,0,0,0,0,0,0,0.9,0,0,0,0,0\n0,0,0,0,0,0,0,0,0,0,0,0,0\n"
        );
        let frames = parse_au_stream(&doc).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].timestamp_ms, 0.0);
        assert_eq!(frames[1].probability(12), Some(0.9));
        assert!(parse_au_stream("t_ms,au1\n").is_err());
        assert!(parse_au_stream("x,0,0,0,0,0,0,0,0,0,0,0,0").is_err());
    }

    #[test]
    fn zero_frame_gives_zero_controls() {
        let opts = RetargetOptions::new(0.3, Rounding::Threshold(0.5)).unwrap();
        let out = au_frame_to_controls(&AuProbabilityFrame::zeros(0.0), &AuControls::zero(), &opts);
        assert!(out.is_zero());
    }

    #[test]
    fn raw_probability_drives_directly() {
        let out = au_frame_to_controls(
            &frame_with(12, 0.8),
            &AuControls::zero(),
            &RetargetOptions::passthrough(),
        );
        assert_eq!(out.get(au(12)), 0.8);
    }

    #[test]
    fn round_then_smooth() {
        let opts = RetargetOptions::new(0.5, Rounding::Threshold(0.5)).unwrap();
        let out = au_frame_to_controls(&frame_with(12, 0.8), &AuControls::zero(), &opts);
        assert_eq!(out.get(au(12)), 0.5);
        let below = au_frame_to_controls(&frame_with(12, 0.49), &AuControls::zero(), &opts);
        assert_eq!(below.get(au(12)), 0.0);
    }

    #[test]
    fn au43_drives_eyelids_and_unrecognized_aus_stay_zero() {
        let mut prev = AuControls::zero();
        prev.set(au(7), 0.9);
        let out =
            au_frame_to_controls(&frame_with(43, 0.7), &prev, &RetargetOptions::passthrough());
        assert_eq!(out.eyelid_close, 0.7);
        assert_eq!(out.get(au(7)), 0.0);
    }

    #[test]
    fn options_validation() {
        assert!(RetargetOptions::new(0.0, Rounding::Off).is_err());
        assert!(RetargetOptions::new(0.5, Rounding::Threshold(1.0)).is_err());
        assert!(RetargetOptions::new(0.5, Rounding::Threshold(0.0)).is_err());
    }

    #[test]
    fn emotion_examples() {
        let defs = RigDefinition::default_rig();
        assert!(emotion_to_aus("happiness", 0.0, &defs).unwrap().is_zero());
        let happy = emotion_to_aus("happiness", 1.0, &defs).unwrap();
        let listed: Vec<ActionUnit> = defs.emotion_table()["happiness"]
            .iter()
            .map(|w| w.au)
            .collect();
        for (unit, v) in happy.iter() {
            assert_eq!(v > 0.0, listed.contains(&unit), "{unit}");
        }
        assert_eq!(
            emotion_to_aus("boredom", 1.0, &defs),
            Err(RetargetError::UnknownEmotion("boredom".into()))
        );
    }

    #[test]
    fn default_emotion_table_structure() {
        let defs = RigDefinition::default_rig();
        for label in [
            "happiness",
            "sadness",
            "surprise",
            "fear",
            "anger",
            "disgust",
        ] {
            let entry = &defs.emotion_table()[label];
            assert!(!entry.is_empty());
            assert!(entry.iter().all(|w| (0.0..=1.0).contains(&w.weight)));
        }
    }

    #[test]
    fn controls_to_offsets_examples() {
        let defs = RigDefinition::default_rig();
        assert!(controls_to_offsets(&AuControls::zero(), &defs).is_empty());

        let mut c = AuControls::zero();
        c.set(au(1), 1.0);
        let only1 = controls_to_offsets(&c, &defs);
        assert_eq!(only1, defs.au_presets()[&au(1)].offsets);

        c.set(au(2), 1.0);
        let both = controls_to_offsets(&c, &defs);
        let state = defs.rest_state().with_offsets(&both);
        let mid = BoneId::from_name("LMidBrow").unwrap();
        let expected: f64 = defs.rest_pose(mid).position[1]
            + [au(1), au(2)]
                .iter()
                .flat_map(|a| defs.au_presets()[a].offsets.iter())
                .filter(|o| o.bone == mid)
                .map(|o| o.delta_position[1])
                .sum::<f64>();
        assert!((state.bone(mid).position[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn bone_frame_passthrough_and_masking() {
        let defs = RigDefinition::default_rig();
        assert!(ingest_bone_frame(&ExternalBoneFrame {
            timestamp_ms: 0.0,
            offsets: vec![]
        })
        .unwrap()
        .is_empty());

        let jaw = BoneOffset::new(BoneId::JAW, [0.0, -0.5, 0.0], [0.1, 0.0, 0.0]);
        let brow = BoneOffset::new(BoneId::OUTER_BROW_L, [0.0, 0.4, 0.0], [0.0; 3]);
        let offs = ingest_bone_frame(&ExternalBoneFrame {
            timestamp_ms: 0.0,
            offsets: vec![jaw, brow],
        })
        .unwrap();
        let out = compose(&defs, &[Layer::expression(offs)], true);
        assert_eq!(out.bone(BoneId::JAW), defs.rest_pose(BoneId::JAW));
        assert_eq!(out, defs.rest_state().with_offsets(&[brow]));

        let bad = BoneOffset::new(BoneId::JAW, [f64::NAN, 0.0, 0.0], [0.0; 3]);
        assert!(ingest_bone_frame(&ExternalBoneFrame {
            timestamp_ms: 0.0,
            offsets: vec![bad]
        })
        .is_err());
    }

    #[test]
    fn controls_serialize_all_24_keys() {
        let mut c = AuControls::zero();
        c.set(au(12), 0.25);
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["intensities"].as_object().unwrap().len(), 24);
        assert_eq!(v["intensities"]["12"], 0.25);
        let back: AuControls = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
    }
}
