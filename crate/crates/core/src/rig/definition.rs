use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bone::{ActionUnit, BoneId, Vec3, BONE_COUNT};
use super::state::{AppearanceParams, BoneOffset, BonePose, CameraPose, HeadPose, RigState};

/// The rig definition shipped with the crate.
pub const DEFAULT_RIG_JSON: &str = include_str!("../../data/default_rig.json");

pub const VISEME_PRESET_COUNT: usize = 19;
pub const PHONEME_COUNT: usize = 44;

#[derive(Debug, thiserror::Error)]
pub enum RigError {
    #[error("malformed rig definition: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid rig definition: {0}")]
    Invalid(String),
    #[error("unknown preset {0}")]
    UnknownPreset(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, RigError> {
    Err(RigError::Invalid(msg.into()))
}

/// Identifies an AU preset or a viseme preset.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PresetId {
    Au(ActionUnit),
    Viseme(String),
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PresetId::Au(au) => au.fmt(f),
            PresetId::Viseme(v) => write!(f, "viseme {v}"),
        }
    }
}

/// `AU12` parses as an action unit; anything else is taken as a viseme id.
impl FromStr for PresetId {
    type Err = RigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("AU").or_else(|| s.strip_prefix("au")) {
            Some(n) => n
                .parse::<u8>()
                .ok()
                .and_then(ActionUnit::new)
                .map(PresetId::Au)
                .ok_or_else(|| RigError::UnknownPreset(s.to_owned())),
            None => Ok(PresetId::Viseme(s.to_owned())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetKind {
    ActionUnit,
    Viseme,
}

/// Bone offsets at intensity 1.0 for one AU or viseme.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub id: PresetId,
    pub offsets: Vec<BoneOffset>,
    region: BTreeSet<BoneId>,
}

impl Preset {
    fn new(id: PresetId, offsets: Vec<BoneOffset>) -> Self {
        let region = offsets.iter().map(|o| o.bone).collect();
        Self {
            id,
            offsets,
            region,
        }
    }

    pub fn kind(&self) -> PresetKind {
        match self.id {
            PresetId::Au(_) => PresetKind::ActionUnit,
            PresetId::Viseme(_) => PresetKind::Viseme,
        }
    }

    /// Bones this preset touches.
    pub fn region(&self) -> &BTreeSet<BoneId> {
        &self.region
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionWeight {
    pub au: ActionUnit,
    pub weight: f64,
}

/// The data-driven avatar: bone registry with rest poses, AU and viseme
/// presets, phoneme map, face partition and emotion table.
#[derive(Clone, Debug, PartialEq)]
pub struct RigDefinition {
    rest: Vec<BonePose>,
    au_presets: BTreeMap<ActionUnit, Preset>,
    viseme_presets: BTreeMap<String, Preset>,
    phoneme_map: BTreeMap<String, String>,
    upper: BTreeSet<BoneId>,
    lower: BTreeSet<BoneId>,
    au_regions: BTreeMap<ActionUnit, BTreeSet<BoneId>>,
    eyelid_close: Vec<BoneOffset>,
    emotion_table: BTreeMap<String, Vec<EmotionWeight>>,
    camera_default: CameraPose,
}

// ---- document schema -------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigDocument {
    bones: Vec<BoneEntry>,
    au_presets: BTreeMap<String, Vec<OffsetEntry>>,
    viseme_presets: BTreeMap<String, Vec<OffsetEntry>>,
    phoneme_map: BTreeMap<String, String>,
    regions: RegionsEntry,
    au_regions: BTreeMap<String, Vec<String>>,
    eyelid_close: Vec<OffsetEntry>,
    emotion_table: BTreeMap<String, Vec<EmotionEntry>>,
    camera_default: CameraPose,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoneEntry {
    index: usize,
    name: String,
    rest: BonePose,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OffsetEntry {
    bone: String,
    #[serde(default)]
    dp: Vec3,
    #[serde(default)]
    dr: Vec3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionsEntry {
    upper: Vec<String>,
    lower: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmotionEntry {
    au: u8,
    weight: f64,
}

fn resolve_bone(name: &str, context: &str) -> Result<BoneId, RigError> {
    BoneId::from_name(name)
        .ok_or_else(|| RigError::Invalid(format!("{context} references unknown bone {name:?}")))
}

fn resolve_offsets(entries: &[OffsetEntry], context: &str) -> Result<Vec<BoneOffset>, RigError> {
    entries
        .iter()
        .map(|e| {
            let off = BoneOffset::new(resolve_bone(&e.bone, context)?, e.dp, e.dr);
            if !off.is_finite() {
                return invalid(format!("{context} has a non-finite offset on {}", e.bone));
            }
            Ok(off)
        })
        .collect()
}

fn parse_au_key(key: &str) -> Result<ActionUnit, RigError> {
    key.parse::<u8>()
        .ok()
        .and_then(ActionUnit::new)
        .ok_or_else(|| {
            RigError::Invalid(format!(
                "AU {key} is not one of the 24 supported action units"
            ))
        })
}

fn offset_entries(offsets: &[BoneOffset]) -> Vec<OffsetEntry> {
    offsets
        .iter()
        .map(|o| OffsetEntry {
            bone: o.bone.name().to_owned(),
            dp: o.delta_position,
            dr: o.delta_orientation,
        })
        .collect()
}

fn bone_names(set: &BTreeSet<BoneId>) -> Vec<String> {
    set.iter().map(|b| b.name().to_owned()).collect()
}

impl RigDefinition {
    /// Parses and validates a rig-definition JSON document.
    pub fn from_json(text: &str) -> Result<Self, RigError> {
        let doc: RigDocument = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    /// The definition shipped with the crate.
    pub fn default_rig() -> Self {
        Self::from_json(DEFAULT_RIG_JSON).expect("shipped rig definition is valid")
    }

    fn from_document(doc: RigDocument) -> Result<Self, RigError> {
        if doc.bones.len() != BONE_COUNT {
            return invalid(format!(
                "registry must contain {BONE_COUNT} bones, found {}",
                doc.bones.len()
            ));
        }
        let mut rest = vec![None; BONE_COUNT];
        for entry in &doc.bones {
            let Some(id) = BoneId::from_name(&entry.name) else {
                return invalid(format!("unknown bone {:?}", entry.name));
            };
            if id.index() != entry.index {
                return invalid(format!(
                    "bone {} must have index {}, found {}",
                    entry.name,
                    id.index(),
                    entry.index
                ));
            }
            if rest[id.index()].is_some() {
                return invalid(format!("duplicate bone {}", entry.name));
            }
            if !entry.rest.is_finite() {
                return invalid(format!("bone {} has a non-finite rest pose", entry.name));
            }
            rest[id.index()] = Some(entry.rest.normalized());
        }
        // 38 entries, no duplicates, all canonical: every slot is filled.
        let rest: Vec<BonePose> = rest.into_iter().map(Option::unwrap).collect();

        let mut au_presets = BTreeMap::new();
        for (key, entries) in &doc.au_presets {
            let au = parse_au_key(key)?;
            let offsets = resolve_offsets(entries, &format!("AU{} preset", au.number()))?;
            au_presets.insert(au, Preset::new(PresetId::Au(au), offsets));
        }
        if let Some(missing) = ActionUnit::all().find(|au| !au_presets.contains_key(au)) {
            return invalid(format!(
                "au_presets must define all 24 action units, missing {missing}"
            ));
        }

        if doc.viseme_presets.len() != VISEME_PRESET_COUNT {
            return invalid(format!(
                "expected {VISEME_PRESET_COUNT} viseme presets, found {}",
                doc.viseme_presets.len()
            ));
        }
        let mut viseme_presets = BTreeMap::new();
        for (id, entries) in &doc.viseme_presets {
            let offsets = resolve_offsets(entries, &format!("viseme {id} preset"))?;
            viseme_presets.insert(
                id.clone(),
                Preset::new(PresetId::Viseme(id.clone()), offsets),
            );
        }

        if doc.phoneme_map.len() != PHONEME_COUNT {
            return invalid(format!(
                "phoneme_map must have {PHONEME_COUNT} entries, found {}",
                doc.phoneme_map.len()
            ));
        }
        for (ph, vis) in &doc.phoneme_map {
            if !viseme_presets.contains_key(vis) {
                return invalid(format!("phoneme {ph:?} maps to undefined viseme {vis:?}"));
            }
        }

        let region_set = |names: &[String], which: &str| -> Result<BTreeSet<BoneId>, RigError> {
            let mut set = BTreeSet::new();
            for n in names {
                let id = resolve_bone(n, &format!("{which} region"))?;
                if !id.is_facial() {
                    return invalid(format!("{which} region contains non-facial bone {n}"));
                }
                if !set.insert(id) {
                    return invalid(format!("{which} region lists {n} twice"));
                }
            }
            Ok(set)
        };
        let upper = region_set(&doc.regions.upper, "upper")?;
        let lower = region_set(&doc.regions.lower, "lower")?;
        if let Some(both) = upper.intersection(&lower).next() {
            return invalid(format!("{both} is in both upper and lower regions"));
        }
        if let Some(loose) = BoneId::facial().find(|b| !upper.contains(b) && !lower.contains(b)) {
            return invalid(format!(
                "facial bone {loose} is in neither upper nor lower region"
            ));
        }

        let mut au_regions = BTreeMap::new();
        for (key, names) in &doc.au_regions {
            let au = parse_au_key(key)?;
            let bones = names
                .iter()
                .map(|n| resolve_bone(n, &format!("{au} allowed region")))
                .collect::<Result<BTreeSet<_>, _>>()?;
            au_regions.insert(au, bones);
        }
        if let Some(missing) = ActionUnit::all().find(|au| !au_regions.contains_key(au)) {
            return invalid(format!("au_regions is missing {missing}"));
        }

        let eyelid_close = resolve_offsets(&doc.eyelid_close, "eyelid_close")?;

        let mut emotion_table = BTreeMap::new();
        for (label, entries) in &doc.emotion_table {
            let mut weights = Vec::with_capacity(entries.len());
            for e in entries {
                let au = ActionUnit::new(e.au).ok_or_else(|| {
                    RigError::Invalid(format!(
                        "emotion {label:?} uses AU{} which has no preset",
                        e.au
                    ))
                })?;
                if !(0.0..=1.0).contains(&e.weight) {
                    return invalid(format!(
                        "emotion {label:?} weight {} for {au} is outside [0, 1]",
                        e.weight
                    ));
                }
                weights.push(EmotionWeight {
                    au,
                    weight: e.weight,
                });
            }
            emotion_table.insert(label.clone(), weights);
        }

        if !doc.camera_default.is_finite() {
            return invalid("camera_default is not finite");
        }

        Ok(Self {
            rest,
            au_presets,
            viseme_presets,
            phoneme_map: doc.phoneme_map,
            upper,
            lower,
            au_regions,
            eyelid_close,
            emotion_table,
            camera_default: doc.camera_default,
        })
    }

    fn to_document(&self) -> RigDocument {
        RigDocument {
            bones: BoneId::all()
                .map(|id| BoneEntry {
                    index: id.index(),
                    name: id.name().to_owned(),
                    rest: self.rest[id.index()],
                })
                .collect(),
            au_presets: self
                .au_presets
                .iter()
                .map(|(au, p)| (au.number().to_string(), offset_entries(&p.offsets)))
                .collect(),
            viseme_presets: self
                .viseme_presets
                .iter()
                .map(|(v, p)| (v.clone(), offset_entries(&p.offsets)))
                .collect(),
            phoneme_map: self.phoneme_map.clone(),
            regions: RegionsEntry {
                upper: bone_names(&self.upper),
                lower: bone_names(&self.lower),
            },
            au_regions: self
                .au_regions
                .iter()
                .map(|(au, set)| (au.number().to_string(), bone_names(set)))
                .collect(),
            eyelid_close: offset_entries(&self.eyelid_close),
            emotion_table: self
                .emotion_table
                .iter()
                .map(|(label, ws)| {
                    let entries = ws
                        .iter()
                        .map(|w| EmotionEntry {
                            au: w.au.number(),
                            weight: w.weight,
                        })
                        .collect();
                    (label.clone(), entries)
                })
                .collect(),
            camera_default: self.camera_default,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("rig document serializes")
    }

    pub fn rest_pose(&self, bone: BoneId) -> &BonePose {
        &self.rest[bone.index()]
    }

    pub fn au_presets(&self) -> &BTreeMap<ActionUnit, Preset> {
        &self.au_presets
    }

    pub fn viseme_presets(&self) -> &BTreeMap<String, Preset> {
        &self.viseme_presets
    }

    pub fn phoneme_map(&self) -> &BTreeMap<String, String> {
        &self.phoneme_map
    }

    pub fn upper_region(&self) -> &BTreeSet<BoneId> {
        &self.upper
    }

    pub fn lower_region(&self) -> &BTreeSet<BoneId> {
        &self.lower
    }

    pub fn au_region(&self, au: ActionUnit) -> &BTreeSet<BoneId> {
        &self.au_regions[&au]
    }

    /// Eyelid shape at full closure, used by blinking and AU43.
    pub fn eyelid_close(&self) -> &[BoneOffset] {
        &self.eyelid_close
    }

    pub fn emotion_table(&self) -> &BTreeMap<String, Vec<EmotionWeight>> {
        &self.emotion_table
    }

    pub fn camera_default(&self) -> CameraPose {
        self.camera_default
    }

    pub fn preset(&self, id: &PresetId) -> Result<&Preset, RigError> {
        let found = match id {
            PresetId::Au(au) => self.au_presets.get(au),
            PresetId::Viseme(v) => self.viseme_presets.get(v),
        };
        found.ok_or_else(|| RigError::UnknownPreset(id.to_string()))
    }

    pub fn has_viseme(&self, viseme: &str) -> bool {
        self.viseme_presets.contains_key(viseme)
    }

    /// Neutral state: rest bones, centred head, default appearance, default
    /// camera.
    pub fn rest_state(&self) -> RigState {
        RigState::new(
            self.rest.clone(),
            HeadPose::default(),
            AppearanceParams::default(),
            self.camera_default,
        )
    }

    /// A preset's offsets with every channel scaled by `intensity`, which is
    /// clamped to [0, 1].
    pub fn preset_pose(&self, id: &PresetId, intensity: f64) -> Result<Vec<BoneOffset>, RigError> {
        let preset = self.preset(id)?;
        let k = if intensity.is_nan() {
            0.0
        } else {
            intensity.clamp(0.0, 1.0)
        };
        Ok(preset.offsets.iter().map(|o| o.scaled(k)).collect())
    }
}

/// Parses a rig-definition document.
pub fn load_rig_definition(document: &str) -> Result<RigDefinition, RigError> {
    RigDefinition::from_json(document)
}

/// Neutral pose of `defs`.
pub fn rest_state(defs: &RigDefinition) -> RigState {
    defs.rest_state()
}

pub fn preset_pose(
    defs: &RigDefinition,
    id: &PresetId,
    intensity: f64,
) -> Result<Vec<BoneOffset>, RigError> {
    defs.preset_pose(id, intensity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn default_doc() -> Value {
        serde_json::from_str(DEFAULT_RIG_JSON).unwrap()
    }

    fn load(v: &Value) -> Result<RigDefinition, RigError> {
        RigDefinition::from_json(&v.to_string())
    }

    fn invalid_message(v: &Value) -> String {
        match load(v) {
            Err(RigError::Invalid(m)) => m,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn default_cardinalities() {
        let defs = RigDefinition::default_rig();
        assert_eq!(defs.rest.len(), 38);
        assert_eq!(defs.au_presets().len(), 24);
        assert_eq!(defs.viseme_presets().len(), 19);
        assert_eq!(defs.phoneme_map().len(), 44);
    }

    #[test]
    fn au3_key_is_rejected() {
        let mut doc = default_doc();
        let p = doc["au_presets"]["1"].clone();
        doc["au_presets"]["3"] = p;
        let msg = invalid_message(&doc);
        assert!(msg.contains("AU 3"), "{msg}");
    }

    #[test]
    fn missing_jaw_is_rejected() {
        let mut doc = default_doc();
        doc["bones"]
            .as_array_mut()
            .unwrap()
            .retain(|b| b["name"] != "Jaw");
        let msg = invalid_message(&doc);
        assert!(msg.contains("registry must contain 38 bones"), "{msg}");
    }

    #[test]
    fn duplicate_bone_is_rejected() {
        let mut doc = default_doc();
        let bones = doc["bones"].as_array_mut().unwrap();
        bones[37] = bones[36].clone();
        let msg = invalid_message(&doc);
        assert!(msg.contains("duplicate bone Root"), "{msg}");
    }

    #[test]
    fn missing_au_and_wrong_viseme_count() {
        let mut doc = default_doc();
        doc["au_presets"].as_object_mut().unwrap().remove("28");
        assert!(invalid_message(&doc).contains("missing AU28"));

        let mut doc = default_doc();
        doc["viseme_presets"].as_object_mut().unwrap().remove("m2");
        assert!(invalid_message(&doc).contains("19 viseme presets"));
    }

    #[test]
    fn phoneme_map_must_target_defined_visemes() {
        let mut doc = default_doc();
        doc["phoneme_map"]["p"] = Value::from("pp");
        assert!(invalid_message(&doc).contains("undefined viseme"));
    }

    #[test]
    fn regions_must_partition_the_face() {
        let mut doc = default_doc();
        doc["regions"]["upper"]
            .as_array_mut()
            .unwrap()
            .push(Value::from("Jaw"));
        assert!(invalid_message(&doc).contains("both upper and lower"));

        let mut doc = default_doc();
        doc["regions"]["upper"]
            .as_array_mut()
            .unwrap()
            .retain(|b| b != "LEye");
        assert!(invalid_message(&doc).contains("neither"));

        let mut doc = default_doc();
        doc["regions"]["upper"]
            .as_array_mut()
            .unwrap()
            .push(Value::from("Hair"));
        assert!(invalid_message(&doc).contains("non-facial"));
    }

    #[test]
    fn unknown_keys_and_malformed_text_are_parse_errors() {
        let mut doc = default_doc();
        doc["extra"] = Value::from(1);
        assert!(matches!(load(&doc), Err(RigError::Parse(_))));
        assert!(matches!(
            RigDefinition::from_json("{not json"),
            Err(RigError::Parse(_))
        ));
    }

    #[test]
    fn serialize_then_load_is_identity() {
        let defs = RigDefinition::default_rig();
        let again = RigDefinition::from_json(&defs.to_json()).unwrap();
        assert_eq!(defs, again);
    }

    #[test]
    fn rest_state_is_neutral_and_pure() {
        let defs = RigDefinition::default_rig();
        let a = defs.rest_state();
        let b = defs.rest_state();
        assert_eq!(a, b);
        assert_eq!(a.head, HeadPose::default());
        assert_eq!(a.appearance.skin_tone, 0.5);
        assert_eq!(a.appearance.skin_age, 0.0);
        assert_eq!(a.camera, defs.camera_default());
        for id in BoneId::all() {
            assert_eq!(a.bone(id), defs.rest_pose(id));
        }
    }

    #[test]
    fn preset_pose_scaling() {
        let defs = RigDefinition::default_rig();
        let au12: PresetId = "AU12".parse().unwrap();
        for off in defs.preset_pose(&au12, 0.0).unwrap() {
            assert!(off.channels().iter().all(|c| *c == 0.0));
        }
        let full = defs.preset_pose(&au12, 1.0).unwrap();
        let half = defs.preset_pose(&au12, 0.5).unwrap();
        assert_eq!(
            full,
            defs.au_presets()[&ActionUnit::new(12).unwrap()].offsets
        );
        for (h, f) in half.iter().zip(&full) {
            for (a, b) in h.channels().iter().zip(f.channels()) {
                assert_eq!(*a, b * 0.5);
            }
        }
        // Out-of-range intensities clamp.
        assert_eq!(defs.preset_pose(&au12, 3.0).unwrap(), full);
    }

    #[test]
    fn unknown_presets() {
        let defs = RigDefinition::default_rig();
        assert!(matches!(
            "AU99".parse::<PresetId>(),
            Err(RigError::UnknownPreset(_))
        ));
        let bogus = PresetId::Viseme("zz".into());
        assert!(matches!(
            defs.preset_pose(&bogus, 1.0),
            Err(RigError::UnknownPreset(_))
        ));
    }
}
