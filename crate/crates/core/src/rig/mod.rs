//! Rig model: the bone registry, presets, region partition and pose
//! arithmetic.

mod bone;
mod definition;
mod state;
mod validate;

pub use bone::{ActionUnit, BoneId, UnknownBone, Vec3, BONE_COUNT, BONE_NAMES};
pub use definition::{
    load_rig_definition, preset_pose, rest_state, EmotionWeight, Preset, PresetId, PresetKind,
    RigDefinition, RigError, DEFAULT_RIG_JSON, PHONEME_COUNT, VISEME_PRESET_COUNT,
};
pub use state::{
    apply_bone_offsets, normalize_angle, AppearanceParams, BoneOffset, BonePose, CameraPose,
    HeadPose, RigState,
};
pub use validate::{validate_presets, Finding, ValidationReport};
