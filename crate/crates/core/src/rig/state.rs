use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::bone::{BoneId, Vec3, BONE_COUNT};

/// Absolute 6-DOF pose of one bone: position in rig units, intrinsic Euler
/// angles in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BonePose {
    #[serde(rename = "p")]
    pub position: Vec3,
    #[serde(rename = "r")]
    pub orientation: Vec3,
}

impl BonePose {
    pub fn new(position: Vec3, orientation: Vec3) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(&self.orientation)
            .all(|c| c.is_finite())
    }

    /// Same pose with every orientation channel wrapped into [-π, π].
    pub fn normalized(mut self) -> Self {
        for a in &mut self.orientation {
            *a = normalize_angle(*a);
        }
        self
    }

    /// The six channels in `p` then `r` order.
    pub fn channels(&self) -> [f64; 6] {
        let [x, y, z] = self.position;
        let [a, b, c] = self.orientation;
        [x, y, z, a, b, c]
    }
}

/// Wraps an angle into [-π, π]. In-range values are returned untouched.
pub fn normalize_angle(a: f64) -> f64 {
    if (-PI..=PI).contains(&a) {
        a
    } else {
        (a + PI).rem_euclid(TAU) - PI
    }
}

/// Additive delta on one bone, relative to whatever pose it is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoneOffset {
    pub bone: BoneId,
    #[serde(rename = "dp", default)]
    pub delta_position: Vec3,
    #[serde(rename = "dr", default)]
    pub delta_orientation: Vec3,
}

impl BoneOffset {
    pub fn new(bone: BoneId, delta_position: Vec3, delta_orientation: Vec3) -> Self {
        Self {
            bone,
            delta_position,
            delta_orientation,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            bone: self.bone,
            delta_position: self.delta_position.map(|c| c * k),
            delta_orientation: self.delta_orientation.map(|c| c * k),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta_position
            .iter()
            .chain(&self.delta_orientation)
            .all(|c| c.is_finite())
    }

    pub fn channels(&self) -> [f64; 6] {
        let [x, y, z] = self.delta_position;
        let [a, b, c] = self.delta_orientation;
        [x, y, z, a, b, c]
    }

    /// Offset that moves `from` onto `to`.
    pub fn between(bone: BoneId, from: &BonePose, to: &BonePose) -> Self {
        let d = |a: Vec3, b: Vec3| [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        Self::new(
            bone,
            d(from.position, to.position),
            d(from.orientation, to.orientation),
        )
    }
}

/// Yaw/pitch/roll, each clamped to [-1, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadPose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl HeadPose {
    pub fn clamped(yaw: f64, pitch: f64, roll: f64) -> Self {
        let c = |v: f64| v.clamp(-1.0, 1.0);
        Self {
            yaw: c(yaw),
            pitch: c(pitch),
            roll: c(roll),
        }
    }

    pub fn in_range(&self) -> bool {
        [self.yaw, self.pitch, self.roll]
            .iter()
            .all(|v| (-1.0..=1.0).contains(v))
    }
}

/// Skin tone (light 0 .. dark 1) and skin age (youthful 0 .. old 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppearanceParams {
    pub skin_tone: f64,
    pub skin_age: f64,
}

impl Default for AppearanceParams {
    fn default() -> Self {
        Self {
            skin_tone: 0.5,
            skin_age: 0.0,
        }
    }
}

impl AppearanceParams {
    pub fn clamped(skin_tone: f64, skin_age: f64) -> Self {
        Self {
            skin_tone: skin_tone.clamp(0.0, 1.0),
            skin_age: skin_age.clamp(0.0, 1.0),
        }
    }

    pub fn in_range(&self) -> bool {
        (0.0..=1.0).contains(&self.skin_tone) && (0.0..=1.0).contains(&self.skin_age)
    }
}

/// Camera position and orientation, same layout as a bone pose.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPose {
    #[serde(rename = "p")]
    pub position: Vec3,
    #[serde(rename = "r")]
    pub orientation: Vec3,
}

impl CameraPose {
    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(&self.orientation)
            .all(|c| c.is_finite())
    }
}

/// One full avatar pose: 38 absolute bone poses plus head, appearance and
/// camera.
#[derive(Clone, Debug, PartialEq)]
pub struct RigState {
    bones: Vec<BonePose>,
    pub head: HeadPose,
    pub appearance: AppearanceParams,
    pub camera: CameraPose,
}

impl RigState {
    /// Panics unless `bones` holds exactly one pose per registry entry.
    pub fn new(
        bones: Vec<BonePose>,
        head: HeadPose,
        appearance: AppearanceParams,
        camera: CameraPose,
    ) -> Self {
        assert_eq!(bones.len(), BONE_COUNT, "rig state needs 38 bone poses");
        Self {
            bones,
            head,
            appearance,
            camera,
        }
    }

    pub fn bones(&self) -> &[BonePose] {
        &self.bones
    }

    pub fn bone(&self, id: BoneId) -> &BonePose {
        &self.bones[id.index()]
    }

    pub(crate) fn bones_mut(&mut self) -> &mut [BonePose] {
        &mut self.bones
    }

    /// Returns a copy with each offset added channel-wise; orientations are
    /// re-wrapped into [-π, π].
    pub fn with_offsets<'a>(&self, offsets: impl IntoIterator<Item = &'a BoneOffset>) -> RigState {
        let mut out = self.clone();
        for off in offsets {
            let pose = &mut out.bones[off.bone.index()];
            for k in 0..3 {
                pose.position[k] += off.delta_position[k];
                pose.orientation[k] += off.delta_orientation[k];
            }
            *pose = pose.normalized();
        }
        out
    }
}

/// Adds `offsets` to `state` without modifying it.
pub fn apply_bone_offsets(state: &RigState, offsets: &[BoneOffset]) -> RigState {
    state.with_offsets(offsets)
}
