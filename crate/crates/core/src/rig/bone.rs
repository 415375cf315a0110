use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of bones in the rig registry.
pub const BONE_COUNT: usize = 38;

/// Canonical bone names, indexed by bone id.
///
/// Indices 0..33 are facial bones; the last five (Chest, Neck, Head, Root,
/// Hair) are body bones that presets never touch.
pub const BONE_NAMES: [&str; BONE_COUNT] = [
    "LUpperCheek",
    "RUpperCheek",
    "MMidUpperLip",
    "LMidUpperLip",
    "RMidUpperLip",
    "MMidLowerLip",
    "LMidLowerLip",
    "RMidLowerLip",
    "LLipCorner",
    "RLipCorner",
    "MUpperNose",
    "LUpperNose",
    "RUpperNose",
    "LOuterBrow",
    "ROuterBrow",
    "LMidBrow",
    "RMidBrow",
    "LInnerBrow",
    "RInnerBrow",
    "LNostril",
    "RNostril",
    "LCheekDimple",
    "RCheekDimple",
    "LEye",
    "REye",
    "LUpperEyelid",
    "RUpperEyelid",
    "LLowerEyelid",
    "RLowerEyelid",
    "Jaw",
    "Chin",
    "TongueBase",
    "TongueTip",
    "Chest",
    "Neck",
    "Head",
    "Root",
    "Hair",
];

const FACIAL_COUNT: usize = 33;

/// Position or Euler-angle triple.
pub type Vec3 = [f64; 3];

/// Index into the fixed 38-bone registry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoneId(u8);

impl BoneId {
    pub const LIP_CORNER_L: BoneId = BoneId(8);
    pub const LIP_CORNER_R: BoneId = BoneId(9);
    pub const OUTER_BROW_L: BoneId = BoneId(13);
    pub const OUTER_BROW_R: BoneId = BoneId(14);
    pub const UPPER_EYELID_L: BoneId = BoneId(25);
    pub const UPPER_EYELID_R: BoneId = BoneId(26);
    pub const LOWER_EYELID_L: BoneId = BoneId(27);
    pub const LOWER_EYELID_R: BoneId = BoneId(28);
    pub const JAW: BoneId = BoneId(29);
    pub const CHIN: BoneId = BoneId(30);
    pub const HEAD: BoneId = BoneId(35);

    pub const EYELIDS: [BoneId; 4] = [
        Self::UPPER_EYELID_L,
        Self::UPPER_EYELID_R,
        Self::LOWER_EYELID_L,
        Self::LOWER_EYELID_R,
    ];

    pub fn from_index(index: usize) -> Option<BoneId> {
        (index < BONE_COUNT).then_some(BoneId(index as u8))
    }

    pub fn from_name(name: &str) -> Option<BoneId> {
        BONE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| BoneId(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        BONE_NAMES[self.index()]
    }

    /// Facial bones are the ones the UPPER/LOWER partition must cover.
    pub fn is_facial(self) -> bool {
        self.index() < FACIAL_COUNT
    }

    pub fn is_eyelid(self) -> bool {
        Self::EYELIDS.contains(&self)
    }

    pub fn all() -> impl Iterator<Item = BoneId> + Clone {
        (0..BONE_COUNT as u8).map(BoneId)
    }

    pub fn facial() -> impl Iterator<Item = BoneId> + Clone {
        (0..FACIAL_COUNT as u8).map(BoneId)
    }
}

impl fmt::Display for BoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown bone {0:?}")]
pub struct UnknownBone(pub String);

impl FromStr for BoneId {
    type Err = UnknownBone;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BoneId::from_name(s).ok_or_else(|| UnknownBone(s.to_owned()))
    }
}

impl Serialize for BoneId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

// Bones may be referred to by name or by registry index.
impl<'de> Deserialize<'de> for BoneId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BoneVisitor;

        impl Visitor<'_> for BoneVisitor {
            type Value = BoneId;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a bone name or an index in 0..38")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<BoneId, E> {
                BoneId::from_name(v).ok_or_else(|| E::custom(format!("unknown bone {v:?}")))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<BoneId, E> {
                usize::try_from(v)
                    .ok()
                    .and_then(BoneId::from_index)
                    .ok_or_else(|| E::custom(format!("bone index {v} out of range")))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<BoneId, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom(format!("bone index {v} out of range")))
                    .and_then(|v| self.visit_u64(v))
            }
        }

        deserializer.deserialize_any(BoneVisitor)
    }
}

/// One of the 24 action units the rig ships presets for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionUnit(u8);

impl ActionUnit {
    pub const NUMBERS: [u8; 24] = [
        1, 2, 4, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 20, 22, 23, 24, 25, 26, 27, 28,
    ];

    pub fn new(number: u8) -> Option<ActionUnit> {
        Self::NUMBERS
            .contains(&number)
            .then_some(ActionUnit(number))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Position of this AU within [`ActionUnit::NUMBERS`].
    pub fn slot(self) -> usize {
        Self::NUMBERS
            .iter()
            .position(|n| *n == self.0)
            .expect("ActionUnit holds a supported number")
    }

    pub fn all() -> impl Iterator<Item = ActionUnit> + Clone {
        Self::NUMBERS.iter().map(|n| ActionUnit(*n))
    }
}

impl fmt::Display for ActionUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AU{}", self.0)
    }
}

impl Serialize for ActionUnit {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for ActionUnit {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(AuVisitor)
    }
}

// Accepts 12, "12" or "AU12"; map keys arrive as strings.
struct AuVisitor;

impl AuVisitor {
    fn check<E: de::Error>(n: u64) -> Result<ActionUnit, E> {
        u8::try_from(n)
            .ok()
            .and_then(ActionUnit::new)
            .ok_or_else(|| E::custom(format!("AU{n} is not a supported action unit")))
    }
}

impl<'de> de::Visitor<'de> for AuVisitor {
    type Value = ActionUnit;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an action unit number")
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<ActionUnit, E> {
        Self::check(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<ActionUnit, E> {
        let n = u64::try_from(v)
            .map_err(|_| E::custom(format!("AU{v} is not a supported action unit")))?;
        Self::check(n)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<ActionUnit, E> {
        let digits = v
            .strip_prefix("AU")
            .or_else(|| v.strip_prefix("au"))
            .unwrap_or(v);
        let n: u64 = digits
            .parse()
            .map_err(|_| E::custom(format!("{v:?} is not an action unit")))?;
        Self::check(n)
    }
}
