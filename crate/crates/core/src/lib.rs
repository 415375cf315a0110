//! Renderer-agnostic facial rig control plane.
//!
//! The rig is 38 named 6-DOF bones plus 24 FACS action-unit presets and 19
//! viseme presets, all loaded from a JSON rig definition. On top of that:
//!
//! - [`blend`] composes expression, lip-sync and direct layers per tick, masks
//!   the lower face while lip-sync is active, smooths and blinks.
//! - [`lipsync`] turns timed phoneme tracks into crossfaded viseme weights.
//! - [`retarget`] converts AU probability frames, emotions and external bone
//!   frames into expression-layer offsets.
//! - [`protocol`] and [`session`] implement the line-delimited JSON control
//!   protocol and the authoritative per-tick avatar state, independent of IO.
//! - [`replay`] drives a session from a timestamped script under virtual time.

pub mod blend;
pub mod clock;
pub mod lipsync;
pub mod protocol;
pub mod replay;
pub mod retarget;
pub mod rig;
pub mod session;

pub use rig::{BoneId, BoneOffset, BonePose, RigDefinition, RigState};
