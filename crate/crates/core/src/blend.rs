//! Per-tick composition of rig layers, lower-face masking, EMA smoothing and
//! autonomous blinking.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rig::{BoneId, BoneOffset, RigDefinition, RigState};

/// Layer kinds, in ascending priority.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LayerKind {
    Expression,
    Lipsync,
    Direct,
}

impl LayerKind {
    pub fn priority(self) -> u8 {
        match self {
            LayerKind::Expression => 0,
            LayerKind::Lipsync => 1,
            LayerKind::Direct => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub offsets: Vec<BoneOffset>,
}

impl Layer {
    pub fn new(kind: LayerKind, offsets: Vec<BoneOffset>) -> Self {
        Self { kind, offsets }
    }

    pub fn expression(offsets: Vec<BoneOffset>) -> Self {
        Self::new(LayerKind::Expression, offsets)
    }

    pub fn lipsync(offsets: Vec<BoneOffset>) -> Self {
        Self::new(LayerKind::Lipsync, offsets)
    }

    pub fn direct(offsets: Vec<BoneOffset>) -> Self {
        Self::new(LayerKind::Direct, offsets)
    }
}

/// Set of bones a layer may move.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoneMask {
    pub allowed: BTreeSet<BoneId>,
}

impl BoneMask {
    pub fn contains(&self, bone: BoneId) -> bool {
        self.allowed.contains(&bone)
    }
}

/// Expression-layer mask: the upper face only while lip-sync is active,
/// otherwise every facial bone.
pub fn active_mask(lipsync_active: bool, defs: &RigDefinition) -> BoneMask {
    let allowed = if lipsync_active {
        defs.upper_region().clone()
    } else {
        BoneId::facial().collect()
    };
    BoneMask { allowed }
}

/// Starts from the rest state and applies each layer in priority order. Only
/// the expression layer is masked; offsets on the same bone are summed.
pub fn compose(defs: &RigDefinition, layers: &[Layer], lipsync_active: bool) -> RigState {
    let mask = active_mask(lipsync_active, defs);
    let mut ordered: Vec<&Layer> = layers.iter().collect();
    ordered.sort_by_key(|l| l.kind.priority());

    let mut state = defs.rest_state();
    for layer in ordered {
        state = match layer.kind {
            LayerKind::Expression => {
                state.with_offsets(layer.offsets.iter().filter(|o| mask.contains(o.bone)))
            }
            LayerKind::Lipsync | LayerKind::Direct => state.with_offsets(&layer.offsets),
        };
    }
    state
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BlendConfigError {
    #[error("smoothing alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("blink interval must satisfy 0 < min <= max, got [{0}, {1}] s")]
    BlinkInterval(f64, f64),
    #[error("blink duration must be positive, got {0} ms")]
    BlinkDuration(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingConfig {
    alpha: f64,
    pub enabled: bool,
}

impl SmoothingConfig {
    pub fn new(alpha: f64) -> Result<Self, BlendConfigError> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self {
                alpha,
                enabled: true,
            })
        } else {
            Err(BlendConfigError::Alpha(alpha))
        }
    }

    pub fn disabled() -> Self {
        Self {
            alpha: 1.0,
            enabled: false,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// One EMA step `prev + alpha * (target - prev)`, kept inside the interval
/// spanned by the two inputs.
pub fn ema(prev: f64, target: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return target;
    }
    let y = prev + alpha * (target - prev);
    y.clamp(prev.min(target), prev.max(target))
}

/// Channel-wise EMA from `previous` toward `target` over bones, head,
/// appearance and camera.
pub fn smooth_state(previous: &RigState, target: &RigState, cfg: &SmoothingConfig) -> RigState {
    if !cfg.enabled || cfg.alpha == 1.0 {
        return target.clone();
    }
    let a = cfg.alpha;
    let mix3 =
        |p: [f64; 3], t: [f64; 3]| [ema(p[0], t[0], a), ema(p[1], t[1], a), ema(p[2], t[2], a)];

    let mut out = target.clone();
    for (o, p) in out.bones_mut().iter_mut().zip(previous.bones()) {
        o.position = mix3(p.position, o.position);
        o.orientation = mix3(p.orientation, o.orientation);
    }
    out.head.yaw = ema(previous.head.yaw, target.head.yaw, a);
    out.head.pitch = ema(previous.head.pitch, target.head.pitch, a);
    out.head.roll = ema(previous.head.roll, target.head.roll, a);
    out.appearance.skin_tone = ema(
        previous.appearance.skin_tone,
        target.appearance.skin_tone,
        a,
    );
    out.appearance.skin_age = ema(previous.appearance.skin_age, target.appearance.skin_age, a);
    out.camera.position = mix3(previous.camera.position, target.camera.position);
    out.camera.orientation = mix3(previous.camera.orientation, target.camera.orientation);
    out
}

/// Seeded blink timer. Carries its own generator so the sequence of blink
/// times depends only on the seed and the query times.
#[derive(Clone, Debug)]
pub struct BlinkSchedule {
    rng: ChaCha8Rng,
    seed: u64,
    interval_s: (f64, f64),
    duration_ms: f64,
    next_blink_at: f64,
}

impl BlinkSchedule {
    pub const DEFAULT_INTERVAL_S: (f64, f64) = (2.0, 6.0);
    pub const DEFAULT_DURATION_MS: f64 = 200.0;

    /// First blink is drawn from the interval range after `start_ms`.
    pub fn new(
        seed: u64,
        interval_s: (f64, f64),
        duration_ms: f64,
        start_ms: f64,
    ) -> Result<Self, BlendConfigError> {
        let (lo, hi) = interval_s;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(BlendConfigError::BlinkInterval(lo, hi));
        }
        if !(duration_ms > 0.0 && duration_ms.is_finite()) {
            return Err(BlendConfigError::BlinkDuration(duration_ms));
        }
        let mut s = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            interval_s,
            duration_ms,
            next_blink_at: start_ms,
        };
        s.next_blink_at = start_ms + s.draw_gap_ms();
        Ok(s)
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self::new(
            seed,
            Self::DEFAULT_INTERVAL_S,
            Self::DEFAULT_DURATION_MS,
            0.0,
        )
        .expect("default blink settings are valid")
    }

    fn draw_gap_ms(&mut self) -> f64 {
        let (lo, hi) = self.interval_s;
        let s = if hi > lo {
            self.rng.random_range(lo..=hi)
        } else {
            lo
        };
        s * 1000.0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_blink_at(&self) -> f64 {
        self.next_blink_at
    }

    pub fn duration_ms(&self) -> f64 {
        self.duration_ms
    }

    /// Advances past completed blinks and returns the triangular profile at
    /// `now` (0 outside a blink window, 1 at the window midpoint).
    fn advance(&mut self, now: f64) -> f64 {
        loop {
            let start = self.next_blink_at;
            let end = start + self.duration_ms;
            if now < start {
                return 0.0;
            }
            if now < end {
                let half = self.duration_ms / 2.0;
                return (1.0 - (now - (start + half)).abs() / half).clamp(0.0, 1.0);
            }
            self.next_blink_at = end + self.draw_gap_ms();
        }
    }

    /// Blink profile at `now` without advancing this schedule.
    pub fn profile_at(&self, now: f64) -> f64 {
        self.clone().advance(now)
    }
}

/// Eyelid offsets for `now`, scaled by the blink profile, and the updated
/// schedule. Empty outside a blink window.
pub fn blink_offsets(
    now: f64,
    schedule: &BlinkSchedule,
    defs: &RigDefinition,
) -> (Vec<BoneOffset>, BlinkSchedule) {
    let mut next = schedule.clone();
    let profile = next.advance(now);
    let offsets = if profile > 0.0 {
        defs.eyelid_close()
            .iter()
            .filter(|o| o.bone.is_eyelid())
            .map(|o| o.scaled(profile))
            .collect()
    } else {
        Vec::new()
    };
    (offsets, next)
}
