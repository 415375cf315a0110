mod support;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rigserve_core::blend::{compose, ema, smooth_state, Layer, SmoothingConfig};
use rigserve_core::lipsync::{PhonemeEvent, PhonemeTrack, RampConfig, TrackSampler};
use rigserve_core::protocol::{parse_message, Request};
use rigserve_core::retarget::{controls_to_offsets, AuControls};
use rigserve_core::rig::{ActionUnit, PresetId};
use rigserve_core::session::{Session, SessionConfig};
use rigserve_core::RigDefinition;
use support::commands::{random_command, random_malformed};

fn defs() -> &'static RigDefinition {
    static DEFS: std::sync::OnceLock<RigDefinition> = std::sync::OnceLock::new();
    DEFS.get_or_init(RigDefinition::default_rig)
}

fn preset_ids() -> Vec<PresetId> {
    let d = defs();
    d.au_presets()
        .keys()
        .map(|a| PresetId::Au(*a))
        .chain(
            d.viseme_presets()
                .keys()
                .map(|v| PresetId::Viseme(v.clone())),
        )
        .collect()
}

proptest! {
    #[test]
    fn preset_pose_is_linear(idx in 0usize..43, k in 0.0f64..=1.0) {
        let id = &preset_ids()[idx];
        let full = defs().preset_pose(id, 1.0).unwrap();
        let part = defs().preset_pose(id, k).unwrap();
        for (f, p) in full.iter().zip(&part) {
            prop_assert_eq!(f.bone, p.bone);
            for (a, b) in f.channels().iter().zip(p.channels()) {
                prop_assert!((a * k - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn expression_never_leaks_into_lower_face(vals in prop::collection::vec(0.0f64..=1.0, 24), visemes in 0.0f64..=1.0) {
        let d = defs();
        let mut c = AuControls::zero();
        for (au, v) in ActionUnit::all().zip(&vals) {
            c.set(au, *v);
        }
        let lips = d.preset_pose(&PresetId::Viseme("oh".into()), visemes).unwrap();
        let with = compose(d, &[Layer::expression(controls_to_offsets(&c, d)), Layer::lipsync(lips.clone())], true);
        let without = compose(d, &[Layer::lipsync(lips)], true);
        for b in d.lower_region() {
            prop_assert_eq!(with.bone(*b), without.bone(*b));
        }
    }

    #[test]
    fn ema_stays_between_inputs(p in -1e6f64..1e6, t in -1e6f64..1e6, a in 1e-6f64..=1.0) {
        let y = ema(p, t, a);
        prop_assert!(y >= p.min(t) && y <= p.max(t));
    }

    #[test]
    fn smoothing_converges_geometrically(seed in any::<u64>(), alpha in 0.05f64..=1.0) {
        let d = defs();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = AuControls::zero();
        for au in ActionUnit::all() {
            c.set(au, rand::Rng::random(&mut rng));
        }
        let target = compose(d, &[Layer::expression(controls_to_offsets(&c, d))], false);
        let start = d.rest_state();
        let cfg = SmoothingConfig::new(alpha).unwrap();
        let mut s = start.clone();
        for n in 1..=20 {
            s = smooth_state(&s, &target, &cfg);
            let bound = (1.0 - alpha).powi(n);
            for ((o, t), r) in s.bones().iter().zip(target.bones()).zip(start.bones()) {
                for ((x, y), z) in o.channels().iter().zip(t.channels()).zip(r.channels()) {
                    prop_assert!((x - y).abs() <= bound * (z - y).abs() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn commands_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cmd = random_command(&mut rng, defs());
        let req = Request::new(seed >> 1, cmd);
        prop_assert_eq!(parse_message(&req.to_line()).unwrap(), req);
    }

    #[test]
    fn malformed_lines_are_rejected(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let line = random_malformed(&mut rng);
        prop_assert!(parse_message(&line).is_err(), "{}", line);
    }

    #[test]
    fn shifting_a_track_shifts_its_weights(shift in 0u64..5000, t in 0.0f64..800.0) {
        let d = defs();
        let ramp = RampConfig::default();
        let base = vec![
            PhonemeEvent::new("h", 0, 80),
            PhonemeEvent::new("ai", 80, 200),
            PhonemeEvent::new("m", 300, 120),
        ];
        let moved: Vec<_> = base
            .iter()
            .map(|e| PhonemeEvent::new(e.phoneme.clone(), e.start_ms + shift, e.duration_ms))
            .collect();
        let a = TrackSampler::new(&PhonemeTrack::new(base, d, &ramp).unwrap(), &ramp, d);
        let b = TrackSampler::new(&PhonemeTrack::new(moved, d, &ramp).unwrap(), &ramp, d);
        let wa = a.sample(t);
        let wb = b.sample(t + shift as f64);
        for (v, w) in wa.iter() {
            prop_assert!((wb.get(v) - w).abs() <= 1e-9);
        }
        prop_assert_eq!(wa.nonzero_count(), wb.nonzero_count());
    }

    #[test]
    fn frames_keep_head_and_appearance_in_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Session::new(Arc::new(defs().clone()), SessionConfig::default(), 0.0).unwrap();
        for k in 1..=30u64 {
            let req = Request::new(k, random_command(&mut rng, defs()));
            let now = k as f64 * 1000.0 / 60.0;
            s.handle(&req, now);
            let f = s.tick(now);
            prop_assert!(f.head.in_range());
            prop_assert!(f.appearance.in_range());
            prop_assert_eq!(f.tick, k);
            prop_assert_eq!(f.bones.len(), 38);
        }
    }
}
