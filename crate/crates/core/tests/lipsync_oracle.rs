mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rigserve_core::lipsync::{PhonemeEvent, PhonemeTrack, RampConfig, TrackSampler};
use rigserve_core::RigDefinition;
use support::oracle::{check_track, fuzz_track, BruteForce, Fuzzed};

#[test]
fn compile_track_matches_brute_force_on_fuzzed_tracks() {
    let defs = RigDefinition::default_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(0x11b5);
    let mut crossfade_ticks = 0;
    for n in 0..150 {
        let fz = fuzz_track(&mut rng, &defs);
        for hz in [60.0, 30.0, 100.0] {
            let c = check_track(&fz, hz, &defs).unwrap_or_else(|e| panic!("track {n}: {e}"));
            assert!(
                c.max_error <= 1e-9,
                "track {n} at {hz} Hz: error {}",
                c.max_error
            );
            assert!(
                c.max_sum_error <= 1e-12,
                "track {n}: sum error {}",
                c.max_sum_error
            );
            crossfade_ticks += c.crossfade_ticks;
        }
    }
    assert!(crossfade_ticks > 100, "fuzzer produced too few crossfades");
}

#[test]
fn oracle_agrees_with_hand_worked_single_event() {
    let defs = RigDefinition::default_rig();
    let bf = BruteForce::new(&[PhonemeEvent::new("ae", 0, 200)], 40.0, &defs);
    assert_eq!(bf.sample(20.0)["ae"], 0.5);
    assert_eq!(bf.sample(100.0)["ae"], 1.0);
    assert!(bf.sample(240.0).is_empty());
}

#[test]
fn sampler_matches_oracle_off_grid() {
    let defs = RigDefinition::default_rig();
    let fz = Fuzzed {
        events: vec![
            PhonemeEvent::new("h", 0, 80),
            PhonemeEvent::new("ai", 60, 160),
            PhonemeEvent::new("m", 240, 100),
        ],
        ramp_ms: 40.0,
    };
    let ramp = RampConfig::new(fz.ramp_ms).unwrap();
    let track = PhonemeTrack::new(fz.events.clone(), &defs, &ramp).unwrap();
    let sampler = TrackSampler::new(&track, &ramp, &defs);
    let bf = BruteForce::new(&fz.events, fz.ramp_ms, &defs);
    for i in 0..4000 {
        let t = i as f64 * 0.1;
        let got = sampler.sample(t);
        for (v, w) in bf.sample(t) {
            assert!((got.get(&v) - w).abs() < 1e-9, "t={t} {v}");
        }
        assert!(got.nonzero_count() <= 2);
    }
}
