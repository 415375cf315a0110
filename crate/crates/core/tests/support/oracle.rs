//! Brute-force lip-sync reference: per-event keyframe lists, evaluated on a
//! 1 ms grid and linearly interpolated between grid points. Fuzzed tracks
//! keep every keyframe on a whole millisecond, so the interpolation is exact.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rigserve_core::lipsync::{compile_track, PhonemeEvent, PhonemeTrack, RampConfig};
use rigserve_core::RigDefinition;

pub struct Fuzzed {
    pub events: Vec<PhonemeEvent>,
    pub ramp_ms: f64,
}

/// A random valid track: even durations, integer ramp, gaps that are
/// sometimes negative (overlaps within the allowed crossfade), zero, short
/// or long.
pub fn fuzz_track<R: Rng>(rng: &mut R, defs: &RigDefinition) -> Fuzzed {
    let phonemes: Vec<&String> = defs.phoneme_map().keys().collect();
    let ramp_ms: f64 = *[10.0, 20.0, 40.0, 60.0].choose(rng).unwrap();
    let n = rng.random_range(1..=12);
    let mut events: Vec<PhonemeEvent> = Vec::with_capacity(n);
    let first: u64 = rng.random_range(0..=100);
    for _ in 0..n {
        let duration = 2 * rng.random_range(5..=150u64);
        let start = match events.last() {
            None => first,
            Some(prev) => {
                let eff = ramp_ms
                    .min(prev.duration_ms as f64 / 2.0)
                    .min(duration as f64 / 2.0)
                    .floor() as i64;
                let gap: i64 = match rng.random_range(0..4) {
                    0 => -rng.random_range(0..=eff),
                    1 => 0,
                    2 => rng.random_range(1..=ramp_ms as i64),
                    _ => rng.random_range(ramp_ms as i64..=400),
                };
                (prev.end_ms() as i64 + gap).max(prev.start_ms as i64) as u64
            }
        };
        let phoneme = (*phonemes.choose(rng).unwrap()).clone();
        events.push(PhonemeEvent::new(phoneme, start, duration));
    }
    Fuzzed { events, ramp_ms }
}

struct Curve {
    viseme: String,
    keys: Vec<(f64, f64)>,
}

impl Curve {
    fn at(&self, t: f64) -> f64 {
        let k = &self.keys;
        if t <= k[0].0 || t >= k[k.len() - 1].0 {
            return 0.0;
        }
        for w in k.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t >= t0 && t <= t1 {
                if t1 == t0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        0.0
    }
}

pub struct BruteForce {
    /// Summed per-viseme weights at every whole millisecond.
    grid: Vec<BTreeMap<String, f64>>,
    /// Shared crossfade windows `[from, to]`.
    pub crossfades: Vec<(f64, f64)>,
}

impl BruteForce {
    pub fn new(events: &[PhonemeEvent], ramp_ms: f64, defs: &RigDefinition) -> Self {
        let ends: Vec<f64> = events
            .iter()
            .map(|e| (e.start_ms + e.duration_ms) as f64)
            .collect();
        let starts: Vec<f64> = events.iter().map(|e| e.start_ms as f64).collect();
        let half: Vec<f64> = events.iter().map(|e| e.duration_ms as f64 / 2.0).collect();

        let mut crossfades = Vec::new();
        let mut link: Vec<Option<(f64, f64)>> = vec![None; events.len()];
        for i in 1..events.len() {
            if starts[i] - ends[i - 1] < ramp_ms {
                let from = starts[i].min(ends[i - 1]);
                let len = ramp_ms.min(half[i - 1]).min(half[i]);
                link[i] = Some((from, len));
                crossfades.push((from, from + len));
            }
        }

        let curves: Vec<Curve> = events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let own = ramp_ms.min(half[i]);
                let (r0, rl) = link[i].unwrap_or((starts[i], own));
                let (f0, fl) = link.get(i + 1).copied().flatten().unwrap_or((ends[i], own));
                Curve {
                    viseme: defs.phoneme_map()[&e.phoneme].clone(),
                    keys: vec![(r0, 0.0), (r0 + rl, 1.0), (f0, 1.0), (f0 + fl, 0.0)],
                }
            })
            .collect();

        let horizon = ends.iter().cloned().fold(0.0, f64::max) + ramp_ms + 2.0;
        let grid = (0..=horizon as usize)
            .map(|ms| {
                let mut w = BTreeMap::new();
                for c in &curves {
                    let v = c.at(ms as f64);
                    if v > 0.0 {
                        *w.entry(c.viseme.clone()).or_insert(0.0) += v;
                    }
                }
                w
            })
            .collect();
        Self { grid, crossfades }
    }

    pub fn sample(&self, t: f64) -> BTreeMap<String, f64> {
        let lo = t.floor() as usize;
        let frac = t - lo as f64;
        let empty = BTreeMap::new();
        let a = self.grid.get(lo).unwrap_or(&empty);
        let b = self.grid.get(lo + 1).unwrap_or(&empty);
        let mut out = BTreeMap::new();
        for k in a.keys().chain(b.keys()) {
            let va = a.get(k).copied().unwrap_or(0.0);
            let vb = b.get(k).copied().unwrap_or(0.0);
            let v = va + (vb - va) * frac;
            if v > 0.0 {
                out.insert(k.clone(), v);
            }
        }
        out
    }

    pub fn in_crossfade(&self, t: f64) -> bool {
        self.crossfades.iter().any(|(a, b)| t > *a && t < *b)
    }
}

#[derive(Debug, Default)]
pub struct TrackCheck {
    pub ticks: usize,
    pub max_error: f64,
    pub crossfade_ticks: usize,
    pub max_sum_error: f64,
}

/// Compares `compile_track` against the brute-force reference at every tick.
pub fn check_track(fz: &Fuzzed, tick_hz: f64, defs: &RigDefinition) -> Result<TrackCheck, String> {
    let ramp = RampConfig::new(fz.ramp_ms).map_err(|e| e.to_string())?;
    let track = PhonemeTrack::new(fz.events.clone(), defs, &ramp).map_err(|e| e.to_string())?;
    let table = compile_track(&track, tick_hz, &ramp, defs).map_err(|e| e.to_string())?;
    let oracle = BruteForce::new(&fz.events, fz.ramp_ms, defs);
    let mut out = TrackCheck::default();
    for (k, got) in &table {
        let t = *k as f64 * 1000.0 / tick_hz;
        let want = oracle.sample(t);
        let keys: std::collections::BTreeSet<&str> = want
            .keys()
            .map(String::as_str)
            .chain(got.iter().map(|(v, _)| v))
            .collect();
        for v in keys {
            let e = (got.get(v) - want.get(v).copied().unwrap_or(0.0)).abs();
            out.max_error = out.max_error.max(e);
        }
        if oracle.in_crossfade(t) {
            out.crossfade_ticks += 1;
            out.max_sum_error = out.max_sum_error.max((got.total() - 1.0).abs());
        }
        out.ticks += 1;
    }
    Ok(out)
}
