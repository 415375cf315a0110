//! Phoneme timelines to per-tick viseme weights.
//!
//! Every event fades in over an attack ramp starting at its start time and
//! fades out over a release ramp starting at its end time. When the next
//! event begins less than one ramp after the current one ends (or overlaps
//! it), the two share a single crossfade window starting at
//! `min(next.start, current.end)`, so the outgoing and incoming weights sum
//! to one throughout. Ramps are clipped to half the duration of the events
//! they touch, which keeps at most two visemes active at any instant.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::rig::RigDefinition;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LipsyncError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown phoneme {0:?}")]
    UnknownPhoneme(String),
    #[error("event {index} ({phoneme}) has zero duration")]
    ZeroDuration { index: usize, phoneme: String },
    #[error("event {index} starts before the previous event")]
    Unsorted { index: usize },
    #[error("event {index} overlaps the previous event by {overlap_ms} ms (at most {allowed_ms} ms allowed)")]
    Overlap {
        index: usize,
        overlap_ms: u64,
        allowed_ms: f64,
    },
    #[error("out-of-lexicon word(s): {}", .0.join(", "))]
    OutOfLexicon(Vec<String>),
    #[error("ramp must be finite and non-negative, got {0} ms")]
    InvalidRamp(f64),
    #[error("rate must be positive, got {0}")]
    InvalidRate(f64),
}

/// One timed phoneme.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhonemeEvent {
    pub phoneme: String,
    pub start_ms: u64,
    pub duration_ms: u64,
}

impl PhonemeEvent {
    pub fn new(phoneme: impl Into<String>, start_ms: u64, duration_ms: u64) -> Self {
        Self {
            phoneme: phoneme.into(),
            start_ms,
            duration_ms,
        }
    }

    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.duration_ms
    }
}

/// Crossfade ramp length in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RampConfig {
    pub ramp_ms: f64,
}

impl RampConfig {
    pub const DEFAULT_MS: f64 = 40.0;

    pub fn new(ramp_ms: f64) -> Result<Self, LipsyncError> {
        if ramp_ms.is_finite() && ramp_ms >= 0.0 {
            Ok(Self { ramp_ms })
        } else {
            Err(LipsyncError::InvalidRamp(ramp_ms))
        }
    }
}

impl Default for RampConfig {
    fn default() -> Self {
        Self {
            ramp_ms: Self::DEFAULT_MS,
        }
    }
}

/// Validated, sorted phoneme timeline.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhonemeTrack {
    events: Vec<PhonemeEvent>,
}

impl PhonemeTrack {
    /// Validates phoneme symbols, durations, ordering and overlap. Adjacent
    /// events may overlap by at most the effective ramp at their boundary.
    pub fn new(
        events: Vec<PhonemeEvent>,
        defs: &RigDefinition,
        ramp: &RampConfig,
    ) -> Result<Self, LipsyncError> {
        for (index, ev) in events.iter().enumerate() {
            if !defs.phoneme_map().contains_key(&ev.phoneme) {
                return Err(LipsyncError::UnknownPhoneme(ev.phoneme.clone()));
            }
            if ev.duration_ms == 0 {
                return Err(LipsyncError::ZeroDuration {
                    index,
                    phoneme: ev.phoneme.clone(),
                });
            }
        }
        for (index, pair) in events.windows(2).enumerate() {
            let (prev, next) = (&pair[0], &pair[1]);
            if next.start_ms < prev.start_ms {
                return Err(LipsyncError::Unsorted { index: index + 1 });
            }
            if next.start_ms < prev.end_ms() {
                let overlap_ms = prev.end_ms() - next.start_ms;
                let allowed_ms = boundary_ramp(ramp.ramp_ms, prev, next);
                if overlap_ms as f64 > allowed_ms {
                    return Err(LipsyncError::Overlap {
                        index: index + 1,
                        overlap_ms,
                        allowed_ms,
                    });
                }
            }
        }
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[PhonemeEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// End of the last event.
    pub fn total_ms(&self) -> u64 {
        self.events
            .iter()
            .map(PhonemeEvent::end_ms)
            .max()
            .unwrap_or(0)
    }
}

fn boundary_ramp(ramp_ms: f64, a: &PhonemeEvent, b: &PhonemeEvent) -> f64 {
    ramp_ms
        .min(a.duration_ms as f64 / 2.0)
        .min(b.duration_ms as f64 / 2.0)
}

/// Parses `phoneme,start_ms,duration_ms` lines (`#` starts a comment) using
/// the default ramp as overlap tolerance.
pub fn parse_phoneme_track(
    document: &str,
    defs: &RigDefinition,
) -> Result<PhonemeTrack, LipsyncError> {
    parse_phoneme_track_with(document, defs, &RampConfig::default())
}

pub fn parse_phoneme_track_with(
    document: &str,
    defs: &RigDefinition,
    ramp: &RampConfig,
) -> Result<PhonemeTrack, LipsyncError> {
    let mut events = Vec::new();
    for (i, raw) in document.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| LipsyncError::Parse {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [phoneme, start, duration] = fields[..] else {
            return Err(parse_err(format!(
                "expected phoneme,start_ms,duration_ms, got {} field(s)",
                fields.len()
            )));
        };
        let num = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(format!("{what} {s:?} is not a non-negative integer")))
        };
        events.push(PhonemeEvent::new(
            phoneme,
            num(start, "start_ms")?,
            num(duration, "duration_ms")?,
        ));
    }
    PhonemeTrack::new(events, defs, ramp)
}

/// Viseme id for a phoneme symbol.
pub fn map_phoneme<'a>(phoneme: &str, defs: &'a RigDefinition) -> Result<&'a str, LipsyncError> {
    defs.phoneme_map()
        .get(phoneme)
        .map(String::as_str)
        .ok_or_else(|| LipsyncError::UnknownPhoneme(phoneme.to_owned()))
}

/// Active visemes at one instant; only nonzero weights are stored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VisemeWeights(BTreeMap<String, f64>);

impl VisemeWeights {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds to a viseme's weight, keeping the total within [0, 1].
    pub fn add(&mut self, viseme: &str, weight: f64) {
        if weight <= 0.0 {
            return;
        }
        let w = self.0.entry(viseme.to_owned()).or_insert(0.0);
        *w = (*w + weight).min(1.0);
    }

    pub fn set(&mut self, viseme: &str, weight: f64) {
        if weight > 0.0 {
            self.0.insert(viseme.to_owned(), weight.min(1.0));
        } else {
            self.0.remove(viseme);
        }
    }

    pub fn get(&self, viseme: &str) -> f64 {
        self.0.get(viseme).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }
}

/// Piecewise-linear weight of one event: rises over `[rise_at, rise_at +
/// rise_len)`, holds at 1, falls over `[fall_at, fall_at + fall_len)`.
#[derive(Clone, Debug, PartialEq)]
struct Envelope {
    viseme: String,
    rise_at: f64,
    rise_len: f64,
    fall_at: f64,
    fall_len: f64,
}

impl Envelope {
    fn weight(&self, t: f64) -> f64 {
        if t < self.rise_at {
            0.0
        } else if t < self.rise_at + self.rise_len {
            (t - self.rise_at) / self.rise_len
        } else if t < self.fall_at {
            1.0
        } else if t < self.fall_at + self.fall_len {
            1.0 - (t - self.fall_at) / self.fall_len
        } else {
            0.0
        }
    }

    fn end(&self) -> f64 {
        self.fall_at + self.fall_len
    }
}

/// A track resolved to viseme envelopes, ready for repeated sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackSampler {
    envelopes: Vec<Envelope>,
}

impl TrackSampler {
    pub fn new(track: &PhonemeTrack, ramp: &RampConfig, defs: &RigDefinition) -> Self {
        let events = track.events();
        let r = ramp.ramp_ms;
        // Crossfade window shared by events i and i+1, if they are linked.
        let links: Vec<Option<(f64, f64)>> = events
            .windows(2)
            .map(|pair| {
                let (a, b) = (&pair[0], &pair[1]);
                let gap = b.start_ms as f64 - a.end_ms() as f64;
                (gap < r).then(|| {
                    let at = b.start_ms.min(a.end_ms()) as f64;
                    (at, boundary_ramp(r, a, b))
                })
            })
            .collect();

        let envelopes = events
            .iter()
            .enumerate()
            .map(|(i, ev)| {
                let own = r.min(ev.duration_ms as f64 / 2.0);
                let (rise_at, rise_len) = i
                    .checked_sub(1)
                    .and_then(|p| links[p])
                    .unwrap_or((ev.start_ms as f64, own));
                let (fall_at, fall_len) = links
                    .get(i)
                    .copied()
                    .flatten()
                    .unwrap_or((ev.end_ms() as f64, own));
                let viseme = defs
                    .phoneme_map()
                    .get(&ev.phoneme)
                    .cloned()
                    .unwrap_or_else(|| ev.phoneme.clone());
                Envelope {
                    viseme,
                    rise_at,
                    rise_len,
                    fall_at,
                    fall_len,
                }
            })
            .collect();
        Self { envelopes }
    }

    pub fn sample(&self, t_ms: f64) -> VisemeWeights {
        let mut out = VisemeWeights::new();
        // Envelopes are ordered by rise time; later ones cannot be active yet.
        for env in self.envelopes.iter().take_while(|e| e.rise_at <= t_ms) {
            out.add(&env.viseme, env.weight(t_ms));
        }
        out
    }

    /// Half-open interval during which the track can produce nonzero
    /// weights. `None` for an empty track.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.envelopes.first()?;
        let end = self
            .envelopes
            .iter()
            .map(Envelope::end)
            .fold(f64::MIN, f64::max);
        Some((first.rise_at, end))
    }

    pub fn is_active(&self, t_ms: f64) -> bool {
        self.support().is_some_and(|(a, b)| t_ms >= a && t_ms < b)
    }
}

pub fn sample_viseme_weights(
    track: &PhonemeTrack,
    t_ms: f64,
    ramp: &RampConfig,
    defs: &RigDefinition,
) -> VisemeWeights {
    TrackSampler::new(track, ramp, defs).sample(t_ms)
}

/// Samples the track at every tick from 0 through
/// `ceil(total_ms * tick_hz / 1000)`.
pub fn compile_track(
    track: &PhonemeTrack,
    tick_hz: f64,
    ramp: &RampConfig,
    defs: &RigDefinition,
) -> Result<Vec<(u64, VisemeWeights)>, LipsyncError> {
    if !(tick_hz > 0.0 && tick_hz.is_finite()) {
        return Err(LipsyncError::InvalidRate(tick_hz));
    }
    let sampler = TrackSampler::new(track, ramp, defs);
    let last = (track.total_ms() as f64 * tick_hz / 1000.0).ceil() as u64;
    Ok((0..=last)
        .map(|k| (k, sampler.sample(k as f64 * 1000.0 / tick_hz)))
        .collect())
}

/// Word to phoneme-list pronunciation table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, phonemes: &[&str]) {
        self.entries.insert(
            word.to_lowercase(),
            phonemes.iter().map(|p| (*p).to_owned()).collect(),
        );
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Small pronunciation table for demos and tests.
pub const DEMO_LEXICON: &str = include_str!("../data/demo_lexicon.txt");

/// Parses `word: ph1 ph2 ...` lines.
pub fn parse_lexicon(document: &str) -> Result<Lexicon, LipsyncError> {
    let mut lex = Lexicon::new();
    for (i, raw) in document.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((word, phones)) = line.split_once(':') else {
            return Err(LipsyncError::Parse {
                line: i + 1,
                message: "expected `word: ph1 ph2 ...`".into(),
            });
        };
        let word = word.trim();
        let phones: Vec<&str> = phones.split_whitespace().collect();
        if word.is_empty() || phones.is_empty() {
            return Err(LipsyncError::Parse {
                line: i + 1,
                message: "empty word or pronunciation".into(),
            });
        }
        lex.insert(word, &phones);
    }
    Ok(lex)
}

/// Silence inserted between words by [`text_to_phoneme_track`].
pub const WORD_GAP_MS: u64 = 120;

/// Builds a track from text with uniform `1000 / rate` ms phonemes and a
/// fixed gap between words.
pub fn text_to_phoneme_track(
    text: &str,
    lexicon: &Lexicon,
    rate: f64,
    defs: &RigDefinition,
) -> Result<PhonemeTrack, LipsyncError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(LipsyncError::InvalidRate(rate));
    }
    let words: Vec<String> = text
        .split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect();
    let missing: Vec<String> = words
        .iter()
        .filter(|w| lexicon.get(w).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(LipsyncError::OutOfLexicon(missing));
    }

    let dur = ((1000.0 / rate).round() as u64).max(1);
    let mut cursor = 0;
    let mut events = Vec::new();
    for (i, word) in words.iter().enumerate() {
        if i > 0 {
            cursor += WORD_GAP_MS;
        }
        for ph in lexicon.get(word).unwrap_or_default() {
            events.push(PhonemeEvent::new(ph.as_str(), cursor, dur));
            cursor += dur;
        }
    }
    PhonemeTrack::new(events, defs, &RampConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defs() -> RigDefinition {
        RigDefinition::default_rig()
    }

    fn track(doc: &str) -> PhonemeTrack {
        parse_phoneme_track(doc, &defs()).unwrap()
    }

    #[test]
    fn demo_lexicon_uses_known_phonemes() {
        let lex = parse_lexicon(DEMO_LEXICON).unwrap();
        assert!(lex.len() > 50);
        let d = defs();
        let hi = text_to_phoneme_track("hi", &lex, 10.0, &d).unwrap();
        assert_eq!(hi.events().len(), 2);
        for line in DEMO_LEXICON.lines().filter(|l| !l.starts_with('#')) {
            let (word, _) = line.split_once(':').unwrap();
            text_to_phoneme_track(word, &lex, 10.0, &d).unwrap();
        }
    }

    #[test]
    fn parse_examples() {
        let t = track("ae,0,200\nb,200,150");
        assert_eq!(t.events().len(), 2);
        assert_eq!(t.total_ms(), 350);
        assert_eq!(
            parse_phoneme_track("zz,0,100", &defs()),
            Err(LipsyncError::UnknownPhoneme("zz".into()))
        );
        let empty = track("");
        assert!(empty.is_empty());
        assert_eq!(empty.total_ms(), 0);
    }

    #[test]
    fn parse_comments_and_errors() {
        let t = track("# greeting\n h , 0, 100  # first\n\nai,100,100\n");
        assert_eq!(t.events()[1], PhonemeEvent::new("ai", 100, 100));
        let d = defs();
        assert!(matches!(
            parse_phoneme_track("ae,0", &d),
            Err(LipsyncError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_phoneme_track("ae,0,-5", &d),
            Err(LipsyncError::Parse { .. })
        ));
        assert!(matches!(
            parse_phoneme_track("ae,0,0", &d),
            Err(LipsyncError::ZeroDuration { .. })
        ));
        assert!(matches!(
            parse_phoneme_track("ae,100,50\nb,0,50", &d),
            Err(LipsyncError::Unsorted { index: 1 })
        ));
        // Overlap of 20 ms is within the 40 ms ramp; 60 ms is not.
        assert!(parse_phoneme_track("ae,0,200\nb,180,150", &d).is_ok());
        assert!(matches!(
            parse_phoneme_track("ae,0,200\nb,140,150", &d),
            Err(LipsyncError::Overlap { overlap_ms: 60, .. })
        ));
    }

    #[test]
    fn phoneme_mapping() {
        let d = defs();
        assert_eq!(map_phoneme("b", &d).unwrap(), "b");
        assert_eq!(map_phoneme("p", &d).unwrap(), "b");
        assert_eq!(map_phoneme("ae", &d).unwrap(), "ae");
        assert!(map_phoneme("zz", &d).is_err());
    }

    #[test]
    fn single_event_samples() {
        let d = defs();
        let t = track("ae,0,200");
        let ramp = RampConfig::default();
        let at = |ms| sample_viseme_weights(&t, ms, &ramp, &d);
        assert_eq!(at(100.0).get("ae"), 1.0);
        assert_eq!(at(100.0).nonzero_count(), 1);
        assert_eq!(at(20.0).get("ae"), 0.5);
        assert_eq!(at(0.0).nonzero_count(), 0);
        assert_eq!(at(220.0).get("ae"), 0.5);
        assert!(at(240.0).is_zero());
        assert!(at(500.0).is_zero());
    }

    #[test]
    fn adjacent_events_crossfade_to_one() {
        let d = defs();
        let t = track("ae,0,200\nee,200,150");
        let s = TrackSampler::new(&t, &RampConfig::default(), &d);
        let w = s.sample(210.0);
        assert_eq!(w.nonzero_count(), 2);
        assert!((w.get("ae") - 0.75).abs() < 1e-12);
        assert!((w.get("ee") - 0.25).abs() < 1e-12);
        assert!((w.total() - 1.0).abs() < 1e-12);
        assert_eq!(s.sample(240.0).get("ee"), 1.0);
        assert_eq!(s.support(), Some((0.0, 390.0)));
    }

    #[test]
    fn short_gap_is_bridged_long_gap_is_not() {
        let d = defs();
        let s = TrackSampler::new(&track("ae,0,200\nee,220,150"), &RampConfig::default(), &d);
        let w = s.sample(230.0);
        assert!((w.total() - 1.0).abs() < 1e-12, "{w:?}");
        let s = TrackSampler::new(&track("ae,0,200\nee,300,150"), &RampConfig::default(), &d);
        assert!(s.sample(250.0).is_zero());
        assert_eq!(s.sample(320.0).get("ee"), 0.5);
    }

    #[test]
    fn ramp_is_clipped_to_half_the_event() {
        let d = defs();
        let t = track("ae,0,20");
        // Effective ramp is 10 ms.
        let w = sample_viseme_weights(&t, 5.0, &RampConfig::default(), &d);
        assert_eq!(w.get("ae"), 0.5);
        let w = sample_viseme_weights(&t, 10.0, &RampConfig::default(), &d);
        assert_eq!(w.get("ae"), 1.0);
    }

    #[test]
    fn zero_ramp_is_a_step() {
        let d = defs();
        let t = track("ae,0,100\nb,100,100");
        let ramp = RampConfig::new(0.0).unwrap();
        assert_eq!(sample_viseme_weights(&t, 0.0, &ramp, &d).get("ae"), 1.0);
        let w = sample_viseme_weights(&t, 100.0, &ramp, &d);
        assert_eq!((w.get("ae"), w.get("b")), (0.0, 1.0));
        assert!(sample_viseme_weights(&t, 200.0, &ramp, &d).is_zero());
    }

    #[test]
    fn same_viseme_neighbours_merge() {
        let d = defs();
        let t = track("p,0,100\nb,100,100");
        let w = sample_viseme_weights(&t, 110.0, &RampConfig::default(), &d);
        assert_eq!(w.nonzero_count(), 1);
        assert!((w.get("b") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compile_examples() {
        let d = defs();
        let ramp = RampConfig::default();
        let empty = compile_track(&PhonemeTrack::empty(), 60.0, &ramp, &d).unwrap();
        assert_eq!(empty.len(), 1);
        assert_eq!(empty[0].0, 0);
        assert!(empty[0].1.is_zero());

        let ticks = compile_track(&track("ae,0,200"), 60.0, &ramp, &d).unwrap();
        assert_eq!(ticks.len(), 13);
        assert_eq!(ticks.last().unwrap().0, 12);
        assert!(compile_track(&PhonemeTrack::empty(), 0.0, &ramp, &d).is_err());
    }

    #[test]
    fn text_to_track_examples() {
        let d = defs();
        let mut lex = Lexicon::new();
        lex.insert("hi", &["h", "ai"]);
        assert!(text_to_phoneme_track("", &lex, 10.0, &d)
            .unwrap()
            .is_empty());
        let t = text_to_phoneme_track("hi", &lex, 10.0, &d).unwrap();
        assert_eq!(
            t.events(),
            &[
                PhonemeEvent::new("h", 0, 100),
                PhonemeEvent::new("ai", 100, 100)
            ]
        );
        assert_eq!(map_phoneme("ai", &d).unwrap(), "i");
        assert_eq!(
            text_to_phoneme_track("xyzzy", &Lexicon::new(), 10.0, &d),
            Err(LipsyncError::OutOfLexicon(vec!["xyzzy".into()]))
        );
    }

    #[test]
    fn words_are_separated_by_a_gap() {
        let d = defs();
        let mut lex = Lexicon::new();
        lex.insert("hi", &["h", "ai"]);
        let t = text_to_phoneme_track("Hi, hi!", &lex, 10.0, &d).unwrap();
        assert_eq!(t.events()[2].start_ms, 200 + WORD_GAP_MS);
        assert_eq!(t.total_ms(), 400 + WORD_GAP_MS);
    }

    #[test]
    fn lexicon_parsing() {
        let lex = parse_lexicon("# demo\nhi: h ai\nHello: h e l ou\n").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.get("hello").unwrap().len(), 4);
        assert!(parse_lexicon("hi h ai").is_err());
        assert!(parse_lexicon("hi:").is_err());
    }
}
