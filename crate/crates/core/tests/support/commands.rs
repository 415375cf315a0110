//! Random protocol traffic: valid commands and malformed lines.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rigserve_core::lipsync::PhonemeEvent;
use rigserve_core::protocol::Command;
use rigserve_core::rig::{ActionUnit, BoneId, BoneOffset, BonePose, CameraPose, BONE_COUNT};
use rigserve_core::RigDefinition;

fn any_f64<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..5) {
        0 => 0.0,
        1 => rng.random_range(-1.0..1.0),
        2 => rng.random_range(-1e6..1e6),
        3 => f64::from_bits(rng.random::<u64>() & !(0x7ff << 52)) * 1e300,
        _ => rng.random::<f64>() * 1e-300,
    }
}

fn unit<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random(),
    }
}

fn vec3<R: Rng>(rng: &mut R) -> [f64; 3] {
    [any_f64(rng), any_f64(rng), any_f64(rng)]
}

fn bone<R: Rng>(rng: &mut R) -> BoneId {
    BoneId::from_index(rng.random_range(0..BONE_COUNT)).unwrap()
}

pub fn random_command<R: Rng>(rng: &mut R, defs: &RigDefinition) -> Command {
    match rng.random_range(0..15) {
        0 => Command::SetBonePose {
            bone: bone(rng),
            pose: BonePose {
                position: vec3(rng),
                orientation: vec3(rng),
            },
        },
        1 => {
            let aus: Vec<ActionUnit> = ActionUnit::all().collect();
            let n = rng.random_range(0..=aus.len());
            let intensities: BTreeMap<ActionUnit, f64> = aus
                .choose_multiple(rng, n)
                .map(|a| (*a, unit(rng)))
                .collect();
            Command::SetAus { intensities }
        }
        2 => Command::SetViseme {
            viseme: defs
                .viseme_presets()
                .keys()
                .collect::<Vec<_>>()
                .choose(rng)
                .unwrap()
                .to_string(),
            weight: unit(rng),
        },
        3 => {
            let phonemes: Vec<&String> = defs.phoneme_map().keys().collect();
            let track = (0..rng.random_range(0..6))
                .map(|_| {
                    PhonemeEvent::new(
                        phonemes.choose(rng).unwrap().as_str(),
                        rng.random_range(0..10_000),
                        rng.random_range(0..1_000),
                    )
                })
                .collect();
            Command::PlayVisemeTrack {
                track,
                offset_ms: any_f64(rng),
            }
        }
        4 => Command::StopTrack {},
        5 => Command::SetHeadPose {
            yaw: any_f64(rng),
            pitch: any_f64(rng),
            roll: any_f64(rng),
        },
        6 => Command::SetAppearance {
            skin_tone: any_f64(rng),
            skin_age: any_f64(rng),
        },
        7 => Command::SetCameraPose {
            pose: CameraPose {
                position: vec3(rng),
                orientation: vec3(rng),
            },
        },
        8 => Command::SetEmotion {
            label: defs
                .emotion_table()
                .keys()
                .collect::<Vec<_>>()
                .choose(rng)
                .unwrap()
                .to_string(),
            intensity: unit(rng),
        },
        9 => Command::AuFrame {
            t_ms: any_f64(rng).abs(),
            probabilities: std::array::from_fn(|_| unit(rng)),
        },
        10 => Command::BoneFrame {
            t_ms: any_f64(rng).abs(),
            offsets: (0..rng.random_range(0..5))
                .map(|_| BoneOffset::new(bone(rng), vec3(rng), vec3(rng)))
                .collect(),
        },
        11 => Command::Subscribe {},
        12 => Command::Unsubscribe {},
        13 => Command::QueryState {},
        _ => Command::Reset {},
    }
}

/// A single line (no `\n`) that must be rejected by the parser.
pub fn random_malformed<R: Rng>(rng: &mut R) -> String {
    let id = rng.random_range(0..1_000_000u64);
    let line = match rng.random_range(0..12) {
        0 => {
            let n = rng.random_range(1..40);
            let bytes: Vec<u8> = (0..n).map(|_| rng.random()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        1 => format!("{{\"id\":{id},\"cmd\":\"SetHeadPose\",\"yaw\":"),
        2 => "[1,2,3]".to_owned(),
        3 => format!("{{\"cmd\":\"Reset\",\"nonce\":{id}}}"),
        4 => format!("{{\"id\":-{},\"cmd\":\"Reset\"}}", id + 1),
        5 => format!("{{\"id\":{id},\"cmd\":\"Fly{id}\"}}"),
        6 => format!("{{\"id\":{id},\"cmd\":\"SetHeadPose\",\"yaw\":0.1}}"),
        7 => format!("{{\"id\":{id},\"cmd\":\"SetAUs\",\"intensities\":{{\"12\":{}}}}}", 1.0 + rng.random::<f64>() + 1e-9),
        8 => format!("{{\"id\":{id},\"cmd\":\"SetBonePose\",\"bone\":\"Tail{id}\",\"pose\":{{\"p\":[0,0,0],\"r\":[0,0,0]}}}}"),
        9 => format!("{{\"id\":{id},\"cmd\":\"AuFrame\",\"t_ms\":0,\"probabilities\":[0.1,0.2]}}"),
        10 => format!("{{\"id\":{id},\"cmd\":\"QueryState\",\"extra\":{id}}}"),
        _ => format!("{{\"id\":{id},\"cmd\":\"SetViseme\",\"viseme\":\"ae\",\"weight\":\"high\"}}"),
    };
    let line = line.replace(['\n', '\r'], " ");
    if line.trim().is_empty() {
        "?".to_owned()
    } else {
        line
    }
}
