use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::bone::BoneId;
use super::definition::{PresetId, RigDefinition};

/// One region violation found by [`validate_presets`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    /// Preset (or `eyelid_close`) the finding is about.
    pub subject: String,
    pub bone: Option<BoneId>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Region findings for a rig definition. Empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return writeln!(f, "ok: no findings");
        }
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

fn region_label(bones: &BTreeSet<BoneId>, defs: &RigDefinition) -> &'static str {
    let all = |pat: &str| !bones.is_empty() && bones.iter().all(|b| b.name().contains(pat));
    if all("Brow") {
        "brow region"
    } else if all("Eyelid") {
        "eyelid region"
    } else if all("Cheek") {
        "cheek region"
    } else if bones
        .iter()
        .all(|b| b.name().contains("Nose") || b.name().contains("Nostril"))
    {
        "nose region"
    } else if bones
        .iter()
        .all(|b| *b == BoneId::JAW || *b == BoneId::CHIN)
    {
        "jaw region"
    } else if bones.is_subset(defs.lower_region()) {
        "mouth region"
    } else {
        "allowed region"
    }
}

/// Checks every preset against its allowed region: AU presets against the
/// per-AU table, visemes against the lower (mouth) region, the eyelid-close
/// shape against the eyelid bones. Also reports visemes no phoneme maps to.
pub fn validate_presets(defs: &RigDefinition) -> ValidationReport {
    let mut findings = Vec::new();

    for (au, preset) in defs.au_presets() {
        let allowed = defs.au_region(*au);
        let label = region_label(allowed, defs);
        for bone in preset.region() {
            if !bone.is_facial() {
                findings.push(Finding {
                    subject: au.to_string(),
                    bone: Some(*bone),
                    message: format!("{au} touches non-facial bone {bone}"),
                });
            } else if !allowed.contains(bone) {
                findings.push(Finding {
                    subject: au.to_string(),
                    bone: Some(*bone),
                    message: format!("{au} touches {bone}, outside {label}"),
                });
            }
        }
    }

    for (id, preset) in defs.viseme_presets() {
        for bone in preset.region() {
            if !defs.lower_region().contains(bone) {
                findings.push(Finding {
                    subject: PresetId::Viseme(id.clone()).to_string(),
                    bone: Some(*bone),
                    message: format!("viseme {id} touches non-mouth bone {bone}"),
                });
            }
        }
        if !defs.phoneme_map().values().any(|v| v == id) {
            findings.push(Finding {
                subject: PresetId::Viseme(id.clone()).to_string(),
                bone: None,
                message: format!("viseme {id} has no phoneme mapped to it"),
            });
        }
    }

    for off in defs.eyelid_close() {
        if !off.bone.is_eyelid() {
            findings.push(Finding {
                subject: "eyelid_close".into(),
                bone: Some(off.bone),
                message: format!("eyelid_close touches non-eyelid bone {}", off.bone),
            });
        }
    }

    ValidationReport { findings }
}
