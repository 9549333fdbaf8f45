//! Ensemble directory: `manifest.json` plus one `member-<split>.model` file
//! per selected model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CandidateRecord, EnsembleModel, Member};
use crate::error::{Error, Result};
use crate::model::{load_model, save_model, FeatureConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format_version: u32,
    pub k: usize,
    pub fold_seed: u64,
    pub stratified: bool,
    pub candidate_count: usize,
    pub members: Vec<MemberEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub split: usize,
    pub seed: u64,
    /// Absent for members that were never validated.
    pub validation_r: Option<f64>,
    pub file: String,
    pub fingerprint: String,
    pub feature_config: FeatureConfig,
    pub candidates: Vec<CandidateRecord>,
}

impl EnsembleManifest {
    pub fn of(ens: &EnsembleModel) -> Self {
        EnsembleManifest {
            format_version: MANIFEST_VERSION,
            k: ens.k,
            fold_seed: ens.fold_seed,
            stratified: ens.stratified,
            candidate_count: ens.candidate_count(),
            members: ens
                .members
                .iter()
                .map(|m| MemberEntry {
                    split: m.split,
                    seed: m.seed,
                    validation_r: Some(m.validation_r).filter(|r| r.is_finite()),
                    file: format!("member-{}.model", m.split),
                    fingerprint: m.model.fingerprint(),
                    feature_config: m.model.feature_config,
                    candidates: m.candidates.clone(),
                })
                .collect(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: EnsembleManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Version {
                found: manifest.format_version,
                expected: MANIFEST_VERSION,
            });
        }
        Ok(manifest)
    }
}

/// Creates `dir` (which must not already hold a manifest) and writes the
/// ensemble into it.
pub fn save_ensemble(ens: &EnsembleModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = EnsembleManifest::of(ens);
    for (m, entry) in ens.members.iter().zip(&manifest.members) {
        save_model(&m.model, &dir.join(&entry.file))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Loads an ensemble, checking every member file against its recorded
/// fingerprint.
pub fn load_ensemble(dir: &Path) -> Result<EnsembleModel> {
    let manifest = EnsembleManifest::read(dir)?;
    let mut members = Vec::with_capacity(manifest.members.len());
    for entry in manifest.members {
        let model = load_model(&dir.join(&entry.file))?;
        if model.fingerprint() != entry.fingerprint {
            return Err(Error::Corrupt(format!(
                "{} does not match its manifest fingerprint",
                entry.file
            )));
        }
        members.push(Member {
            model,
            split: entry.split,
            seed: entry.seed,
            validation_r: entry.validation_r.unwrap_or(f64::NAN),
            candidates: entry.candidates,
        });
    }
    Ok(EnsembleModel {
        members,
        k: manifest.k,
        fold_seed: manifest.fold_seed,
        stratified: manifest.stratified,
    })
}
