//! Pipeline configuration file.
//!
//! TOML with flat top-level keys and one table per component:
//!
//! ```toml
//! train = "data/train.tsv"
//! unlabeled = "data/unlabeled.tsv"
//! test = "data/test.tsv"
//! workdir = "runs/demo"          # or $SELFTRAIN_WORKDIR
//! k = 5
//! seeds = [1, 2, 3, 4, 5]        # m = number of seeds
//! fold_seed_initial = 101
//! fold_seed_final = 202
//! stratify_folds = false
//! export_clamp = true
//! group_by = "language"
//! jobs = 0                        # 0 = one worker per core
//!
//! [train_config]                  # epochs, batch_size, peak_lr, warmup_fraction, decay_power
//! [features]                      # dim, word_ngrams, char_ngrams, hash_seed
//! [pseudo]                        # std_threshold, cap_per_cell, bin_edges
//! [normalization]                 # user_token, url_token, min_chars, language_whitelist
//! ```
//!
//! Any key can be overridden with `key=value` pairs (dotted keys reach into
//! tables, values are parsed as TOML, falling back to a string). Relative
//! paths in a config file are taken relative to the file's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::NormalizationConfig;
use crate::error::{Error, Result};
use crate::metrics::GroupBy;
use crate::model::{FeatureConfig, TrainConfig};
use crate::pseudolabel::PseudoLabelConfig;

pub const WORKDIR_ENV: &str = "SELFTRAIN_WORKDIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub train: PathBuf,
    pub unlabeled: PathBuf,
    pub test: PathBuf,
    #[serde(default, skip_serializing)]
    pub workdir: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_fold_seed_initial")]
    pub fold_seed_initial: u64,
    #[serde(default = "default_fold_seed_final")]
    pub fold_seed_final: u64,
    #[serde(default)]
    pub stratify_folds: bool,
    #[serde(default = "default_true")]
    pub export_clamp: bool,
    #[serde(default)]
    pub group_by: GroupBy,
    #[serde(default, skip_serializing)]
    pub jobs: usize,
    #[serde(default)]
    pub train_config: TrainConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub pseudo: PseudoLabelConfig,
    #[serde(default)]
    pub normalization: NormalizationConfig,
}

fn default_k() -> usize {
    5
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_fold_seed_initial() -> u64 {
    101
}

fn default_fold_seed_final() -> u64 {
    202
}

fn default_true() -> bool {
    true
}

impl PipelineConfig {
    /// Paths and defaults for everything else.
    pub fn new(train: PathBuf, unlabeled: PathBuf, test: PathBuf) -> Self {
        PipelineConfig {
            train,
            unlabeled,
            test,
            workdir: None,
            k: default_k(),
            m: None,
            seeds: default_seeds(),
            fold_seed_initial: default_fold_seed_initial(),
            fold_seed_final: default_fold_seed_final(),
            stratify_folds: false,
            export_clamp: true,
            group_by: GroupBy::Language,
            jobs: 0,
            train_config: TrainConfig::default(),
            features: FeatureConfig::default(),
            pseudo: PseudoLabelConfig::default(),
            normalization: NormalizationConfig::default(),
        }
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, overrides)?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            for p in [&mut cfg.train, &mut cfg.unlabeled, &mut cfg.test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if let Some(w) = cfg.workdir.as_mut().filter(|w| w.is_relative()) {
                *w = base.join(&*w);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn m(&self) -> usize {
        self.seeds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "k = {} but at least 2 parts are needed",
                self.k
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        if let Some(m) = self.m {
            if m != self.seeds.len() {
                return Err(Error::Config(format!(
                    "m = {m} but {} seeds are listed",
                    self.seeds.len()
                )));
            }
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        let mut paths = vec![&self.train, &self.unlabeled, &self.test];
        if let Some(w) = &self.workdir {
            paths.push(w);
        }
        let unique: HashSet<&PathBuf> = paths.iter().copied().collect();
        if unique.len() != paths.len() {
            return Err(Error::Config(
                "train, unlabeled, test and workdir must be distinct paths".into(),
            ));
        }
        self.train_config.validate()?;
        self.features.validate()?;
        self.pseudo.validate()?;
        self.normalization.validate()
    }

    /// Canonical TOML rendering, without the workdir and worker count.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| Error::Config(format!("override {item:?} has an empty key")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {item:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
