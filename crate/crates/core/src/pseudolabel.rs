//! Dataset expansion: score an unlabeled pool with the ensemble, keep the
//! confident items, cap each (language, score bin) cell and merge the
//! survivors into the training set.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example, Origin};
use crate::ensemble::{ensemble_predict_text, EnsembleModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    /// Keep the items with the smallest ensemble std, ties by id.
    #[default]
    LowestStdFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PseudoLabelConfig {
    pub std_threshold: f64,
    pub cap_per_cell: usize,
    pub bin_edges: Vec<f64>,
    pub overflow_policy: OverflowPolicy,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        PseudoLabelConfig {
            std_threshold: 0.05,
            cap_per_cell: 10_000,
            bin_edges: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            overflow_policy: OverflowPolicy::LowestStdFirst,
        }
    }
}

impl PseudoLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.std_threshold.is_nan() || self.std_threshold <= 0.0 {
            return Err(Error::Config(format!(
                "std_threshold {} must be positive",
                self.std_threshold
            )));
        }
        let e = &self.bin_edges;
        if e.len() < 2
            || e[0] != 1.0
            || e[e.len() - 1] != 5.0
            || e.windows(2).any(|w| w[0] >= w[1] || w[1].is_nan())
        {
            return Err(Error::Config(format!(
                "bin edges {e:?} must ascend strictly from 1 to 5"
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.bin_edges.len() - 1
    }

    /// Half-open bins `[e_i, e_i+1)`, except the last which also takes its
    /// upper edge. Means outside `[1, 5]` are clamped for binning only.
    pub fn bin_index(&self, mean: f64) -> usize {
        let e = &self.bin_edges;
        let m = mean.clamp(e[0], e[e.len() - 1]);
        // number of interior edges <= m
        e[1..e.len() - 1].partition_point(|&edge| edge <= m)
    }

    pub fn bin_label(&self, bin: usize) -> String {
        let (lo, hi) = (self.bin_edges[bin], self.bin_edges[bin + 1]);
        if bin + 1 == self.bin_count() {
            format!("[{lo},{hi}]")
        } else {
            format!("[{lo},{hi})")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredExample {
    pub example: Example,
    pub mean: f64,
    pub std: f64,
}

/// Ensemble mean and std for every unlabeled example, in input order.
pub fn score_unlabeled(ens: &EnsembleModel, unlabeled: &Dataset) -> Result<Vec<ScoredExample>> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if let Some(ex) = unlabeled.iter().find(|e| e.score.is_some()) {
        return Err(Error::InvalidExample {
            id: ex.id.clone(),
            message: "unlabeled pool contains a scored example".into(),
        });
    }
    unlabeled
        .examples()
        .par_iter()
        .map(|ex| {
            let p = ensemble_predict_text(ens, &ex.text)?;
            Ok(ScoredExample {
                example: ex.clone(),
                mean: p.mean,
                std: p.std,
            })
        })
        .collect()
}

/// Keeps items whose std is strictly below the threshold, in order.
pub fn confidence_filter(scored: &[ScoredExample], cfg: &PseudoLabelConfig) -> Vec<ScoredExample> {
    scored
        .iter()
        .filter(|s| s.std < cfg.std_threshold)
        .cloned()
        .collect()
}

/// At most `cap_per_cell` items per (language, bin) cell.
///
/// The output is sorted by (language, bin, std, id) and so does not depend on
/// the input order.
pub fn stratified_cap(kept: &[ScoredExample], cfg: &PseudoLabelConfig) -> Vec<ScoredExample> {
    let mut cells: BTreeMap<(&str, usize), Vec<&ScoredExample>> = BTreeMap::new();
    for s in kept {
        cells
            .entry((s.example.language.as_str(), cfg.bin_index(s.mean)))
            .or_default()
            .push(s);
    }
    let mut out = Vec::with_capacity(kept.len().min(cells.len() * cfg.cap_per_cell));
    for items in cells.values_mut() {
        match cfg.overflow_policy {
            OverflowPolicy::LowestStdFirst => items.sort_by(|a, b| {
                a.std
                    .total_cmp(&b.std)
                    .then_with(|| a.example.id.cmp(&b.example.id))
            }),
        }
        out.extend(items.iter().take(cfg.cap_per_cell).map(|s| (*s).clone()));
    }
    out
}

/// Appends the capped items to `original` as pseudo-labeled examples whose
/// score is the raw ensemble mean.
pub fn expand_dataset(original: &Dataset, capped: &[ScoredExample]) -> Result<Dataset> {
    let ids: HashSet<&str> = original.iter().map(|e| e.id.as_str()).collect();
    let mut examples = original.examples().to_vec();
    examples.reserve(capped.len());
    for s in capped {
        if ids.contains(s.example.id.as_str()) {
            return Err(Error::DuplicateId(s.example.id.clone()));
        }
        examples.push(Example::pseudo(
            s.example.id.clone(),
            s.example.language.clone(),
            s.mean,
            s.std,
            s.example.text.clone(),
        ));
    }
    Dataset::new(examples)
}

/// Reverses [`expand_dataset`]'s encoding for a set of pseudo examples.
pub fn scored_from_pseudo(ds: &Dataset) -> Result<Vec<ScoredExample>> {
    ds.iter()
        .map(|e| match (e.origin, e.score, e.confidence_std) {
            (Origin::Pseudo, Some(mean), Some(std)) => Ok(ScoredExample {
                example: Example::gold(e.id.clone(), e.language.clone(), None, e.text.clone()),
                mean,
                std,
            }),
            _ => Err(Error::InvalidExample {
                id: e.id.clone(),
                message: "expected a pseudo-labeled example".into(),
            }),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOccupancy {
    pub language: String,
    pub bin: String,
    pub scored: usize,
    pub confident: usize,
    pub kept: usize,
}

/// Per-(language, bin) counts at each stage of the selection.
pub fn occupancy_report(
    scored: &[ScoredExample],
    confident: &[ScoredExample],
    capped: &[ScoredExample],
    cfg: &PseudoLabelConfig,
) -> Vec<CellOccupancy> {
    let mut cells: BTreeMap<(String, usize), [usize; 3]> = BTreeMap::new();
    for (stage, items) in [scored, confident, capped].into_iter().enumerate() {
        for s in items {
            let key = (s.example.language.clone(), cfg.bin_index(s.mean));
            cells.entry(key).or_default()[stage] += 1;
        }
    }
    cells
        .into_iter()
        .map(
            |((language, bin), [scored, confident, kept])| CellOccupancy {
                language,
                bin: cfg.bin_label(bin),
                scored,
                confident,
                kept,
            },
        )
        .collect()
}

pub fn occupancy_tsv(rows: &[CellOccupancy]) -> String {
    let mut out = String::from("language\tbin\tscored\tconfident\tkept\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.language, r.bin, r.scored, r.confident, r.kept
        );
    }
    out
}

pub const SCORED_HEADER: &str = "id\tlanguage\tmean\tstd\ttext";

pub fn write_scored(scored: &[ScoredExample], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(scored.len() * 96);
    out.push_str(SCORED_HEADER);
    out.push('\n');
    for s in scored {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            s.example.id,
            s.example.language,
            s.mean,
            s.std,
            crate::corpus::tsv_text(&s.example.text)
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
