//! Split/seed fan-out, validation-based selection and ensemble prediction.
//!
//! The labeled set is cut into `k` parts. Each part serves once as the
//! validation set while the remaining parts (plus any pseudo-labeled extra
//! data) train `m` candidates that differ only in their seed. The candidate
//! with the highest validation Pearson joins the ensemble, so `k * m` models
//! are trained and `k` are kept.

mod folds;
mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::model::{
    featurize, train_features, FeatureConfig, RegressionModel, SparseVector, TrainConfig,
};

pub use folds::{make_fold_plan, make_stratified_fold_plan, FoldPlan, SplitSpec};
pub use io::{load_ensemble, save_ensemble, EnsembleManifest, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub seed: u64,
    /// `None` when the validation correlation is undefined.
    pub validation_r: Option<f64>,
    pub fingerprint: String,
}

/// Result of one split: the selected model plus every candidate's score.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub split: usize,
    pub selected: RegressionModel,
    pub seed: u64,
    pub validation_r: f64,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub model: RegressionModel,
    pub split: usize,
    pub seed: u64,
    pub validation_r: f64,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<Member>,
    pub k: usize,
    pub fold_seed: u64,
    pub stratified: bool,
}

impl EnsembleModel {
    /// Wraps bare models, e.g. for scoring with hand-built members.
    pub fn from_models(models: Vec<RegressionModel>) -> Self {
        let k = models.len();
        EnsembleModel {
            members: models
                .into_iter()
                .enumerate()
                .map(|(split, model)| Member {
                    model,
                    split,
                    seed: split as u64,
                    validation_r: f64::NAN,
                    candidates: Vec::new(),
                })
                .collect(),
            k,
            fold_seed: 0,
            stratified: false,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn candidate_count(&self) -> usize {
        self.members.iter().map(|m| m.candidates.len()).sum()
    }
}

/// One config per candidate: `base` with each seed substituted.
pub fn candidate_configs(base: &TrainConfig, seeds: &[u64]) -> Vec<TrainConfig> {
    seeds.iter().map(|&s| base.with_seed(s)).collect()
}

fn check_seeds(candidates: &[TrainConfig]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::Config("need at least one candidate seed".into()));
    }
    let mut seeds: Vec<u64> = candidates.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    if seeds.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("candidate seeds must be distinct".into()));
    }
    Ok(())
}

fn scored(ex: &Example) -> Result<f64> {
    ex.score.ok_or_else(|| Error::InvalidExample {
        id: ex.id.clone(),
        message: "training example has no score".into(),
    })
}

/// Features of the labeled set and of the extra training data, computed once
/// and shared by every split and candidate.
struct FeatureCache {
    labeled: Vec<SparseVector>,
    labeled_y: Vec<f64>,
    extra: Vec<SparseVector>,
    extra_y: Vec<f64>,
}

impl FeatureCache {
    fn new(ds: &Dataset, extra: Option<&Dataset>, fcfg: &FeatureConfig) -> Result<Self> {
        let encode = |d: &Dataset| -> Result<(Vec<SparseVector>, Vec<f64>)> {
            let ys = d.iter().map(scored).collect::<Result<Vec<_>>>()?;
            let xs = d
                .examples()
                .par_iter()
                .map(|e| featurize(&e.text, fcfg))
                .collect();
            Ok((xs, ys))
        };
        let (labeled, labeled_y) = encode(ds)?;
        let (extra, extra_y) = match extra {
            Some(d) => encode(d)?,
            None => (Vec::new(), Vec::new()),
        };
        Ok(FeatureCache {
            labeled,
            labeled_y,
            extra,
            extra_y,
        })
    }
}

/// Trains every candidate of one split and keeps the best by validation
/// Pearson (computed on raw predictions for the validation part only).
/// Equal correlations go to the lowest seed.
pub fn train_split(
    ds: &Dataset,
    plan: &FoldPlan,
    split: &SplitSpec<'_>,
    candidates: &[TrainConfig],
    fcfg: &FeatureConfig,
) -> Result<SplitOutcome> {
    check_seeds(candidates)?;
    let cache = FeatureCache::new(ds, split.extra_train, fcfg)?;
    train_split_cached(&cache, plan, split, candidates, fcfg)
}

fn train_split_cached(
    cache: &FeatureCache,
    plan: &FoldPlan,
    split: &SplitSpec<'_>,
    candidates: &[TrainConfig],
    fcfg: &FeatureConfig,
) -> Result<SplitOutcome> {
    let train_pos = plan.positions(&split.train_parts);
    let mut xs: Vec<&SparseVector> = train_pos.iter().map(|&i| &cache.labeled[i]).collect();
    let mut ys: Vec<f64> = train_pos.iter().map(|&i| cache.labeled_y[i]).collect();
    xs.extend(cache.extra.iter());
    ys.extend_from_slice(&cache.extra_y);

    let val_pos = plan.part(split.validation_part);
    let val_gold: Vec<f64> = val_pos.iter().map(|&i| cache.labeled_y[i]).collect();

    let trained: Vec<(RegressionModel, Option<f64>)> = candidates
        .par_iter()
        .map(|cfg| {
            let model = train_features(&xs, &ys, cfg, fcfg)?;
            let preds: Vec<f64> = val_pos
                .iter()
                .map(|&i| model.predict_features(&cache.labeled[i]))
                .collect();
            let r = match pearson(&preds, &val_gold) {
                Ok(r) => Some(r),
                Err(Error::UndefinedCorrelation(_)) => None,
                Err(e) => return Err(e),
            };
            Ok((model, r))
        })
        .collect::<Result<_>>()?;

    let mut best: Option<usize> = None;
    for (i, (_, r)) in trained.iter().enumerate() {
        let Some(r) = r else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let br = trained[b].1.unwrap();
                *r > br || (*r == br && candidates[i].seed < candidates[b].seed)
            }
        };
        if better {
            best = Some(i);
        }
    }
    let best = best.ok_or(Error::NoValidCandidate {
        split: split.validation_part,
    })?;

    let records = trained
        .iter()
        .zip(candidates)
        .map(|((model, r), cfg)| CandidateRecord {
            seed: cfg.seed,
            validation_r: *r,
            fingerprint: model.fingerprint(),
        })
        .collect();
    let validation_r = trained[best].1.unwrap();
    let selected = trained.into_iter().nth(best).unwrap().0;
    Ok(SplitOutcome {
        split: split.validation_part,
        selected,
        seed: candidates[best].seed,
        validation_r,
        candidates: records,
    })
}

/// Runs [`train_split`] for every part of `plan`; `k * m` trainings in all.
pub fn build_ensemble(
    ds: &Dataset,
    plan: &FoldPlan,
    candidates: &[TrainConfig],
    fcfg: &FeatureConfig,
    extra_train: Option<&Dataset>,
) -> Result<EnsembleModel> {
    check_seeds(candidates)?;
    let cache = FeatureCache::new(ds, extra_train, fcfg)?;
    let outcomes: Vec<SplitOutcome> = (0..plan.k)
        .into_par_iter()
        .map(|v| train_split_cached(&cache, plan, &plan.split(v, extra_train), candidates, fcfg))
        .collect::<Result<_>>()?;
    Ok(EnsembleModel {
        members: outcomes
            .into_iter()
            .map(|o| Member {
                model: o.selected,
                split: o.split,
                seed: o.seed,
                validation_r: o.validation_r,
                candidates: o.candidates,
            })
            .collect(),
        k: plan.k,
        fold_seed: plan.seed,
        stratified: plan.stratified,
    })
}

/// Mean and population standard deviation of member predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsemblePrediction {
    pub mean: f64,
    pub std: f64,
}

/// Members' predictions are sorted before summation, so the result does not
/// depend on member order.
pub fn aggregate(predictions: &mut [f64]) -> Result<EnsemblePrediction> {
    if predictions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    predictions.sort_by(f64::total_cmp);
    let n = predictions.len() as f64;
    let mean = predictions.iter().sum::<f64>() / n;
    let var = predictions
        .iter()
        .map(|p| (p - mean) * (p - mean))
        .sum::<f64>()
        / n;
    Ok(EnsemblePrediction {
        mean,
        std: var.sqrt(),
    })
}

pub fn ensemble_predict(ens: &EnsembleModel, ex: &Example) -> Result<EnsemblePrediction> {
    ensemble_predict_text(ens, &ex.text)
}

pub fn ensemble_predict_text(ens: &EnsembleModel, text: &str) -> Result<EnsemblePrediction> {
    let mut shared: Option<(FeatureConfig, SparseVector)> = None;
    let mut preds = Vec::with_capacity(ens.members.len());
    for m in &ens.members {
        let fc = m.model.feature_config;
        if shared.as_ref().map(|(c, _)| *c != fc).unwrap_or(true) {
            shared = Some((fc, featurize(text, &fc)));
        }
        preds.push(m.model.predict_features(&shared.as_ref().unwrap().1));
    }
    aggregate(&mut preds)
}
