//! Mini-batch SGD on mean squared error.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, FeatureConfig, SparseVector};
use super::schedule::lr_at;
use super::RegressionModel;
use crate::corpus::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub decay_power: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults for the hashed linear model.
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 32,
            peak_lr: 0.1,
            warmup_fraction: 0.06,
            decay_power: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The transformer fine-tuning hyperparameters: batch 32, three epochs,
    /// peak rate 1e-5, 6% warmup. Far too small a rate for a linear model.
    pub fn paper_preset() -> Self {
        TrainConfig {
            peak_lr: 1e-5,
            ..TrainConfig::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config(format!(
                "peak_lr {} must be finite and >= 0",
                self.peak_lr
            )));
        }
        if !(self.warmup_fraction >= 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::Config(format!(
                "warmup_fraction {} must lie in [0, 1)",
                self.warmup_fraction
            )));
        }
        if !(self.decay_power > 0.0 && self.decay_power.is_finite()) {
            return Err(Error::Config(format!(
                "decay_power {} must be positive",
                self.decay_power
            )));
        }
        Ok(())
    }

    /// Stable 64-bit digest of every field, recorded in trained models.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(48);
        bytes.extend_from_slice(&(self.epochs as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.batch_size as u64).to_le_bytes());
        bytes.extend_from_slice(&self.peak_lr.to_le_bytes());
        bytes.extend_from_slice(&self.warmup_fraction.to_le_bytes());
        bytes.extend_from_slice(&self.decay_power.to_le_bytes());
        bytes.extend_from_slice(&self.seed.to_le_bytes());
        super::io::fnv1a(&bytes)
    }
}

/// Gradient of the batch MSE, `mean((w·x + b - y)^2)`.
///
/// Weight entries are sparse and sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<(u32, f64)>,
    pub bias: f64,
    pub loss: f64,
}

pub fn mse_gradient(model: &RegressionModel, batch: &[(&SparseVector, f64)]) -> Gradient {
    let scale = 2.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut bias = 0.0;
    let mut contributions: Vec<(u32, f64)> = Vec::new();
    for (x, y) in batch {
        let residual = model.predict_features(x) - y;
        loss += residual * residual;
        bias += scale * residual;
        for (&i, &v) in x.indices.iter().zip(&x.values) {
            contributions.push((i, scale * residual * v));
        }
    }
    // stable sort keeps batch order within an index, so sums are reproducible
    contributions.sort_by_key(|c| c.0);
    let mut weights: Vec<(u32, f64)> = Vec::with_capacity(contributions.len());
    for (i, g) in contributions {
        match weights.last_mut() {
            Some(last) if last.0 == i => last.1 += g,
            _ => weights.push((i, g)),
        }
    }
    Gradient {
        weights,
        bias,
        loss: loss / batch.len() as f64,
    }
}

pub fn mse_loss(model: &RegressionModel, batch: &[(&SparseVector, f64)]) -> f64 {
    batch
        .iter()
        .map(|(x, y)| {
            let r = model.predict_features(x) - y;
            r * r
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Featurizes and trains. Every example must carry a score.
pub fn train(
    train_set: &Dataset,
    cfg: &TrainConfig,
    fcfg: &FeatureConfig,
) -> Result<RegressionModel> {
    let mut features = Vec::with_capacity(train_set.len());
    let mut targets = Vec::with_capacity(train_set.len());
    for ex in train_set {
        let y = ex.score.ok_or_else(|| Error::InvalidExample {
            id: ex.id.clone(),
            message: "training example has no score".into(),
        })?;
        features.push(featurize(&ex.text, fcfg));
        targets.push(y);
    }
    let refs: Vec<&SparseVector> = features.iter().collect();
    train_features(&refs, &targets, cfg, fcfg)
}

/// Trains on precomputed feature vectors.
///
/// Weights start at zero and the bias at the mean target. Each epoch
/// reshuffles the example order with a generator seeded once from `cfg.seed`;
/// step `t` (counting from zero across epochs) uses `lr_at(t, total)`.
pub fn train_features(
    features: &[&SparseVector],
    targets: &[f64],
    cfg: &TrainConfig,
    fcfg: &FeatureConfig,
) -> Result<RegressionModel> {
    cfg.validate()?;
    fcfg.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    assert_eq!(features.len(), targets.len());

    let n = features.len();
    let mut model = RegressionModel {
        weights: vec![0.0; fcfg.dim],
        bias: targets.iter().sum::<f64>() / n as f64,
        feature_config: *fcfg,
        train_config_fingerprint: cfg.fingerprint(),
    };

    let total_steps = cfg.epochs * n.div_ceil(cfg.batch_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch: Vec<(&SparseVector, f64)> = Vec::with_capacity(cfg.batch_size);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| (features[i], targets[i])));
            let grad = mse_gradient(&model, &batch);
            if !grad.loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    loss: grad.loss,
                });
            }
            let lr = lr_at(step, total_steps, cfg);
            for (i, g) in grad.weights {
                model.weights[i as usize] -= lr * g;
            }
            model.bias -= lr * grad.bias;
            step += 1;
        }
    }
    if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Diverged {
            step,
            loss: f64::NAN,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;
    use crate::model::NgramRange;

    fn small_features() -> FeatureConfig {
        FeatureConfig {
            dim: 1 << 10,
            word_ngrams: NgramRange::new(1, 1),
            char_ngrams: NgramRange::new(3, 3),
            ..Default::default()
        }
    }

    fn texts() -> Vec<&'static str> {
        vec![
            "so happy to see you again",
            "worst day ever honestly",
            "my dog is asleep",
            "missing home tonight",
            "new phone who dis",
            "love you all so much",
            "traffic is terrible",
            "cannot sleep again",
            "coffee first then talk",
            "thank you for being here",
        ]
    }

    #[test]
    fn empty_set_rejected() {
        let r = train(
            &Dataset::default(),
            &TrainConfig::default(),
            &small_features(),
        );
        assert!(matches!(r, Err(Error::EmptyDataset)));
    }

    #[test]
    fn constant_target_is_fit() {
        let exs = texts()
            .iter()
            .enumerate()
            .map(|(i, t)| Example::gold(i.to_string(), "en", Some(3.7), *t))
            .collect();
        let ds = Dataset::new(exs).unwrap();
        let m = train(&ds, &TrainConfig::default(), &small_features()).unwrap();
        for ex in &ds {
            assert!((m.predict(&ex.text) - 3.7).abs() < 1e-9);
        }
    }

    #[test]
    fn seeds_shuffle_differently() {
        let exs = texts()
            .iter()
            .enumerate()
            .map(|(i, t)| Example::gold(i.to_string(), "en", Some(1.0 + (i % 5) as f64), *t))
            .collect();
        let ds = Dataset::new(exs).unwrap();
        let cfg = TrainConfig {
            batch_size: 2,
            peak_lr: 0.01,
            ..Default::default()
        };
        let a = train(&ds, &cfg.with_seed(1), &small_features()).unwrap();
        let b = train(&ds, &cfg.with_seed(2), &small_features()).unwrap();
        let a2 = train(&ds, &cfg.with_seed(1), &small_features()).unwrap();
        assert_ne!(a.to_bytes(), b.to_bytes());
        assert_eq!(a.to_bytes(), a2.to_bytes());
    }

    #[test]
    fn huge_rate_diverges() {
        let exs = texts()
            .iter()
            .enumerate()
            .map(|(i, t)| Example::gold(i.to_string(), "en", Some(1.0 + (i % 5) as f64), *t))
            .collect();
        let ds = Dataset::new(exs).unwrap();
        let cfg = TrainConfig {
            peak_lr: 1e6,
            epochs: 50,
            batch_size: 1,
            ..Default::default()
        };
        assert!(matches!(
            train(&ds, &cfg, &small_features()),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn unscored_example_rejected() {
        let ds = Dataset::new(vec![Example::gold("a", "en", None, "text")]).unwrap();
        assert!(train(&ds, &TrainConfig::default(), &small_features()).is_err());
    }
}
