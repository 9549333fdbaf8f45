//! Hashed n-gram linear regressor, its trainer and file format.

mod features;
mod io;
mod schedule;
mod train;

use crate::corpus::Example;

pub use features::{featurize, FeatureConfig, NgramRange, SparseVector, FNV_OFFSET_BASIS};
pub(crate) use io::sha256_hex;
pub use io::{load_model, save_model, FORMAT_VERSION, MAGIC};
pub use schedule::{lr_at, warmup_steps};
pub use train::{mse_gradient, mse_loss, train, train_features, Gradient, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_config: FeatureConfig,
    pub train_config_fingerprint: u64,
}

impl RegressionModel {
    /// All-zero weights with the given bias.
    pub fn constant(bias: f64, feature_config: FeatureConfig) -> Self {
        RegressionModel {
            weights: vec![0.0; feature_config.dim],
            bias,
            feature_config,
            train_config_fingerprint: 0,
        }
    }

    /// `weights · x + bias`, unclamped.
    pub fn predict_features(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict(&self, text: &str) -> f64 {
        self.predict_features(&featurize(text, &self.feature_config))
    }

    pub fn predict_example(&self, ex: &Example) -> f64 {
        self.predict(&ex.text)
    }
}
