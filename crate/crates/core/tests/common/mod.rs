#![allow(dead_code)]

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selftrain::corpus::{write_dataset, Format};
use selftrain::model::{mse_gradient, mse_loss, FeatureConfig, RegressionModel, SparseVector};
use selftrain::synth::{SyntheticConfig, SyntheticTask};

/// Largest relative error between the analytic MSE gradient and central
/// differences, over every weight and the bias, for a random dim-16 model
/// and five random sparse examples.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fc = FeatureConfig {
        dim: 16,
        ..Default::default()
    };
    let mut model = RegressionModel::constant(rng.random_range(1.0..5.0), fc);
    for w in &mut model.weights {
        *w = rng.random_range(-1.0..1.0);
    }
    let xs: Vec<SparseVector> = (0..5)
        .map(|_| {
            let mut idx: Vec<u32> = (0..16).filter(|_| rng.random_bool(0.5)).collect();
            if idx.is_empty() {
                idx.push(rng.random_range(0..16));
            }
            let values = idx.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
            SparseVector {
                indices: idx,
                values,
            }
        })
        .collect();
    let batch: Vec<(&SparseVector, f64)> =
        xs.iter().map(|x| (x, rng.random_range(1.0..5.0))).collect();

    let analytic = mse_gradient(&model, &batch);
    let mut dense = [0.0; 16];
    for &(i, g) in &analytic.weights {
        dense[i as usize] = g;
    }

    // the loss is quadratic in each coordinate, so central differences carry
    // no truncation error and a moderate step keeps round-off small
    let h = 1e-3;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
    let mut worst: f64 = 0.0;
    for (i, &grad) in dense.iter().enumerate() {
        let orig = model.weights[i];
        model.weights[i] = orig + h;
        let up = mse_loss(&model, &batch);
        model.weights[i] = orig - h;
        let down = mse_loss(&model, &batch);
        model.weights[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        // unused buckets: both sides must be (numerically) zero
        if grad == 0.0 && numeric.abs() < 1e-9 {
            continue;
        }
        worst = worst.max(rel(grad, numeric));
    }
    let orig = model.bias;
    model.bias = orig + h;
    let up = mse_loss(&model, &batch);
    model.bias = orig - h;
    let down = mse_loss(&model, &batch);
    model.bias = orig;
    worst.max(rel(analytic.bias, (up - down) / (2.0 * h)))
}

/// Writes a synthetic train/unlabeled/test triple plus a pipeline config
/// into `dir` and returns the config path.
pub fn write_synthetic(
    dir: &Path,
    n_train: usize,
    n_unlabeled: usize,
    n_test: usize,
    extra: &str,
) -> std::path::PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let task = SyntheticTask::new(SyntheticConfig::default());
    write_dataset(
        &task.labeled(n_train, "train-", 1),
        &dir.join("train.tsv"),
        Format::Tsv,
        true,
    )
    .unwrap();
    write_dataset(
        &task.unlabeled(n_unlabeled, "pool-", 2),
        &dir.join("unlabeled.tsv"),
        Format::Tsv,
        true,
    )
    .unwrap();
    write_dataset(
        &task.labeled(n_test, "test-", 3),
        &dir.join("test.tsv"),
        Format::Tsv,
        true,
    )
    .unwrap();
    let path = dir.join("pipeline.toml");
    std::fs::write(
        &path,
        format!(
            "train = \"train.tsv\"\nunlabeled = \"unlabeled.tsv\"\ntest = \"test.tsv\"\n{extra}"
        ),
    )
    .unwrap();
    path
}
