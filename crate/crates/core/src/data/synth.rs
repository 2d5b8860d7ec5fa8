use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed;

/// Gaussian blobs in `[0, 1]^d`, one per class. Sample `i` belongs to class
/// `i mod C`, so class sizes differ by at most one.
pub fn synth_blobs(
    n_samples: usize,
    d: usize,
    n_classes: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_classes == 0 || n_samples < n_classes {
        return Err(Error::Domain(format!(
            "need at least one sample per class ({n_samples} samples, {n_classes} classes)"
        )));
    }
    if d == 0 {
        return Err(Error::Domain("feature dimension must be positive".into()));
    }
    if !(spread > 0.0) {
        return Err(Error::Domain(format!("spread must be positive, got {spread}")));
    }
    let mut centers_rng = seed::rng(seed::derive(seed, &[0]));
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..d).map(|_| centers_rng.gen_range(0.2..0.8)).collect())
        .collect();

    let mut noise_rng = seed::rng(seed::derive(seed, &[1]));
    let mut features = Array2::zeros((n_samples, d));
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let c = i % n_classes;
        labels.push(c);
        for j in 0..d {
            let z: f64 = noise_rng.sample(StandardNormal);
            features[[i, j]] = (centers[c][j] + spread * z).clamp(0.0, 1.0);
        }
    }
    LabeledDataset::new(format!("blobs{n_classes}x{d}"), features, labels, n_classes)
}
