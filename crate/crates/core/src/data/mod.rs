//! Labelled datasets, loaders, and client partitioning.

mod io;
mod partition;
mod synth;

pub use io::{load_cifar10_batch, load_digits_csv, load_idx};
pub use partition::{partition, LabelSkewMix, PartitionScheme, PartitionSpec, Shard};
pub use synth::synth_blobs;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Feature matrix in `[0, 1]`, one row per sample, with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Consistency(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if features.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Consistency("feature values must lie in [0, 1]".into()));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Gathers the rows at `indices` into a contiguous matrix.
    pub fn gather(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let x = self.features.select(Axis(0), indices);
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    /// Materializes a new dataset from a subset of rows.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> LabeledDataset {
        let (features, labels) = self.gather(indices);
        LabeledDataset {
            features,
            labels,
            n_classes: self.n_classes,
            name: name.into(),
        }
    }

    /// Seeded shuffle of all indices, split into a training part and a held-out
    /// part holding `round(test_fraction * n)` samples.
    pub fn holdout_split(&self, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Domain(format!(
                "test fraction {test_fraction} outside [0, 1)"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut seed::rng(seed));
        let n_test = (test_fraction * self.len() as f64).round() as usize;
        let test = idx.split_off(self.len() - n_test);
        Ok((idx, test))
    }
}

/// Class-proportion vector of a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHistogram {
    pub proportions: Vec<f64>,
    /// Set when the sample set was empty; `proportions` is then all zeros.
    pub empty: bool,
}

impl ClassHistogram {
    pub fn l1_distance(&self, other: &ClassHistogram) -> f64 {
        self.proportions
            .iter()
            .zip(&other.proportions)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

pub fn class_histogram(indices: &[usize], dataset: &LabeledDataset) -> ClassHistogram {
    let mut counts = vec![0usize; dataset.n_classes];
    for &i in indices {
        counts[dataset.labels[i]] += 1;
    }
    histogram_from_counts(&counts)
}

pub(crate) fn histogram_from_counts(counts: &[usize]) -> ClassHistogram {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return ClassHistogram {
            proportions: vec![0.0; counts.len()],
            empty: true,
        };
    }
    ClassHistogram {
        proportions: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        empty: false,
    }
}
