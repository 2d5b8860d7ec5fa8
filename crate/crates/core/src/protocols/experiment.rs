//! End-to-end runs: split, partition, train and evaluate.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ProtocolConfig;
use super::engine::Federation;
use crate::data::{partition, LabeledDataset, PartitionScheme, PartitionSpec};
use crate::error::{Error, Result};
use crate::metrics::RoundRecord;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// A held-out slice of the whole dataset, dealt IID across clients.
    /// Partitions are drawn from the remaining samples.
    GlobalHoldout,
    /// Each client's own shard is split into local training and test parts.
    LocalSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::GlobalHoldout,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<RoundRecord>,
    /// Final per-client accuracies; the initial models' accuracies when no round ran.
    pub final_accuracies: Vec<f64>,
    pub federation: Federation,
}

/// Builds the federation for a run without training it.
pub fn prepare_federation(
    dataset: &LabeledDataset,
    partition_spec: &PartitionSpec,
    config: &ProtocolConfig,
    eval: &EvalConfig,
    scenario: &str,
) -> Result<Federation> {
    if partition_spec.n_clients != config.n_clients {
        return Err(Error::Consistency(format!(
            "partition has {} clients but the protocol expects {}",
            partition_spec.n_clients, config.n_clients
        )));
    }
    let (train, test, shards, eval_sets) = match eval.mode {
        EvalMode::GlobalHoldout => {
            let (train_idx, test_idx) = dataset.holdout_split(eval.test_fraction, eval.seed)?;
            let train = dataset.subset(&train_idx, format!("{}-train", dataset.name));
            let test = dataset.subset(&test_idx, format!("{}-test", dataset.name));
            let shards: Vec<Vec<usize>> = partition(&train, partition_spec)?.into_iter().map(|s| s.indices).collect();
            let eval_spec = PartitionSpec {
                scheme: PartitionScheme::Iid,
                n_clients: config.n_clients,
                seed: seed::derive(eval.seed, &[1]),
            };
            let eval_sets = if test.is_empty() {
                vec![Vec::new(); config.n_clients]
            } else {
                partition(&test, &eval_spec)?.into_iter().map(|s| s.indices).collect()
            };
            let (train, test) = (Arc::new(train), Arc::new(test));
            (train, test, shards, eval_sets)
        }
        EvalMode::LocalSplit => {
            let all = Arc::new(dataset.clone());
            let (shards, eval_sets) = partition(dataset, partition_spec)?
                .iter()
                .map(|s| s.local_split(eval.test_fraction, eval.seed))
                .unzip();
            (all.clone(), all, shards, eval_sets)
        }
    };
    Federation::new(config.clone(), scenario, train, test, shards, eval_sets)
}

/// Partitions the data, trains for the configured rounds and evaluates every
/// client after each round.
pub fn run_experiment(
    dataset: &LabeledDataset,
    partition_spec: &PartitionSpec,
    config: &ProtocolConfig,
    eval: &EvalConfig,
    scenario: &str,
) -> Result<ExperimentOutcome> {
    let mut federation = prepare_federation(dataset, partition_spec, config, eval, scenario)?;
    let records = federation.run()?;
    let final_accuracies = match records.last() {
        Some(r) => r.accuracies.clone(),
        None => federation.evaluate()?,
    };
    Ok(ExperimentOutcome {
        records,
        final_accuracies,
        federation,
    })
}
