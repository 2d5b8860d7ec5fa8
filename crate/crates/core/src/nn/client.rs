//! Per-client state and local training.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{argmax_rows, loss_and_grads, predict_logits, ParamGroup};
use super::optim::{Adam, AdamConfig, SgdMomentum};
use super::params::{ExtractorParams, HeadParams};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed;

const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimSettings {
    pub adam: AdamConfig,
    pub sgd_lr: f64,
    pub momentum: f64,
}

impl OptimSettings {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            adam: AdamConfig::with_lr(lr),
            sgd_lr: lr,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// The client's persistent Adam states.
    Adam,
    /// The client's heavy-ball SGD buffers.
    Sgd,
}

/// One block of local epochs over the client's training shard.
#[derive(Debug, Clone, Copy)]
pub struct TrainPlan {
    pub group: ParamGroup,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Root of the per-epoch shuffle seeds.
    pub order_seed: u64,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub extractor: ExtractorParams,
    pub head: HeadParams,
    pub adam_head: Adam,
    pub adam_extractor: Adam,
    pub sgd_head: SgdMomentum,
    pub sgd_extractor: SgdMomentum,
    /// Indices of the local training samples in the shared dataset.
    pub train_indices: Vec<usize>,
    /// Training accuracy recorded after the last local update, in `[0, 1]`.
    pub last_train_accuracy: f64,
}

impl ClientState {
    pub fn new(
        client_id: usize,
        extractor: ExtractorParams,
        head: HeadParams,
        train_indices: Vec<usize>,
        optim: OptimSettings,
    ) -> Self {
        let (pe, q) = (extractor.len(), head.len());
        Self {
            client_id,
            extractor,
            head,
            adam_head: Adam::new(q, optim.adam),
            adam_extractor: Adam::new(pe, optim.adam),
            sgd_head: SgdMomentum::new(q, optim.sgd_lr, optim.momentum),
            sgd_extractor: SgdMomentum::new(pe, optim.sgd_lr, optim.momentum),
            train_indices,
            last_train_accuracy: 0.0,
        }
    }

    pub fn n_train(&self) -> usize {
        self.train_indices.len()
    }

    /// Mini-batches per epoch at the given batch size.
    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.n_train().div_ceil(batch_size)
    }

    /// Runs `plan.epochs` passes over the shard, reshuffled every epoch.
    /// Returns the mean mini-batch loss of the final epoch (0 for an empty shard).
    pub fn train(&mut self, data: &LabeledDataset, plan: &TrainPlan) -> Result<f64> {
        if plan.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let mut last_loss = 0.0;
        let mut order = self.train_indices.clone();
        for epoch in 0..plan.epochs {
            order.copy_from_slice(&self.train_indices);
            order.shuffle(&mut seed::rng(seed::derive(plan.order_seed, &[epoch as u64])));
            let mut total = 0.0;
            let mut batches = 0;
            for batch in order.chunks(plan.batch_size) {
                let (x, y) = data.gather(batch);
                let (loss, grads) = loss_and_grads(&self.extractor, &self.head, x.view(), &y, plan.group)?;
                self.apply(plan.optimizer, grads.extractor.as_deref(), grads.head.as_deref());
                total += loss;
                batches += 1;
            }
            if batches > 0 {
                last_loss = total / batches as f64;
            }
        }
        Ok(last_loss)
    }

    fn apply(&mut self, kind: OptimizerKind, extractor: Option<&[f64]>, head: Option<&[f64]>) {
        match kind {
            OptimizerKind::Adam => {
                if let Some(g) = extractor {
                    self.adam_extractor.step(self.extractor.as_mut_slice(), g);
                }
                if let Some(g) = head {
                    self.adam_head.step(self.head.as_mut_slice(), g);
                }
            }
            OptimizerKind::Sgd => {
                if let Some(g) = extractor {
                    self.sgd_extractor.step(self.extractor.as_mut_slice(), g);
                }
                if let Some(g) = head {
                    self.sgd_head.step(self.head.as_mut_slice(), g);
                }
            }
        }
    }

    pub fn reset_sgd(&mut self) {
        self.sgd_head.reset();
        self.sgd_extractor.reset();
    }

    /// Head adaptation with the extractor frozen, then extractor training with
    /// the head frozen, both through the persistent Adam states. Records the
    /// training accuracy afterwards; an empty shard is a no-op with accuracy 0.
    pub fn local_train_two_phase(
        &mut self,
        data: &LabeledDataset,
        head_epochs: usize,
        extractor_epochs: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<()> {
        self.two_phase(data, head_epochs, extractor_epochs, batch_size, seed, OptimizerKind::Adam)
    }

    pub(crate) fn two_phase(
        &mut self,
        data: &LabeledDataset,
        head_epochs: usize,
        extractor_epochs: usize,
        batch_size: usize,
        seed: u64,
        optimizer: OptimizerKind,
    ) -> Result<()> {
        if self.train_indices.is_empty() {
            self.last_train_accuracy = 0.0;
            return Ok(());
        }
        self.train(
            data,
            &TrainPlan {
                group: ParamGroup::Head,
                optimizer,
                epochs: head_epochs,
                batch_size,
                order_seed: seed::derive(seed, &[1]),
            },
        )?;
        self.train(
            data,
            &TrainPlan {
                group: ParamGroup::Extractor,
                optimizer,
                epochs: extractor_epochs,
                batch_size,
                order_seed: seed::derive(seed, &[2]),
            },
        )?;
        self.record_train_accuracy(data)
    }

    pub fn record_train_accuracy(&mut self, data: &LabeledDataset) -> Result<()> {
        self.last_train_accuracy = if self.train_indices.is_empty() {
            0.0
        } else {
            self.evaluate(data, &self.train_indices)?
        };
        Ok(())
    }

    /// Top-1 accuracy on the given samples.
    pub fn evaluate(&self, data: &LabeledDataset, indices: &[usize]) -> Result<f64> {
        evaluate(&self.extractor, &self.head, data, indices)
    }

    /// Mean cross-entropy of the current model over the training shard.
    pub fn train_loss(&self, data: &LabeledDataset) -> Result<f64> {
        if self.train_indices.is_empty() {
            return Err(Error::Undefined("loss of an empty shard".into()));
        }
        let (x, y) = data.gather(&self.train_indices);
        let logits = predict_logits(&self.extractor, &self.head, x.view())?;
        Ok(super::model::softmax_cross_entropy(&logits, &y).0)
    }
}

/// Top-1 accuracy of a model on `indices`; undefined for an empty subset.
pub fn evaluate(
    extractor: &ExtractorParams,
    head: &HeadParams,
    data: &LabeledDataset,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Undefined("accuracy of an empty subset".into()));
    }
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = data.gather(chunk);
        let logits = predict_logits(extractor, head, x.view())?;
        correct += argmax_rows(&logits)
            .iter()
            .zip(&y)
            .filter(|(p, t)| p == t)
            .count();
    }
    Ok(correct as f64 / indices.len() as f64)
}
