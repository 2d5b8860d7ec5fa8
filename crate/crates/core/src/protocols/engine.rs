//! Round engines for the six protocols.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Method, ProtocolConfig};
use super::ledger::{Endpoint, HeadAudit, Stage, TransmissionLedger};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::{gini, RoundRecord};
use crate::nn::{init_model, ClientState, ModelDims, OptimSettings, OptimizerKind, ParamGroup, TrainPlan};
use crate::ring::{
    blend_into, calibrated_retention, gate_and_interpolate, two_opt, BlendWeights, GammaSchedule, RingOrder,
};
use crate::seed;

const STAGE_FULL: u64 = 0;
const STAGE_TWO_PHASE: u64 = 1;

/// A pool of clients driven through communication rounds by one protocol.
#[derive(Debug, Clone)]
pub struct Federation {
    pub config: ProtocolConfig,
    pub scenario: String,
    pub dims: ModelDims,
    pub clients: Vec<ClientState>,
    /// Per-client evaluation indices into `eval_data`.
    pub eval_sets: Vec<Vec<usize>>,
    /// Ring used by gossip protocols: 2-opt for FibFL++, identity otherwise.
    pub ring: RingOrder,
    pub ledger: TransmissionLedger,
    pub audit: HeadAudit,
    train_data: Arc<LabeledDataset>,
    eval_data: Arc<LabeledDataset>,
    round: usize,
    started: Instant,
}

impl Federation {
    /// Builds the pool. Every client starts from the same initial model.
    pub fn new(
        config: ProtocolConfig,
        scenario: impl Into<String>,
        train_data: Arc<LabeledDataset>,
        eval_data: Arc<LabeledDataset>,
        train_shards: Vec<Vec<usize>>,
        eval_sets: Vec<Vec<usize>>,
    ) -> Result<Self> {
        config.validate()?;
        if train_shards.len() != config.n_clients || eval_sets.len() != config.n_clients {
            return Err(Error::Consistency(format!(
                "{} clients configured but {} training shards and {} evaluation sets given",
                config.n_clients,
                train_shards.len(),
                eval_sets.len()
            )));
        }
        if train_data.n_classes != eval_data.n_classes || train_data.dim() != eval_data.dim() {
            return Err(Error::Consistency("training and evaluation data disagree on shape".into()));
        }
        let dims = config.model_dims(train_data.dim(), train_data.n_classes);
        let (extractor, head) = init_model(dims, config.init_seed)?;
        let optim = OptimSettings {
            momentum: config.momentum,
            ..OptimSettings::with_lr(config.lr)
        };
        let histograms: Vec<Vec<f64>> = train_shards
            .iter()
            .map(|s| crate::data::class_histogram(s, &train_data).proportions)
            .collect();
        let ring = match config.method {
            Method::FibFlPlusPlus => two_opt(&histograms),
            _ => RingOrder::identity(&histograms),
        };
        let clients = train_shards
            .into_iter()
            .enumerate()
            .map(|(i, shard)| ClientState::new(i, extractor.clone(), head.clone(), shard, optim))
            .collect();
        Ok(Self {
            config,
            scenario: scenario.into(),
            dims,
            clients,
            eval_sets,
            ring,
            ledger: TransmissionLedger::default(),
            audit: HeadAudit::default(),
            train_data,
            eval_data,
            round: 0,
            started: Instant::now(),
        })
    }

    /// Number of completed rounds.
    pub fn rounds_done(&self) -> usize {
        self.round
    }

    pub fn train_data(&self) -> &LabeledDataset {
        &self.train_data
    }

    pub fn eval_data(&self) -> &LabeledDataset {
        &self.eval_data
    }

    pub fn head_fingerprints(&self) -> Vec<u64> {
        self.clients.iter().map(|c| c.head.fingerprint()).collect()
    }

    /// Runs all remaining configured rounds.
    pub fn run(&mut self) -> Result<Vec<RoundRecord>> {
        let mut out = Vec::with_capacity(self.config.rounds.saturating_sub(self.round));
        while self.round < self.config.rounds {
            out.push(self.step()?);
        }
        Ok(out)
    }

    /// Executes one communication round and evaluates every client.
    pub fn step(&mut self) -> Result<RoundRecord> {
        let r = self.round + 1;
        let cfg = self.config.clone();
        let before = self.head_fingerprints();
        let gamma_r = match cfg.method {
            Method::FedAvg => {
                self.full_training(r, cfg.baseline_optimizer, cfg.local_epochs)?;
                self.audit_training(r, &before);
                self.central_average(r, true)?;
                None
            }
            Method::FedRep => {
                self.two_phase_training(r, cfg.baseline_optimizer)?;
                self.audit_training(r, &before);
                self.central_average(r, false)?;
                None
            }
            Method::Rdfl => {
                self.full_training(r, cfg.baseline_optimizer, cfg.local_epochs)?;
                self.audit_training(r, &before);
                let w = BlendWeights::Fixed { left: 0.5, right: 0.5 };
                self.gossip(r, &[w].repeat(cfg.n_clients), cfg.gamma, true, false)?;
                Some(cfg.gamma)
            }
            Method::FibFl => {
                self.two_phase_training(r, OptimizerKind::Adam)?;
                self.audit_training(r, &before);
                self.gossip(r, &[BlendWeights::Fibonacci].repeat(cfg.n_clients), cfg.gamma, false, false)?;
                Some(cfg.gamma)
            }
            Method::FibFlPlus => {
                self.two_phase_training(r, OptimizerKind::Adam)?;
                self.audit_training(r, &before);
                let w = self.gated_weights();
                self.gossip(r, &w, cfg.gamma, false, true)?;
                Some(cfg.gamma)
            }
            Method::FibFlPlusPlus if r <= cfg.warmup_rounds() => {
                let epochs = cfg.head_epochs.max(cfg.extractor_epochs);
                self.full_training(r, OptimizerKind::Adam, epochs)?;
                self.audit_training(r, &before);
                self.central_average(r, true)?;
                None
            }
            Method::FibFlPlusPlus => {
                let schedule = GammaSchedule {
                    start: cfg.gamma_start,
                    end: cfg.gamma_end,
                    warmup: cfg.warmup_rounds(),
                    rounds: cfg.rounds,
                };
                let gamma_r = schedule.gamma_at(r)?;
                let passes = cfg.gossip_passes();
                let gamma_in = calibrated_retention(gamma_r, passes)?;
                self.two_phase_training(r, OptimizerKind::Adam)?;
                self.audit_training(r, &before);
                let w = self.gated_weights();
                for k in 0..passes {
                    self.gossip(r, &w, gamma_in, false, k == 0)?;
                }
                Some(gamma_r)
            }
        };
        self.round = r;
        let accuracies = self.evaluate()?;
        let mean_accuracy = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        Ok(RoundRecord {
            round: r,
            method: cfg.method.as_str().to_string(),
            scenario: self.scenario.clone(),
            gini: gini(&accuracies),
            accuracies,
            mean_accuracy,
            gamma_r,
            params_tx: self.ledger.params_in_round(r),
            head_tx_count: self.ledger.head_transmissions_in_round(r),
            elapsed_secs: self.started.elapsed().as_secs_f64(),
        })
    }

    /// Accuracy of every client on its evaluation set; an empty set scores 0.
    pub fn evaluate(&self) -> Result<Vec<f64>> {
        let eval = |(c, idx): (&ClientState, &Vec<usize>)| -> Result<f64> {
            if idx.is_empty() {
                Ok(0.0)
            } else {
                c.evaluate(&self.eval_data, idx)
            }
        };
        if self.config.parallel {
            self.clients.par_iter().zip(self.eval_sets.par_iter()).map(eval).collect()
        } else {
            self.clients.iter().zip(&self.eval_sets).map(eval).collect()
        }
    }

    fn for_each_client<F>(&mut self, f: F) -> Result<()>
    where
        F: Fn(&mut ClientState, &LabeledDataset) -> Result<()> + Sync,
    {
        let data = &*self.train_data;
        if self.config.parallel {
            self.clients.par_iter_mut().try_for_each(|c| f(c, data))
        } else {
            self.clients.iter_mut().try_for_each(|c| f(c, data))
        }
    }

    fn audit_training(&mut self, r: usize, before: &[u64]) {
        let after = self.head_fingerprints();
        self.audit.compare(r, Stage::LocalTraining, before, &after);
    }

    /// Full-model local epochs. SGD velocity starts from zero every round.
    fn full_training(&mut self, r: usize, optimizer: OptimizerKind, epochs: usize) -> Result<()> {
        let (root, batch_size) = (self.config.seed, self.config.batch_size);
        self.for_each_client(|c, data| {
            if optimizer == OptimizerKind::Sgd {
                c.reset_sgd();
            }
            let plan = TrainPlan {
                group: ParamGroup::Both,
                optimizer,
                epochs,
                batch_size,
                order_seed: seed::derive(root, &[r as u64, c.client_id as u64, STAGE_FULL]),
            };
            c.train(data, &plan)?;
            Ok(())
        })
    }

    /// Head epochs then extractor epochs, recording training accuracy.
    fn two_phase_training(&mut self, r: usize, optimizer: OptimizerKind) -> Result<()> {
        let cfg = &self.config;
        let (root, batch, eh, ee) = (cfg.seed, cfg.batch_size, cfg.head_epochs, cfg.extractor_epochs);
        self.for_each_client(|c, data| {
            if optimizer == OptimizerKind::Sgd {
                c.reset_sgd();
            }
            let s = seed::derive(root, &[r as u64, c.client_id as u64, STAGE_TWO_PHASE]);
            c.two_phase(data, eh, ee, batch, s, optimizer)
        })
    }

    /// Size-weighted server average of the extractor, and of the head when
    /// `include_head` is set, broadcast back to every client.
    fn central_average(&mut self, r: usize, include_head: bool) -> Result<()> {
        let total: usize = self.clients.iter().map(|c| c.n_train()).sum();
        if total == 0 {
            return Err(Error::Consistency("no client holds training data".into()));
        }
        let before = self.head_fingerprints();
        let weights: Vec<f64> = self.clients.iter().map(|c| c.n_train() as f64 / total as f64).collect();
        let mut ext = vec![0.0; self.dims.extractor_len()];
        let mut head = vec![0.0; self.dims.head_len()];
        for (c, &w) in self.clients.iter().zip(&weights) {
            axpy(&mut ext, w, c.extractor.as_slice());
            if include_head {
                axpy(&mut head, w, c.head.as_slice());
            }
        }
        let count = self.dims.extractor_len() + if include_head { self.dims.head_len() } else { 0 };
        for c in &mut self.clients {
            c.extractor.set_flat(&ext)?;
            if include_head {
                c.head.set_flat(&head)?;
            }
            let id = Endpoint::Client(c.client_id);
            self.ledger.record(r, id, Endpoint::Server, count, 0, include_head);
            self.ledger.record(r, Endpoint::Server, id, count, 0, include_head);
        }
        let after = self.head_fingerprints();
        self.audit.compare(r, Stage::Aggregation, &before, &after);
        Ok(())
    }

    /// Gated neighbour weights for each ring position from the recorded training accuracies.
    fn gated_weights(&self) -> Vec<BlendWeights> {
        let n = self.clients.len();
        let gate = self.config.gate();
        let sigma = &self.ring.sigma;
        (0..n)
            .map(|p| {
                let left = sigma[(p + n - 1) % n];
                let right = sigma[(p + 1) % n];
                BlendWeights::Gated(gate_and_interpolate(
                    self.clients[left].last_train_accuracy,
                    self.clients[right].last_train_accuracy,
                    gate,
                ))
            })
            .collect()
    }

    /// One synchronous ring pass: every position blends against the
    /// pass-start snapshot and all writes land together. `weights[p]` applies
    /// to ring position `p`.
    fn gossip(
        &mut self,
        r: usize,
        weights: &[BlendWeights],
        gamma: f64,
        include_head: bool,
        with_accuracy: bool,
    ) -> Result<()> {
        let n = self.clients.len();
        let before = self.head_fingerprints();
        let ext_snap: Vec<Vec<f64>> = self.clients.iter().map(|c| c.extractor.flatten()).collect();
        let head_snap: Vec<Vec<f64>> = if include_head {
            self.clients.iter().map(|c| c.head.as_slice().to_vec()).collect()
        } else {
            Vec::new()
        };
        let sigma = self.ring.sigma.clone();
        for p in 0..n {
            let (i, l, rt) = (sigma[p], sigma[(p + n - 1) % n], sigma[(p + 1) % n]);
            let c = &mut self.clients[i];
            blend_into(c.extractor.as_mut_slice(), &ext_snap[i], &ext_snap[l], &ext_snap[rt], weights[p], gamma)?;
            if include_head {
                blend_into(c.head.as_mut_slice(), &head_snap[i], &head_snap[l], &head_snap[rt], weights[p], gamma)?;
            }
        }
        let count = self.dims.extractor_len() + if include_head { self.dims.head_len() } else { 0 };
        let scalars = usize::from(with_accuracy);
        for p in 0..n {
            let (i, l, rt) = (sigma[p], sigma[(p + n - 1) % n], sigma[(p + 1) % n]);
            for to in [l, rt] {
                self.ledger
                    .record(r, Endpoint::Client(i), Endpoint::Client(to), count, scalars, include_head);
            }
        }
        let after = self.head_fingerprints();
        self.audit.compare(r, Stage::Gossip, &before, &after);
        Ok(())
    }
}

fn axpy(acc: &mut [f64], w: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += w * v;
    }
}
