use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelDims, OptimizerKind, EMBED, HIDDEN};
use crate::ring::GateConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    FedAvg,
    FedRep,
    Rdfl,
    FibFl,
    FibFlPlus,
    FibFlPlusPlus,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::FedAvg,
        Method::FedRep,
        Method::Rdfl,
        Method::FibFl,
        Method::FibFlPlus,
        Method::FibFlPlusPlus,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FedAvg => "FedAvg",
            Method::FedRep => "FedRep",
            Method::Rdfl => "RDFL",
            Method::FibFl => "FibFL",
            Method::FibFlPlus => "FibFL+",
            Method::FibFlPlusPlus => "FibFL++",
        }
    }

    /// Path-safe name for output directories.
    pub fn slug(&self) -> &'static str {
        match self {
            Method::FedAvg => "fedavg",
            Method::FedRep => "fedrep",
            Method::Rdfl => "rdfl",
            Method::FibFl => "fibfl",
            Method::FibFlPlus => "fibfl_plus",
            Method::FibFlPlusPlus => "fibfl_plusplus",
        }
    }

    /// Methods whose classification heads never leave the client after warmup.
    pub fn private_head(&self) -> bool {
        matches!(self, Method::FibFl | Method::FibFlPlus | Method::FibFlPlusPlus | Method::FedRep)
    }

    pub fn is_fib_family(&self) -> bool {
        matches!(self, Method::FibFl | Method::FibFlPlus | Method::FibFlPlusPlus)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().to_ascii_lowercase() == key || m.slug() == key)
            .ok_or_else(|| Error::Validation {
                field: "methods".into(),
                message: format!("unknown method {s:?}"),
            })
    }
}

/// Hyperparameters of one federated run. Defaults follow the reference
/// settings for each method; see [`ProtocolConfig::for_method`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub method: Method,
    pub n_clients: usize,
    pub rounds: usize,
    /// Full-model local epochs for FedAvg and RDFL.
    pub local_epochs: usize,
    pub head_epochs: usize,
    pub extractor_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Optimizer for the FedAvg/FedRep/RDFL local updates.
    pub baseline_optimizer: OptimizerKind,
    /// Static self-retention for RDFL, FibFL and FibFL+.
    pub gamma: f64,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub tau: f64,
    pub epsilon: f64,
    /// Weight on the Fibonacci prior in the gated interpolation.
    pub mix: f64,
    /// Gossip passes per round; `None` means `⌈N/2⌉`.
    pub gossip_passes: Option<usize>,
    /// Warmup rounds; `None` means `⌊R/6⌋`.
    pub warmup: Option<usize>,
    pub batch_size: usize,
    /// Root of the local-training shuffle seeds.
    pub seed: u64,
    /// Seed of the shared initial model.
    pub init_seed: u64,
    /// Fan local training out across threads. Results do not depend on it.
    pub parallel: bool,
    /// Hidden width of the extractor.
    pub hidden: usize,
    /// Embedding width fed to the head.
    pub embed: usize,
}

impl ProtocolConfig {
    pub fn for_method(method: Method, n_clients: usize, rounds: usize) -> Self {
        let (head_epochs, extractor_epochs) = match method {
            Method::FedRep => (2, 2),
            _ => (1, 20),
        };
        Self {
            method,
            n_clients,
            rounds,
            local_epochs: 5,
            head_epochs,
            extractor_epochs,
            lr: 0.01,
            momentum: 0.9,
            baseline_optimizer: OptimizerKind::Sgd,
            gamma: 0.5,
            gamma_start: 0.4,
            gamma_end: 0.05,
            tau: 0.35,
            epsilon: 1e-8,
            mix: 0.5,
            gossip_passes: None,
            warmup: None,
            batch_size: 64,
            seed: 0,
            init_seed: 0,
            parallel: true,
            hidden: HIDDEN,
            embed: EMBED,
        }
    }

    pub fn gossip_passes(&self) -> usize {
        self.gossip_passes.unwrap_or(self.n_clients.div_ceil(2))
    }

    pub fn warmup_rounds(&self) -> usize {
        match self.method {
            Method::FibFlPlusPlus => self.warmup.unwrap_or(self.rounds / 6),
            _ => 0,
        }
    }

    pub fn model_dims(&self, input: usize, classes: usize) -> ModelDims {
        ModelDims {
            input,
            hidden: self.hidden,
            embed: self.embed,
            classes,
        }
    }

    pub fn gate(&self) -> GateConfig {
        GateConfig {
            tau: self.tau,
            epsilon: self.epsilon,
            mix: self.mix,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Validation {
                field: field.into(),
                message,
            })
        };
        if self.n_clients == 0 {
            return bad("n_clients", "must be at least 1".into());
        }
        if self.hidden == 0 || self.embed == 0 {
            return bad("hidden", "layer widths must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("{} is not a positive learning rate", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", format!("{} outside [0, 1)", self.momentum));
        }
        for (field, v) in [("gamma", self.gamma), ("gamma_end", self.gamma_end), ("gamma_start", self.gamma_start)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(field, format!("{v} outside (0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", format!("{} outside [0, 1]", self.tau));
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mix) {
            return bad("mix", format!("{} outside [0, 1]", self.mix));
        }
        if self.gossip_passes == Some(0) {
            return bad("gossip_passes", "must be at least 1".into());
        }
        if self.method == Method::FibFlPlusPlus && self.rounds > 0 && self.warmup_rounds() >= self.rounds {
            return Err(Error::Config(format!(
                "warmup of {} rounds leaves no ring rounds out of {}",
                self.warmup_rounds(),
                self.rounds
            )));
        }
        Ok(())
    }
}
