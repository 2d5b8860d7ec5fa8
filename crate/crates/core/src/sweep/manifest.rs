//! Experiment manifests: which dataset, scenarios and methods to run, and
//! with which hyperparameters.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{LabelSkewMix, PartitionScheme, PartitionSpec};
use crate::error::{Error, Result};
use crate::protocols::{EvalConfig, EvalMode, Method, ProtocolConfig};
use crate::seed::derive_named;

/// Environment variable naming the directory that relative dataset paths are resolved against.
pub const DATA_DIR_ENV: &str = "FIRMA_DATA_DIR";

/// A heterogeneity scenario, written `iid`, `dir<alpha>` or `ls<k>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    Iid,
    Dirichlet(f64),
    LabelSkew(usize),
}

impl Scenario {
    /// The seven reference scenarios.
    pub fn standard() -> Vec<Scenario> {
        vec![
            Scenario::Iid,
            Scenario::Dirichlet(0.8),
            Scenario::Dirichlet(0.5),
            Scenario::Dirichlet(0.1),
            Scenario::LabelSkew(1),
            Scenario::LabelSkew(2),
            Scenario::LabelSkew(3),
        ]
    }

    pub fn scheme(&self, mix: LabelSkewMix) -> PartitionScheme {
        match *self {
            Scenario::Iid => PartitionScheme::Iid,
            Scenario::Dirichlet(alpha) => PartitionScheme::Dirichlet { alpha },
            Scenario::LabelSkew(k_primary) => PartitionScheme::LabelSkew { k_primary, mix },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Iid => f.write_str("iid"),
            Scenario::Dirichlet(a) => write!(f, "dir{a}"),
            Scenario::LabelSkew(k) => write!(f, "ls{k}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let invalid = || Error::Validation {
            field: "scenarios".into(),
            message: format!("unknown scenario {s:?}; expected iid, dir<alpha> or ls<k>"),
        };
        if key == "iid" {
            return Ok(Scenario::Iid);
        }
        if let Some(a) = key.strip_prefix("dir") {
            let alpha: f64 = a.parse().map_err(|_| invalid())?;
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(invalid());
            }
            return Ok(Scenario::Dirichlet(alpha));
        }
        if let Some(k) = key.strip_prefix("ls") {
            let k: usize = k.parse().map_err(|_| invalid())?;
            if k == 0 {
                return Err(invalid());
            }
            return Ok(Scenario::LabelSkew(k));
        }
        Err(invalid())
    }
}

/// Tunable hyperparameters; every key is optional in the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Local epochs of FedAvg and RDFL.
    pub local_epochs: usize,
    pub fedrep_head_epochs: usize,
    pub fedrep_extractor_epochs: usize,
    /// Head and extractor epochs of the Fibonacci family.
    pub head_epochs: usize,
    pub extractor_epochs: usize,
    pub gamma: f64,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub mix: f64,
    pub gossip_passes: Option<usize>,
    pub warmup: Option<usize>,
    pub label_skew_primary: f64,
    pub label_skew_secondary: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        let fib = ProtocolConfig::for_method(Method::FibFl, 1, 1);
        let rep = ProtocolConfig::for_method(Method::FedRep, 1, 1);
        let mix = LabelSkewMix::default();
        Self {
            batch_size: fib.batch_size,
            lr: fib.lr,
            momentum: fib.momentum,
            local_epochs: fib.local_epochs,
            fedrep_head_epochs: rep.head_epochs,
            fedrep_extractor_epochs: rep.extractor_epochs,
            head_epochs: fib.head_epochs,
            extractor_epochs: fib.extractor_epochs,
            gamma: fib.gamma,
            gamma_start: fib.gamma_start,
            gamma_end: fib.gamma_end,
            tau: fib.tau,
            epsilon: fib.epsilon,
            mix: fib.mix,
            gossip_passes: None,
            warmup: None,
            label_skew_primary: mix.primary,
            label_skew_secondary: mix.secondary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub mode: EvalMode,
    pub test_fraction: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let d = EvalConfig::default();
        Self {
            mode: d.mode,
            test_fraction: d.test_fraction,
        }
    }
}

/// The on-disk form. Scenario and method lists stay as strings so that
/// validation can name the offending entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dataset_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels_path: Option<PathBuf>,
    scenarios: Vec<String>,
    methods: Vec<String>,
    #[serde(default = "default_clients")]
    n_clients: usize,
    #[serde(default = "default_rounds")]
    rounds: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    #[serde(default)]
    hyperparameters: Hyperparameters,
    #[serde(default)]
    eval: EvalSettings,
}

fn default_clients() -> usize {
    5
}

fn default_rounds() -> usize {
    30
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// 8x8 digits CSV: 64 pixel columns (0..16) and a label.
    Digits,
    /// IDX image and label files (MNIST layout).
    Idx,
    /// One CIFAR-10 binary batch.
    Cifar10,
}

/// A validated manifest with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub dataset: DatasetKind,
    pub dataset_path: Option<PathBuf>,
    pub labels_path: Option<PathBuf>,
    pub scenarios: Vec<Scenario>,
    pub methods: Vec<Method>,
    pub n_clients: usize,
    pub rounds: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub hyperparameters: Hyperparameters,
    pub eval: EvalSettings,
}

/// Everything needed to execute one (method, scenario) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub method: Method,
    pub scenario: Scenario,
    pub partition: PartitionSpec,
    pub protocol: ProtocolConfig,
    pub eval: EvalConfig,
    /// `<output_dir>/<dataset>/<scenario>/<method>`.
    pub out_dir: PathBuf,
}

fn validation(field: &str, message: impl Into<String>) -> Error {
    Error::validation(field, message)
}

impl ExperimentManifest {
    /// Reads and validates a manifest file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: ManifestFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let dataset = match file.dataset.to_ascii_lowercase().as_str() {
            "digits" => DatasetKind::Digits,
            "idx" | "mnist" => DatasetKind::Idx,
            "cifar10" => DatasetKind::Cifar10,
            other => return Err(validation("dataset", format!("unknown dataset {other:?}"))),
        };
        let scenarios = file
            .scenarios
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.parse::<Scenario>()
                    .map_err(|_| validation(&format!("scenarios[{i}]"), format!("unknown scenario {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let methods = file
            .methods
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.parse::<Method>()
                    .map_err(|_| validation(&format!("methods[{i}]"), format!("unknown method {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Self {
            dataset,
            dataset_path: file.dataset_path,
            labels_path: file.labels_path,
            scenarios,
            methods,
            n_clients: file.n_clients,
            rounds: file.rounds,
            seed: file.seed,
            output_dir: file.output_dir,
            hyperparameters: file.hyperparameters,
            eval: file.eval,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(validation("scenarios", "at least one scenario is required"));
        }
        if self.methods.is_empty() {
            return Err(validation("methods", "at least one method is required"));
        }
        if self.n_clients < 2 {
            return Err(validation("n_clients", "at least 2 clients are required"));
        }
        if self.dataset == DatasetKind::Idx && (self.dataset_path.is_none() || self.labels_path.is_none()) {
            return Err(validation("labels_path", "IDX datasets need dataset_path and labels_path"));
        }
        if self.dataset == DatasetKind::Cifar10 && self.dataset_path.is_none() {
            return Err(validation("dataset_path", "CIFAR-10 needs a batch file path"));
        }
        let h = &self.hyperparameters;
        let mix = LabelSkewMix {
            primary: h.label_skew_primary,
            secondary: h.label_skew_secondary,
        };
        if !(mix.primary >= 0.0 && mix.secondary >= 0.0 && mix.minority() >= -1e-12) {
            return Err(validation(
                "hyperparameters.label_skew_primary",
                "label-skew shares must be nonnegative and sum to at most 1",
            ));
        }
        if !(self.eval.test_fraction > 0.0 && self.eval.test_fraction < 1.0) {
            return Err(validation("eval.test_fraction", "must lie in (0, 1)"));
        }
        for plan in self.expand() {
            plan.protocol.validate().map_err(|e| match e {
                Error::Validation { field, message } => Error::Validation {
                    field: format!("hyperparameters.{field}"),
                    message,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    /// A manifest for the full grid of reference scenarios and methods.
    pub fn full_grid(dataset: DatasetKind, dataset_path: Option<PathBuf>, n_clients: usize, rounds: usize) -> Self {
        Self {
            dataset,
            dataset_path,
            labels_path: None,
            scenarios: Scenario::standard(),
            methods: Method::ALL.to_vec(),
            n_clients,
            rounds,
            seed: 0,
            output_dir: default_output(),
            hyperparameters: Hyperparameters::default(),
            eval: EvalSettings::default(),
        }
    }

    pub fn dataset_name(&self) -> &'static str {
        match self.dataset {
            DatasetKind::Digits => "digits",
            DatasetKind::Idx => "idx",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    /// Serializes every field, defaults included.
    pub fn to_toml(&self) -> String {
        let file = ManifestFile {
            dataset: self.dataset_name().to_string(),
            dataset_path: self.dataset_path.clone(),
            labels_path: self.labels_path.clone(),
            scenarios: self.scenarios.iter().map(|s| s.to_string()).collect(),
            methods: self.methods.iter().map(|m| m.as_str().to_string()).collect(),
            n_clients: self.n_clients,
            rounds: self.rounds,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            hyperparameters: self.hyperparameters.clone(),
            eval: self.eval.clone(),
        };
        toml::to_string(&file).expect("manifest fields serialize")
    }

    /// One plan per (scenario, method) pair, scenarios outermost.
    ///
    /// Seeds: the partition depends on (seed, scenario), the initial model on
    /// the seed alone, the held-out split on the seed alone and the batch
    /// order on (seed, method, scenario). Methods therefore share shards and
    /// starting weights.
    pub fn expand(&self) -> Vec<RunPlan> {
        let h = &self.hyperparameters;
        let mix = LabelSkewMix {
            primary: h.label_skew_primary,
            secondary: h.label_skew_secondary,
        };
        let mut plans = Vec::with_capacity(self.scenarios.len() * self.methods.len());
        for &scenario in &self.scenarios {
            let name = scenario.to_string();
            for &method in &self.methods {
                let mut p = ProtocolConfig::for_method(method, self.n_clients, self.rounds);
                p.batch_size = h.batch_size;
                p.lr = h.lr;
                p.momentum = h.momentum;
                p.local_epochs = h.local_epochs;
                (p.head_epochs, p.extractor_epochs) = match method {
                    Method::FedRep => (h.fedrep_head_epochs, h.fedrep_extractor_epochs),
                    _ => (h.head_epochs, h.extractor_epochs),
                };
                p.gamma = h.gamma;
                p.gamma_start = h.gamma_start;
                p.gamma_end = h.gamma_end;
                p.tau = h.tau;
                p.epsilon = h.epsilon;
                p.mix = h.mix;
                p.gossip_passes = h.gossip_passes;
                p.warmup = h.warmup;
                p.seed = derive_named(self.seed, &[method.as_str(), &name]);
                p.init_seed = derive_named(self.seed, &["init"]);
                plans.push(RunPlan {
                    method,
                    scenario,
                    partition: PartitionSpec {
                        scheme: scenario.scheme(mix),
                        n_clients: self.n_clients,
                        seed: derive_named(self.seed, &["partition", &name]),
                    },
                    protocol: p,
                    eval: EvalConfig {
                        mode: self.eval.mode,
                        test_fraction: self.eval.test_fraction,
                        seed: derive_named(self.seed, &["holdout"]),
                    },
                    out_dir: self.output_dir.join(self.dataset_name()).join(&name).join(method.slug()),
                });
            }
        }
        plans
    }

    /// Resolves a dataset path: relative paths are looked up under
    /// `$FIRMA_DATA_DIR` when it is set.
    pub fn resolve(path: &Path) -> PathBuf {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
            _ => path.to_path_buf(),
        }
    }
}
