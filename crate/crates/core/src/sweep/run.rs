//! Sweep execution and artifact output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::manifest::{DatasetKind, ExperimentManifest, RunPlan};
use crate::data::{load_cifar10_batch, load_digits_csv, load_idx, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::{comm_cost, write_csv, RunSummary};
use crate::protocols::{run_experiment, ExperimentOutcome, Method};
use crate::ring::{calibrated_retention, MixingMatrix};

pub const ERROR_MARKER: &str = "ERROR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Concurrent runs; 1 runs them in manifest order.
    pub jobs: usize,
    /// Single-threaded everything, including local training.
    pub deterministic: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            deterministic: false,
        }
    }
}

/// Per-run audit figures written next to the round CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunAudit {
    pub warmup_rounds: usize,
    /// Head-carrying transmissions after warmup.
    pub head_tx_after_warmup: usize,
    /// Head changes outside local training after warmup.
    pub head_changes_outside_training: usize,
    /// True when every round's ledger total equals the closed-form cost.
    pub ledger_matches_closed_form: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub method: String,
    pub scenario: String,
    /// Run directory relative to the sweep's output root.
    pub out_dir: PathBuf,
    pub summary: Option<RunSummary>,
    pub audit: Option<RunAudit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub dataset: String,
    pub n_clients: usize,
    pub rounds: usize,
    pub seed: u64,
    pub runs: Vec<RunReport>,
    /// method -> scenario -> final mean accuracy.
    pub accuracy: BTreeMap<String, BTreeMap<String, Option<f64>>>,
    /// method -> scenario -> final-round Gini.
    pub gini: BTreeMap<String, BTreeMap<String, Option<f64>>>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Loads the manifest's dataset.
pub fn load_dataset(manifest: &ExperimentManifest) -> Result<LabeledDataset> {
    let path = |p: &Option<PathBuf>, field: &str| {
        p.as_deref()
            .map(ExperimentManifest::resolve)
            .ok_or_else(|| Error::validation(field, "path is required"))
    };
    match manifest.dataset {
        DatasetKind::Digits => {
            let p = manifest
                .dataset_path
                .as_deref()
                .map(ExperimentManifest::resolve)
                .unwrap_or_else(|| ExperimentManifest::resolve(Path::new("data/digits.csv")));
            load_digits_csv(p)
        }
        DatasetKind::Idx => load_idx(
            path(&manifest.dataset_path, "dataset_path")?,
            path(&manifest.labels_path, "labels_path")?,
        ),
        DatasetKind::Cifar10 => load_cifar10_batch(path(&manifest.dataset_path, "dataset_path")?),
    }
}

/// Lines describing the planned runs, without executing anything.
pub fn dry_run(manifest: &ExperimentManifest) -> Vec<String> {
    manifest
        .expand()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            format!(
                "{:>3}  {:<8} {:<8} -> {}",
                i + 1,
                p.method.as_str(),
                p.scenario.to_string(),
                p.out_dir.join("rounds.csv").display()
            )
        })
        .collect()
}

/// Audit of one finished run.
pub fn audit(outcome: &ExperimentOutcome) -> RunAudit {
    let fed = &outcome.federation;
    let cfg = &fed.config;
    let warmup = cfg.warmup_rounds();
    let p_e = fed.dims.extractor_len();
    let p = fed.dims.model_len();
    let ledger_ok = (1..=fed.rounds_done()).all(|r| {
        fed.ledger.params_in_round(r)
            == comm_cost(cfg.method, cfg.n_clients, p, p_e, cfg.gossip_passes(), r <= warmup)
    });
    RunAudit {
        warmup_rounds: warmup,
        head_tx_after_warmup: fed.ledger.entries.iter().filter(|t| t.round > warmup && t.includes_head).count(),
        head_changes_outside_training: fed.audit.external_changes_after(warmup),
        ledger_matches_closed_form: ledger_ok,
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn execute(plan: &RunPlan, data: &LabeledDataset, deterministic: bool) -> Result<(RunSummary, RunAudit)> {
    let mut protocol = plan.protocol.clone();
    protocol.parallel = !deterministic;
    let scenario = plan.scenario.to_string();
    fs::create_dir_all(&plan.out_dir).map_err(|e| Error::io(&plan.out_dir, e))?;
    let outcome = run_experiment(data, &plan.partition, &protocol, &plan.eval, &scenario)?;
    let fed = &outcome.federation;

    let csv_path = plan.out_dir.join("rounds.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_csv(file, &outcome.records, protocol.n_clients)?;

    let savings = (plan.method == Method::FibFlPlusPlus).then(|| fed.ring.savings_fraction()).flatten();
    let summary = RunSummary::from_records(plan.method.as_str(), &scenario, &outcome.records, savings);
    let audit = audit(&outcome);
    write(
        &plan.out_dir.join("run.json"),
        json(&serde_json::json!({ "summary": summary, "audit": audit, "final_accuracies": outcome.final_accuracies }))?,
    )?;

    if plan.method == Method::FibFlPlusPlus {
        write(&plan.out_dir.join("ring.json"), fed.ring.to_json())?;
        // Per-pass matrix of the first ring round, when there are at least two clients.
        let gamma_in = calibrated_retention(protocol.gamma_start, protocol.gossip_passes())?;
        if protocol.n_clients >= 2 && gamma_in < 1.0 {
            let spectrum = MixingMatrix::fibonacci(protocol.n_clients, gamma_in)?.spectrum();
            write(&plan.out_dir.join("spectrum.json"), spectrum.to_json())?;
        }
    }
    let marker = plan.out_dir.join(ERROR_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    Ok((summary, audit))
}

fn run_one(plan: &RunPlan, root: &Path, data: &LabeledDataset, deterministic: bool) -> RunReport {
    let result = execute(plan, data, deterministic);
    let mut report = RunReport {
        method: plan.method.as_str().to_string(),
        scenario: plan.scenario.to_string(),
        out_dir: plan.out_dir.strip_prefix(root).unwrap_or(&plan.out_dir).to_path_buf(),
        summary: None,
        audit: None,
        error: None,
    };
    match result {
        Ok((s, a)) => {
            report.summary = Some(s);
            report.audit = Some(a);
        }
        Err(e) => {
            // Keep whatever was written and mark the run as failed.
            let _ = fs::create_dir_all(&plan.out_dir);
            let _ = fs::write(plan.out_dir.join(ERROR_MARKER), format!("{e}\n"));
            report.error = Some(e.to_string());
        }
    }
    report
}

/// Executes every planned run on an already loaded dataset and writes
/// `summary.json` under `<output_dir>/<dataset>/`.
pub fn run_sweep_on(manifest: &ExperimentManifest, data: &LabeledDataset, opts: SweepOptions) -> Result<SweepReport> {
    let plans = manifest.expand();
    let root = manifest.output_dir.as_path();
    let jobs = if opts.deterministic { 1 } else { opts.jobs.max(1) };
    let runs: Vec<RunReport> = if jobs == 1 {
        plans.iter().map(|p| run_one(p, root, data, opts.deterministic)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| plans.par_iter().map(|p| run_one(p, root, data, false)).collect())
    };

    let mut accuracy: BTreeMap<String, BTreeMap<String, Option<f64>>> = BTreeMap::new();
    let mut gini: BTreeMap<String, BTreeMap<String, Option<f64>>> = BTreeMap::new();
    for r in &runs {
        let s = r.summary.as_ref();
        accuracy
            .entry(r.method.clone())
            .or_default()
            .insert(r.scenario.clone(), s.and_then(|s| s.final_mean_accuracy));
        gini.entry(r.method.clone())
            .or_default()
            .insert(r.scenario.clone(), s.and_then(|s| s.final_gini));
    }
    let report = SweepReport {
        dataset: manifest.dataset_name().to_string(),
        n_clients: manifest.n_clients,
        rounds: manifest.rounds,
        seed: manifest.seed,
        runs,
        accuracy,
        gini,
    };
    let dir = manifest.output_dir.join(manifest.dataset_name());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join("summary.json"), json(&report)?)?;
    Ok(report)
}

/// Loads the dataset and runs the sweep.
pub fn run_sweep(manifest: &ExperimentManifest, opts: SweepOptions) -> Result<SweepReport> {
    let data = load_dataset(manifest)?;
    run_sweep_on(manifest, &data, opts)
}
