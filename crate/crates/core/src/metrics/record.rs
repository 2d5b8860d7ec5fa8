//! Per-round records and run summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Leading CSV columns; one `acc_<i>` column per client follows.
pub const CSV_FIXED_COLUMNS: [&str; 8] = [
    "round",
    "method",
    "scenario",
    "mean_acc",
    "gini",
    "gamma_r",
    "params_tx",
    "head_tx_count",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-indexed round.
    pub round: usize,
    pub method: String,
    pub scenario: String,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub gini: f64,
    /// Retention applied this round, if the method uses one.
    pub gamma_r: Option<f64>,
    pub params_tx: u64,
    pub head_tx_count: usize,
    /// Wall-clock seconds since the start of the run.
    pub elapsed_secs: f64,
}

impl RoundRecord {
    pub fn csv_header(n_clients: usize) -> Vec<String> {
        CSV_FIXED_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain((0..n_clients).map(|i| format!("acc_{i}")))
            .collect()
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.round.to_string(),
            self.method.clone(),
            self.scenario.clone(),
            format!("{:.6}", self.mean_accuracy),
            format!("{:.6}", self.gini),
            self.gamma_r.map(|g| format!("{g:.6}")).unwrap_or_default(),
            self.params_tx.to_string(),
            self.head_tx_count.to_string(),
        ];
        row.extend(self.accuracies.iter().map(|a| format!("{a:.6}")));
        row
    }
}

/// Writes records as CSV with the fixed schema.
pub fn write_csv<W: std::io::Write>(out: W, records: &[RoundRecord], n_clients: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(RoundRecord::csv_header(n_clients)).map_err(fail)?;
    for r in records {
        w.write_record(r.csv_row()).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Headline metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub scenario: String,
    pub rounds: usize,
    pub final_mean_accuracy: Option<f64>,
    /// Gini of the final-round per-client accuracies.
    pub final_gini: Option<f64>,
    pub rounds_to_50: Option<usize>,
    pub plateau_sigma: Option<f64>,
    pub total_params_tx: u64,
    pub head_tx_total: usize,
    /// Ring-order cost savings, for runs that optimize the ring.
    pub ring_savings: Option<f64>,
}

impl RunSummary {
    pub fn from_records(method: &str, scenario: &str, records: &[RoundRecord], ring_savings: Option<f64>) -> Self {
        let means: Vec<f64> = records.iter().map(|r| r.mean_accuracy).collect();
        let last = records.last();
        Self {
            method: method.to_string(),
            scenario: scenario.to_string(),
            rounds: records.len(),
            final_mean_accuracy: last.map(|r| r.mean_accuracy),
            final_gini: last.map(|r| r.gini),
            rounds_to_50: super::rounds_to_threshold(&means, 0.5),
            plateau_sigma: super::plateau_sigma(&means).ok(),
            total_params_tx: records.iter().map(|r| r.params_tx).sum(),
            head_tx_total: records.iter().map(|r| r.head_tx_count).sum(),
            ring_savings,
        }
    }
}
