//! Evaluation metrics over per-round records.

mod record;

pub use record::{write_csv, RoundRecord, RunSummary, CSV_FIXED_COLUMNS};

use crate::error::{Error, Result};
use crate::protocols::Method;

/// Relative mean absolute difference `ΣΣ|a_i - a_j| / (2 N² ā)`.
/// Zero for an empty or all-zero vector. Inputs are expected to be nonnegative.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    // Each gap between consecutive sorted values separates k(n-k) pairs.
    let weighted: f64 = sorted
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let k = (i + 1) as f64;
            k * (nf - k) * (w[1] - w[0])
        })
        .sum();
    // total = N·ā, so N²ā = N·total.
    (weighted / (nf * total)).clamp(0.0, 1.0)
}

/// First 1-indexed round whose mean accuracy reaches `threshold`.
pub fn rounds_to_threshold(means: &[f64], threshold: f64) -> Option<usize> {
    means.iter().position(|&m| m >= threshold).map(|i| i + 1)
}

/// Population standard deviation of the mean accuracy over rounds
/// `⌈R/2⌉+1 ..= R`, where `R = means.len()`.
pub fn plateau_sigma(means: &[f64]) -> Result<f64> {
    let r = means.len();
    if r < 2 {
        return Err(Error::Undefined(format!("plateau needs at least 2 rounds, got {r}")));
    }
    let window = &means[r.div_ceil(2)..];
    let n = window.len() as f64;
    let mu = window.iter().sum::<f64>() / n;
    Ok((window.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt())
}

/// Parameters sent in one round, counting both directions of every exchange.
/// `warmup` selects the full-model central round used before ring training.
pub fn comm_cost(method: Method, n: usize, p: usize, p_e: usize, k_g: usize, warmup: bool) -> u64 {
    let (n, p, p_e, k_g) = (n as u64, p as u64, p_e as u64, k_g as u64);
    match method {
        Method::FedAvg | Method::Rdfl => 2 * n * p,
        Method::FedRep | Method::FibFl | Method::FibFlPlus => 2 * n * p_e,
        Method::FibFlPlusPlus if warmup => 2 * n * p,
        Method::FibFlPlusPlus => 2 * k_g * n * p_e,
    }
}

/// Total over `rounds` rounds, the first `warmup_rounds` of which are
/// warmup rounds for the method that has them.
pub fn comm_cost_total(
    method: Method,
    n: usize,
    p: usize,
    p_e: usize,
    k_g: usize,
    rounds: usize,
    warmup_rounds: usize,
) -> u64 {
    (1..=rounds)
        .map(|r| comm_cost(method, n, p, p_e, k_g, r <= warmup_rounds))
        .sum()
}
