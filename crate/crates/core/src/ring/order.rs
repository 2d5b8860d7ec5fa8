//! Ring cost over class histograms and the 2-opt ordering heuristic.

use serde::Serialize;

/// Improvements smaller than this are treated as ties.
pub const TWO_OPT_TOL: f64 = 1e-12;

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Pairwise cosine similarities.
pub fn similarity_matrix<H: AsRef<[f64]>>(histograms: &[H]) -> Vec<Vec<f64>> {
    let n = histograms.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = cosine(histograms[i].as_ref(), histograms[j].as_ref());
            s[i][j] = c;
            s[j][i] = c;
        }
    }
    s
}

fn cyclic_cost(sigma: &[usize], sim: &[Vec<f64>]) -> f64 {
    let n = sigma.len();
    if n == 0 {
        return 0.0;
    }
    (0..n).map(|p| sim[sigma[p]][sigma[(p + 1) % n]]).sum()
}

/// Sum of cosine similarities between ring-adjacent histograms.
pub fn ring_cost<H: AsRef<[f64]>>(sigma: &[usize], histograms: &[H]) -> f64 {
    cyclic_cost(sigma, &similarity_matrix(histograms))
}

/// A ring ordering: `sigma[p]` is the client at ring position `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct RingOrder {
    pub sigma: Vec<usize>,
    pub cost: f64,
    pub identity_cost: f64,
    /// Cost after each accepted move, starting with the identity cost.
    pub trace: Vec<f64>,
}

#[derive(Serialize)]
struct RingOrderJson<'a> {
    sigma: &'a [usize],
    cost: f64,
    savings: Option<f64>,
}

impl RingOrder {
    pub fn identity<H: AsRef<[f64]>>(histograms: &[H]) -> Self {
        let sigma: Vec<usize> = (0..histograms.len()).collect();
        let cost = ring_cost(&sigma, histograms);
        Self {
            sigma,
            cost,
            identity_cost: cost,
            trace: vec![cost],
        }
    }

    /// `1 - cost/identity_cost`, undefined when the identity cost is not positive.
    pub fn savings_fraction(&self) -> Option<f64> {
        (self.identity_cost > 0.0).then(|| 1.0 - self.cost / self.identity_cost)
    }

    /// Position of each client on the ring.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.sigma.len()];
        for (p, &c) in self.sigma.iter().enumerate() {
            pos[c] = p;
        }
        pos
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RingOrderJson {
            sigma: &self.sigma,
            cost: self.cost,
            savings: self.savings_fraction(),
        })
        .expect("plain struct serializes")
    }
}

/// Cost change from reversing positions `i..=j` of the cyclic sequence.
fn reversal_delta(sigma: &[usize], sim: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let n = sigma.len();
    let before = sigma[(i + n - 1) % n];
    let after = sigma[(j + 1) % n];
    let (first, last) = (sigma[i], sigma[j]);
    sim[before][last] + sim[first][after] - sim[before][first] - sim[last][after]
}

/// The best strictly improving reversal `(i, j, delta)`, scanning `i` then `j` ascending.
fn best_move(sigma: &[usize], sim: &[Vec<f64>]) -> Option<(usize, usize, f64)> {
    let n = sigma.len();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in i + 1..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let d = reversal_delta(sigma, sim, i, j);
            if d < -TWO_OPT_TOL && best.is_none_or(|(_, _, b)| d < b) {
                best = Some((i, j, d));
            }
        }
    }
    best
}

/// True when some segment reversal lowers the cost of `sigma` by more than the tolerance.
pub fn has_improving_move<H: AsRef<[f64]>>(sigma: &[usize], histograms: &[H]) -> bool {
    sigma.len() >= 3 && best_move(sigma, &similarity_matrix(histograms)).is_some()
}

/// Best-improvement 2-opt from the identity ordering until no reversal
/// improves the ring cost. Rings with fewer than three clients are returned
/// as the identity.
pub fn two_opt<H: AsRef<[f64]>>(histograms: &[H]) -> RingOrder {
    let n = histograms.len();
    let mut order = RingOrder::identity(histograms);
    if n < 3 {
        return order;
    }
    let sim = similarity_matrix(histograms);
    while let Some((i, j, _)) = best_move(&order.sigma, &sim) {
        order.sigma[i..=j].reverse();
        order.cost = cyclic_cost(&order.sigma, &sim);
        order.trace.push(order.cost);
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_hot(c: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[c] = 1.0;
        v
    }

    #[test]
    fn identical_histograms_cost_n() {
        let h = vec![vec![0.2, 0.3, 0.5]; 6];
        assert_abs_diff_eq!(ring_cost(&[0, 1, 2, 3, 4, 5], &h), 6.0, epsilon = 1e-12);
        let o = two_opt(&h);
        assert_abs_diff_eq!(o.savings_fraction().unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_one_hots_cost_zero() {
        let h: Vec<_> = (0..4).map(|c| one_hot(c, 4)).collect();
        assert_eq!(ring_cost(&[0, 1, 2, 3], &h), 0.0);
    }

    #[test]
    fn three_node_hand_value() {
        let s = 0.5f64.sqrt();
        let h = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![s, s]];
        assert_abs_diff_eq!(ring_cost(&[0, 1, 2], &h), 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn zero_vector_has_zero_similarity() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(cosine(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn small_rings_are_identity() {
        let h = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let o = two_opt(&h);
        assert_eq!(o.sigma, vec![0, 1]);
        assert_eq!(o.trace.len(), 1);
    }

    #[test]
    fn separates_clustered_clients() {
        // Clients 0-4 share class 0, clients 5-9 share class 1: the identity ring
        // keeps each cluster adjacent, an alternating ring costs nothing.
        let h: Vec<_> = (0..10).map(|c| one_hot(c / 5, 2)).collect();
        let o = two_opt(&h);
        assert_abs_diff_eq!(o.identity_cost, 8.0, epsilon = 1e-12);
        assert!(o.cost < o.identity_cost);
        assert!(!has_improving_move(&o.sigma, &h));
    }

    #[test]
    fn json_shape() {
        let h: Vec<_> = (0..3).map(|c| one_hot(c, 3)).collect();
        let v: serde_json::Value = serde_json::from_str(&two_opt(&h).to_json()).unwrap();
        assert_eq!(v["sigma"], serde_json::json!([0, 1, 2]));
        assert_eq!(v["cost"], 0.0);
        assert!(v["savings"].is_null());
    }
}
