//! Splitting a dataset across clients: IID, class-wise Dirichlet, and
//! structured label skew.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::{class_histogram, ClassHistogram, LabeledDataset};
use crate::error::{Error, Result};
use crate::seed;

/// Mass split for label-skew partitions. Whatever is left after the primary
/// and secondary shares goes to the minority classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSkewMix {
    pub primary: f64,
    pub secondary: f64,
}

impl Default for LabelSkewMix {
    fn default() -> Self {
        Self {
            primary: 0.70,
            secondary: 0.27,
        }
    }
}

impl LabelSkewMix {
    pub fn minority(&self) -> f64 {
        1.0 - self.primary - self.secondary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartitionScheme {
    Iid,
    Dirichlet { alpha: f64 },
    LabelSkew { k_primary: usize, mix: LabelSkewMix },
}

impl PartitionScheme {
    pub fn label_skew(k_primary: usize) -> Self {
        PartitionScheme::LabelSkew {
            k_primary,
            mix: LabelSkewMix::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub scheme: PartitionScheme,
    pub n_clients: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.n_clients < 2 {
            return Err(Error::Config(format!(
                "partition needs at least 2 clients, got {}",
                self.n_clients
            )));
        }
        match self.scheme {
            PartitionScheme::Iid => {}
            PartitionScheme::Dirichlet { alpha } => {
                if !(alpha > 0.0) || !alpha.is_finite() {
                    return Err(Error::Config(format!("Dirichlet alpha must be positive, got {alpha}")));
                }
            }
            PartitionScheme::LabelSkew { k_primary, mix } => {
                if k_primary < 1 || k_primary + 1 > n_classes {
                    return Err(Error::Config(format!(
                        "label-skew K must lie in 1..={}, got {k_primary}",
                        n_classes.saturating_sub(1)
                    )));
                }
                if mix.primary < 0.0 || mix.secondary < 0.0 || mix.minority() < -1e-12 {
                    return Err(Error::Config(format!("label-skew mix {mix:?} is not a distribution")));
                }
            }
        }
        Ok(())
    }
}

/// One client's slice of the parent dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub client_id: usize,
    /// Sorted indices into the parent dataset.
    pub indices: Vec<usize>,
    pub histogram: ClassHistogram,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Seeded shuffle of the shard; the last `round(test_fraction * len)`
    /// samples become the local test set. Both halves come back sorted.
    pub fn local_split(&self, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut idx = self.indices.clone();
        idx.shuffle(&mut seed::rng(seed::derive(seed, &[self.client_id as u64])));
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        let mut test = idx.split_off(idx.len() - n_test);
        idx.sort_unstable();
        test.sort_unstable();
        (idx, test)
    }
}

/// Partitions `dataset` into `spec.n_clients` disjoint shards.
pub fn partition(dataset: &LabeledDataset, spec: &PartitionSpec) -> Result<Vec<Shard>> {
    if dataset.is_empty() {
        return Err(Error::Consistency("cannot partition an empty dataset".into()));
    }
    spec.validate(dataset.n_classes)?;
    let mut rng = seed::rng(spec.seed);
    let groups = match spec.scheme {
        PartitionScheme::Iid => iid(dataset.len(), spec.n_clients, &mut rng),
        PartitionScheme::Dirichlet { alpha } => dirichlet(dataset, spec.n_clients, alpha, &mut rng),
        PartitionScheme::LabelSkew { k_primary, mix } => {
            label_skew(dataset, spec.n_clients, k_primary, mix, &mut rng)
        }
    };
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(client_id, mut indices)| {
            indices.sort_unstable();
            let histogram = class_histogram(&indices, dataset);
            Shard {
                client_id,
                indices,
                histogram,
            }
        })
        .collect())
}

fn iid(n: usize, n_clients: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (base, extra) = (n / n_clients, n % n_clients);
    let mut out = Vec::with_capacity(n_clients);
    let mut start = 0;
    for i in 0..n_clients {
        let len = base + usize::from(i < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

fn class_pools(dataset: &LabeledDataset, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut pools = vec![Vec::new(); dataset.n_classes];
    for (i, &y) in dataset.labels.iter().enumerate() {
        pools[y].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    pools
}

fn dirichlet_draw(n: usize, alpha: f64, rng: &mut impl Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter().map(|g| g / sum).collect()
    } else {
        // Every gamma variate underflowed: the limit is a vertex of the simplex.
        let mut p = vec![0.0; n];
        p[rng.gen_range(0..n)] = 1.0;
        p
    }
}

fn dirichlet(dataset: &LabeledDataset, n_clients: usize, alpha: f64, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let pools = class_pools(dataset, rng);
    let mut out = vec![Vec::new(); n_clients];
    for pool in pools {
        let p = dirichlet_draw(n_clients, alpha, rng);
        // Each sample of the class goes to a client drawn from `p`.
        let pick = WeightedIndex::new(&p).expect("draw lies on the simplex");
        for i in pool {
            out[pick.sample(rng)].push(i);
        }
    }
    out
}

/// Primary, secondary and minority classes of one client.
pub(crate) fn label_skew_roles(
    client: usize,
    n_clients: usize,
    n_classes: usize,
    k: usize,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    // Primary blocks advance by at least K classes per client and are spread
    // over the label space when there are fewer clients than classes.
    let step = k.max(n_classes / n_clients);
    let start = client * step;
    let primary: Vec<usize> = (0..k).map(|j| (start + j) % n_classes).collect();
    let secondary: Vec<usize> = (k..n_classes)
        .map(|j| (start + j) % n_classes)
        .filter(|c| !primary.contains(c))
        .take(k + 1)
        .collect();
    let minority = (0..n_classes)
        .filter(|c| !primary.contains(c) && !secondary.contains(c))
        .collect();
    (primary, secondary, minority)
}

fn label_skew(
    dataset: &LabeledDataset,
    n_clients: usize,
    k: usize,
    mix: LabelSkewMix,
    rng: &mut impl Rng,
) -> Vec<Vec<usize>> {
    let c_count = dataset.n_classes;
    let quota = (dataset.len() / n_clients) as f64;

    // Per-client demand over classes, before availability is applied.
    let demand: Vec<Vec<f64>> = (0..n_clients)
        .map(|i| {
            let (primary, secondary, minority) = label_skew_roles(i, n_clients, c_count, k);
            let mut row = vec![0.0; c_count];
            let mut spread = |classes: &[usize], share: f64| {
                for &c in classes {
                    row[c] += share * quota / classes.len() as f64;
                }
            };
            // A share with no classes to land on is folded into the primaries.
            let mut primary_share = mix.primary;
            if secondary.is_empty() {
                primary_share += mix.secondary;
            } else {
                spread(&secondary, mix.secondary);
            }
            if minority.is_empty() {
                primary_share += mix.minority();
            } else {
                spread(&minority, mix.minority());
            }
            spread(&primary, primary_share);
            row
        })
        .collect();

    let mut pools = class_pools(dataset, rng);
    let availability: Vec<f64> = (0..c_count)
        .map(|c| {
            let total: f64 = demand.iter().map(|row| row[c]).sum();
            if total > pools[c].len() as f64 {
                pools[c].len() as f64 / total
            } else {
                1.0
            }
        })
        .collect();

    // Short classes shrink each affected client's whole allocation so its
    // primary/secondary/minority proportions survive.
    let mut out = vec![Vec::new(); n_clients];
    for (client, row) in demand.iter().enumerate() {
        let scale = row
            .iter()
            .zip(&availability)
            .filter(|(d, _)| **d > 0.0)
            .map(|(_, a)| *a)
            .fold(1.0, f64::min);
        for (c, &d) in row.iter().enumerate() {
            let want = (scale * d).round() as usize;
            let take = want.min(pools[c].len());
            let at = pools[c].len() - take;
            out[client].extend(pools[c].drain(at..));
        }
    }
    out
}
