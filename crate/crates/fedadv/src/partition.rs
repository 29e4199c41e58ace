//! Client data assignment: a globally shared IID pool plus IID, one-class,
//! two-class, and Dirichlet local splits.

use crate::error::{Error, Result};
use crate::rng::derived_rng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

const POOL_TAG: u64 = 0x5041_0001;
const SAMPLE_TAG: u64 = 0x5041_0002;
const SPLIT_TAG: u64 = 0x5041_0003;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Iid,
    OneClass,
    TwoClass,
    /// Per-class client proportions drawn from Dirichlet(beta * 1_K).
    Dirichlet(f64),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Iid => "iid",
            Strategy::OneClass => "one_class",
            Strategy::TwoClass => "two_class",
            Strategy::Dirichlet(_) => "dirichlet",
        }
    }

    /// `beta` is only consulted for the Dirichlet strategy.
    pub fn parse(name: &str, beta: f64) -> Result<Self> {
        match name {
            "iid" => Ok(Strategy::Iid),
            "one_class" => Ok(Strategy::OneClass),
            "two_class" => Ok(Strategy::TwoClass),
            "dirichlet" => {
                if !beta.is_finite() || beta <= 0.0 {
                    return Err(Error::config(
                        "beta_dirichlet",
                        format!("must be > 0, got {beta}"),
                    ));
                }
                Ok(Strategy::Dirichlet(beta))
            }
            other => Err(Error::config(
                "strategy",
                format!("unknown strategy '{other}' (iid, one_class, two_class, dirichlet)"),
            )),
        }
    }
}

/// A complete assignment: the shared pool (per class), the alpha-fraction
/// sample of it that every client receives, and each client's local
/// indices. Local lists are pairwise disjoint and disjoint from the pool.
#[derive(Debug, Clone)]
pub struct PartitionPlan {
    pub strategy: Strategy,
    pub alpha_share: f64,
    pub shared_pool: Vec<Vec<usize>>,
    pub shared_sample: Vec<usize>,
    pub client_indices: Vec<Vec<usize>>,
}

fn indices_by_class(labels: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::Partition(format!(
                "label {y} at index {i} out of range for {n_classes} classes"
            )));
        }
        by_class[y].push(i);
    }
    Ok(by_class)
}

/// Draws `per_class` indices of every class without replacement. Returns
/// the per-class pool and the remainder (everything unselected, in index
/// order).
pub fn make_shared_pool(
    labels: &[usize],
    n_classes: usize,
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    let by_class = indices_by_class(labels, n_classes)?;
    let mut selected = vec![false; labels.len()];
    let mut pool = Vec::with_capacity(n_classes);
    for (c, mut members) in by_class.into_iter().enumerate() {
        if members.len() < per_class {
            return Err(Error::Partition(format!(
                "class {c} has {} examples, shared pool needs {per_class}",
                members.len()
            )));
        }
        members.shuffle(rng);
        let take = members[..per_class].to_vec();
        for &i in &take {
            selected[i] = true;
        }
        pool.push(take);
    }
    let remainder = (0..labels.len()).filter(|&i| !selected[i]).collect();
    Ok((pool, remainder))
}

/// Samples floor(alpha * per_class) indices per class from the pool,
/// without replacement. Every client receives this same list.
pub fn sample_shared(
    pool: &[Vec<usize>],
    alpha_share: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&alpha_share) {
        return Err(Error::config(
            "alpha_share",
            format!("must be in [0, 1], got {alpha_share}"),
        ));
    }
    let mut sample = Vec::new();
    for class_pool in pool {
        let take = (alpha_share * class_pool.len() as f64).floor() as usize;
        let mut members = class_pool.clone();
        members.shuffle(rng);
        sample.extend_from_slice(&members[..take]);
    }
    Ok(sample)
}

/// Class-balanced equal split: each class is shuffled and dealt round-robin
/// through a cursor shared across classes, so client sizes differ by at
/// most one overall and per class.
pub fn partition_iid(
    remainder: &[usize],
    labels: &[usize],
    k: usize,
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Partition("need at least one client".into()));
    }
    if k > remainder.len() {
        return Err(Error::Partition(format!(
            "{k} clients but only {} examples",
            remainder.len()
        )));
    }
    let class_of = |i: usize| labels[i];
    let mut by_class = vec![Vec::new(); n_classes];
    for &i in remainder {
        let y = class_of(i);
        if y >= n_classes {
            return Err(Error::Partition(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        by_class[y].push(i);
    }
    let mut clients = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for members in &mut by_class {
        members.shuffle(rng);
        for &i in members.iter() {
            clients[cursor % k].push(i);
            cursor += 1;
        }
    }
    Ok(clients)
}

/// Each client holds examples of exactly one class; classes are handed out
/// by a random permutation. Covers the whole remainder only when
/// `k == n_classes`.
pub fn partition_one_class(
    remainder: &[usize],
    labels: &[usize],
    k: usize,
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Partition("need at least one client".into()));
    }
    if k > n_classes {
        return Err(Error::Partition(format!(
            "one_class cannot serve {k} clients with {n_classes} classes"
        )));
    }
    let mut perm: Vec<usize> = (0..n_classes).collect();
    perm.shuffle(rng);
    let mut clients = vec![Vec::new(); k];
    for &i in remainder {
        let y = labels[i];
        if let Some(owner) = perm[..k].iter().position(|&c| c == y) {
            clients[owner].push(i);
        }
    }
    Ok(clients)
}

/// Each client holds two shards of distinct classes. 2K shards are spread
/// over classes as evenly as possible (never more than two per class), each
/// class's examples are chunked into its shards, and shards are paired by
/// shuffling with a repair pass for same-class pairs.
pub fn partition_two_class(
    remainder: &[usize],
    labels: &[usize],
    k: usize,
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Partition("need at least one client".into()));
    }
    if n_classes < 2 {
        return Err(Error::Partition(
            "two_class needs at least two classes".into(),
        ));
    }
    if 2 * k > 2 * n_classes {
        return Err(Error::Partition(format!(
            "two_class cannot cut {} shards from {n_classes} classes (max 2 per class)",
            2 * k
        )));
    }
    // Spread 2K shards over the classes: base per class plus one extra for
    // a random subset.
    let base = (2 * k) / n_classes;
    let extra = (2 * k) % n_classes;
    let mut class_order: Vec<usize> = (0..n_classes).collect();
    class_order.shuffle(rng);
    let mut shard_counts = vec![0usize; n_classes];
    for (pos, &c) in class_order.iter().enumerate() {
        shard_counts[c] = base + usize::from(pos < extra);
    }

    let mut by_class = vec![Vec::new(); n_classes];
    for &i in remainder {
        let y = labels[i];
        if y >= n_classes {
            return Err(Error::Partition(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        by_class[y].push(i);
    }

    // (class, indices) shard list.
    let mut shards: Vec<(usize, Vec<usize>)> = Vec::with_capacity(2 * k);
    for c in 0..n_classes {
        let count = shard_counts[c];
        if count == 0 {
            continue;
        }
        let members = &mut by_class[c];
        members.shuffle(rng);
        let chunk = members.len() / count;
        let rem = members.len() % count;
        let mut start = 0;
        for s in 0..count {
            let size = chunk + usize::from(s < rem);
            shards.push((c, members[start..start + size].to_vec()));
            start += size;
        }
    }

    shards.shuffle(rng);
    // Repair pass: a pair (2j, 2j+1) drawing the same class swaps its
    // second shard with another pair's. A valid partner always exists
    // because no class owns more than two shards.
    for j in 0..k {
        if shards[2 * j].0 != shards[2 * j + 1].0 {
            continue;
        }
        let a = shards[2 * j].0;
        let mut fixed = false;
        for other in 0..k {
            if other == j {
                continue;
            }
            let (c, d) = (shards[2 * other].0, shards[2 * other + 1].0);
            if c != a && d != a {
                shards.swap(2 * j + 1, 2 * other + 1);
                fixed = true;
                break;
            }
        }
        if !fixed {
            return Err(Error::Partition(
                "two_class could not pair shards with distinct classes".into(),
            ));
        }
    }

    let mut clients = Vec::with_capacity(k);
    for j in 0..k {
        let mut list = shards[2 * j].1.clone();
        list.extend_from_slice(&shards[2 * j + 1].1);
        clients.push(list);
    }
    Ok(clients)
}

/// Per class, client proportions are drawn from Dirichlet(beta * 1_K) and
/// converted to counts with largest-remainder rounding, so every example
/// lands on exactly one client.
pub fn partition_dirichlet(
    remainder: &[usize],
    labels: &[usize],
    k: usize,
    beta: f64,
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Partition("need at least one client".into()));
    }
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::config(
            "beta_dirichlet",
            format!("must be > 0, got {beta}"),
        ));
    }
    let mut by_class = vec![Vec::new(); n_classes];
    for &i in remainder {
        let y = labels[i];
        if y >= n_classes {
            return Err(Error::Partition(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        by_class[y].push(i);
    }
    let mut clients = vec![Vec::new(); k];
    for members in &mut by_class {
        members.shuffle(rng);
        let props = dirichlet_proportions(k, beta, rng);
        let counts = largest_remainder_counts(&props, members.len());
        let mut start = 0;
        for (client, &count) in clients.iter_mut().zip(&counts) {
            client.extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    Ok(clients)
}

fn dirichlet_proportions(k: usize, beta: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    // Gamma(beta, 1) draws normalized to the simplex. Retry the degenerate
    // all-zero underflow case (possible for tiny beta).
    use rand_distr::{Distribution, Gamma};
    let gamma = Gamma::new(beta, 1.0).expect("beta checked positive");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

/// Rounds fractional shares of `total` to integers that sum to `total`,
/// giving the leftover units to the largest remainders (ties to the lower
/// index).
fn largest_remainder_counts(props: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = props
        .iter()
        .map(|p| (p * total as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = props[a] * total as f64 - (props[a] * total as f64).floor();
        let rb = props[b] * total as f64 - (props[b] * total as f64).floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..total - assigned {
        counts[order[i % props.len()]] += 1;
    }
    counts
}

/// Concatenates a client's local indices with the shared sample, rejecting
/// any overlap (the pool is built without replacement, so overlap means a
/// corrupted plan).
pub fn assemble_client_set(local: &[usize], shared: &[usize]) -> Result<Vec<usize>> {
    let local_set: HashSet<usize> = local.iter().copied().collect();
    if let Some(&dup) = shared.iter().find(|i| local_set.contains(i)) {
        return Err(Error::Partition(format!(
            "index {dup} appears in both the local set and the shared sample"
        )));
    }
    let mut combined = local.to_vec();
    combined.extend_from_slice(shared);
    Ok(combined)
}

impl PartitionPlan {
    /// Builds the full plan: pool, alpha sample, and the strategy split of
    /// the remainder. All randomness comes from streams derived from
    /// `seed`, so the plan is a pure function of its arguments.
    pub fn build(
        labels: &[usize],
        n_classes: usize,
        k: usize,
        strategy: Strategy,
        alpha_share: f64,
        shared_per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut pool_rng = derived_rng(seed, &[POOL_TAG]);
        let (shared_pool, remainder) =
            make_shared_pool(labels, n_classes, shared_per_class, &mut pool_rng)?;
        let mut sample_rng = derived_rng(seed, &[SAMPLE_TAG]);
        let shared_sample = sample_shared(&shared_pool, alpha_share, &mut sample_rng)?;
        let mut split_rng = derived_rng(seed, &[SPLIT_TAG]);
        let client_indices = match strategy {
            Strategy::Iid => partition_iid(&remainder, labels, k, n_classes, &mut split_rng)?,
            Strategy::OneClass => {
                partition_one_class(&remainder, labels, k, n_classes, &mut split_rng)?
            }
            Strategy::TwoClass => {
                partition_two_class(&remainder, labels, k, n_classes, &mut split_rng)?
            }
            Strategy::Dirichlet(beta) => {
                partition_dirichlet(&remainder, labels, k, beta, n_classes, &mut split_rng)?
            }
        };
        Ok(Self {
            strategy,
            alpha_share,
            shared_pool,
            shared_sample,
            client_indices,
        })
    }

    pub fn n_clients(&self) -> usize {
        self.client_indices.len()
    }

    /// Local indices plus the shared sample for one client.
    pub fn client_set(&self, client: usize) -> Result<Vec<usize>> {
        let local = self
            .client_indices
            .get(client)
            .ok_or_else(|| Error::Partition(format!("client {client} out of range")))?;
        assemble_client_set(local, &self.shared_sample)
    }

    /// Per-client class histograms over the combined (local + shared) sets.
    pub fn histograms(&self, labels: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(self.n_clients());
        for c in 0..self.n_clients() {
            let mut h = vec![0usize; n_classes];
            for i in self.client_set(c)? {
                h[labels[i]] += 1;
            }
            out.push(h);
        }
        Ok(out)
    }

    /// JSON summary for reports: strategy, sharing level, sizes, and
    /// per-client class histograms.
    pub fn summary(&self, labels: &[usize], n_classes: usize) -> Result<serde_json::Value> {
        let histograms = self.histograms(labels, n_classes)?;
        let beta = match self.strategy {
            Strategy::Dirichlet(b) => Some(b),
            _ => None,
        };
        Ok(serde_json::json!({
            "strategy": self.strategy.name(),
            "beta_dirichlet": beta,
            "alpha_share": self.alpha_share,
            "n_clients": self.n_clients(),
            "shared_pool_per_class": self.shared_pool.first().map_or(0, Vec::len),
            "shared_sample_size": self.shared_sample.len(),
            "client_local_sizes": self.client_indices.iter().map(Vec::len).collect::<Vec<_>>(),
            "client_class_histograms": histograms,
        }))
    }
}
