//! The two cluster-wise non-IID partitioning procedures.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng::{mix, rng_from};

use super::{Dataset, Partition};

/// Sample a Dirichlet(alpha) vector of the given dimension via normalized
/// Gamma draws.
fn dirichlet(dim: usize, alpha: f64, rng: &mut impl Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated > 0");
    let mut draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total <= 0.0 {
        // All draws underflowed (tiny alpha); dump the mass on one bucket.
        let lucky = rng.gen_range(0..dim);
        draws.iter_mut().for_each(|d| *d = 0.0);
        draws[lucky] = 1.0;
        return draws;
    }
    draws.iter_mut().for_each(|d| *d /= total);
    draws
}

/// Integerize proportions over `total` items by largest-remainder rounding.
/// Ties go to the lower index so the result is deterministic.
fn largest_remainder(total: usize, proportions: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(proportions.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(proportions.len());
    let mut assigned = 0usize;
    for (i, &p) in proportions.iter().enumerate() {
        let exact = p * total as f64;
        let base = exact.floor() as usize;
        counts.push(base);
        assigned += base;
        remainders.push((exact - base as f64, i));
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Move one sample out of the largest shard into each empty one.
fn repair_empty_shards(shards: &mut [Vec<usize>]) {
    loop {
        let Some(empty) = shards.iter().position(|s| s.is_empty()) else {
            return;
        };
        let donor = shards
            .iter()
            .enumerate()
            .max_by_key(|(_, s)| s.len())
            .map(|(i, _)| i)
            .expect("at least one shard");
        if shards[donor].len() <= 1 {
            // Nothing left to steal; leave the invariant check to the caller.
            return;
        }
        let moved = shards[donor].pop().expect("donor non-empty");
        shards[empty].push(moved);
    }
}

fn group_indices_by_class(d: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); d.n_classes()];
    for i in 0..d.n_samples() {
        by_class[d.label(i)].push(i);
    }
    by_class
}

/// Two-level Dirichlet split: per class across clusters with
/// `alpha_cluster`, then per class within each cluster across that cluster's
/// clients with `alpha_client`. Small `alpha_cluster` concentrates classes in
/// few clusters (strong inter-cluster shift); large `alpha_client` keeps
/// intra-cluster clients near-identical.
pub fn dirichlet_partition(
    d: &Dataset,
    m: usize,
    k_true: usize,
    alpha_cluster: f64,
    alpha_client: f64,
    seed: u64,
) -> Result<Partition> {
    if m == 0 || k_true == 0 {
        return Err(Error::validation("m and k_true must be >= 1"));
    }
    if m % k_true != 0 {
        return Err(Error::validation(format!(
            "m = {m} must be divisible by k_true = {k_true}"
        )));
    }
    if !(alpha_cluster > 0.0) || !(alpha_client > 0.0) {
        return Err(Error::validation("Dirichlet alphas must be > 0"));
    }
    let by_class = group_indices_by_class(d);
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < m {
            return Err(Error::validation(format!(
                "class {c} has {} samples, need at least m = {m}",
                idx.len()
            )));
        }
    }

    let clients_per_cluster = m / k_true;
    let mut rng = rng_from(mix(seed, 0));
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); m];

    // Level 1: split each class across clusters.
    let mut cluster_class_pools: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); by_class.len()]; k_true];
    for (c, idx) in by_class.iter().enumerate() {
        let mut pool = idx.clone();
        pool.shuffle(&mut rng);
        let props = dirichlet(k_true, alpha_cluster, &mut rng);
        let counts = largest_remainder(pool.len(), &props);
        let mut cursor = 0;
        for (k, &count) in counts.iter().enumerate() {
            cluster_class_pools[k][c] = pool[cursor..cursor + count].to_vec();
            cursor += count;
        }
    }

    // Level 2: split each cluster's share of each class across its clients.
    for (k, class_pools) in cluster_class_pools.iter().enumerate() {
        for pool in class_pools {
            if pool.is_empty() {
                continue;
            }
            let props = dirichlet(clients_per_cluster, alpha_client, &mut rng);
            let counts = largest_remainder(pool.len(), &props);
            let mut cursor = 0;
            for (j, &count) in counts.iter().enumerate() {
                let client = k * clients_per_cluster + j;
                shards[client].extend_from_slice(&pool[cursor..cursor + count]);
                cursor += count;
            }
        }
    }

    repair_empty_shards(&mut shards);
    for shard in &mut shards {
        shard.sort_unstable();
    }

    let partition = Partition {
        seed,
        cluster_of_client: (0..m).map(|i| i / clients_per_cluster).collect(),
        client_shards: shards,
    };
    partition.validate(d)?;
    Ok(partition)
}

/// n-class split: each cluster receives `n_cluster_classes` classes, each of
/// its clients a subset of `n_client_classes`; every class's samples are
/// dealt round-robin over the clients holding it, so within a cluster the
/// per-class shares differ by at most one sample.
pub fn nclass_partition(
    d: &Dataset,
    m: usize,
    k_true: usize,
    n_cluster_classes: usize,
    n_client_classes: usize,
    seed: u64,
) -> Result<Partition> {
    if m == 0 || k_true == 0 {
        return Err(Error::validation("m and k_true must be >= 1"));
    }
    if m % k_true != 0 {
        return Err(Error::validation(format!(
            "m = {m} must be divisible by k_true = {k_true}"
        )));
    }
    if n_client_classes == 0 {
        return Err(Error::validation("n_client_classes must be >= 1"));
    }
    if n_client_classes > n_cluster_classes {
        return Err(Error::validation(format!(
            "n_client_classes = {n_client_classes} exceeds n_cluster_classes = {n_cluster_classes}"
        )));
    }
    if n_cluster_classes > d.n_classes() {
        return Err(Error::validation(format!(
            "n_cluster_classes = {n_cluster_classes} exceeds the {} dataset classes",
            d.n_classes()
        )));
    }
    let by_class = group_indices_by_class(d);
    for (c, idx) in by_class.iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::validation(format!("class {c} has zero samples")));
        }
    }

    let clients_per_cluster = m / k_true;
    let mut rng = rng_from(mix(seed, 0));

    // Clusters may share classes: each cluster samples without replacement
    // from the full class list independently.
    let mut cluster_classes: Vec<Vec<usize>> = Vec::with_capacity(k_true);
    for _ in 0..k_true {
        let mut classes: Vec<usize> = (0..d.n_classes()).collect();
        classes.shuffle(&mut rng);
        classes.truncate(n_cluster_classes);
        classes.sort_unstable();
        cluster_classes.push(classes);
    }

    let mut client_classes: Vec<Vec<usize>> = Vec::with_capacity(m);
    for k in 0..k_true {
        for _ in 0..clients_per_cluster {
            let mut classes = cluster_classes[k].clone();
            classes.shuffle(&mut rng);
            classes.truncate(n_client_classes);
            classes.sort_unstable();
            client_classes.push(classes);
        }
    }

    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (c, idx) in by_class.iter().enumerate() {
        let holders: Vec<usize> = (0..m)
            .filter(|&i| client_classes[i].contains(&c))
            .collect();
        if holders.is_empty() {
            continue;
        }
        if idx.len() < holders.len() {
            return Err(Error::validation(format!(
                "class {c} has {} samples but {} clients hold it",
                idx.len(),
                holders.len()
            )));
        }
        let mut pool = idx.clone();
        pool.shuffle(&mut rng);
        for (t, &sample) in pool.iter().enumerate() {
            shards[holders[t % holders.len()]].push(sample);
        }
    }

    for shard in &mut shards {
        shard.sort_unstable();
    }
    let partition = Partition {
        seed,
        cluster_of_client: (0..m).map(|i| i / clients_per_cluster).collect(),
        client_shards: shards,
    };
    partition.validate(d)?;
    Ok(partition)
}
