//! Datasets, client shards and the cluster-wise non-IID partitioners.

mod idx;
mod partition;

pub use idx::load_idx;
pub use partition::{dirichlet_partition, nclass_partition};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix, rng_from};

/// An in-memory labeled dataset: row-major features plus integer class ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::validation("dataset must have at least one sample"));
        }
        if n_features == 0 {
            return Err(Error::validation("n_features must be >= 1"));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::shape(format!(
                "feature matrix has {} values, expected {} ({} samples x {} features)",
                features.len(),
                labels.len() * n_features,
                labels.len(),
                n_features
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Per-class sample counts over an index subset.
    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut hist = vec![0usize; self.n_classes];
        for &i in indices {
            hist[self.labels[i]] += 1;
        }
        hist
    }
}

/// A split of a parent dataset into per-client shards, with the ground-truth
/// cluster id of each client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub seed: u64,
    pub cluster_of_client: Vec<usize>,
    #[serde(rename = "shards")]
    pub client_shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn n_clients(&self) -> usize {
        self.client_shards.len()
    }

    /// Check the partition invariants against its parent dataset: shards
    /// pairwise disjoint, all non-empty, indices in range, one ground-truth
    /// cluster per client.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.cluster_of_client.len() != self.client_shards.len() {
            return Err(Error::validation(
                "cluster_of_client length differs from shard count",
            ));
        }
        let mut seen = vec![false; dataset.n_samples()];
        for (client, shard) in self.client_shards.iter().enumerate() {
            if shard.is_empty() {
                return Err(Error::validation(format!("client {client} has an empty shard")));
            }
            for &i in shard {
                if i >= dataset.n_samples() {
                    return Err(Error::validation(format!(
                        "client {client} references sample {i} outside the dataset"
                    )));
                }
                if seen[i] {
                    return Err(Error::validation(format!(
                        "sample {i} appears in more than one shard"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

/// Configuration of the synthetic concept-shift generator.
///
/// Features are drawn from a shared Gaussian mixture with one component per
/// class; each ground-truth cluster relabels the components through its own
/// label permutation, so clusters share P(x) but differ in P(y|x) and are
/// identifiable from model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_clusters_true: usize,
    pub clients_per_cluster: usize,
    pub samples_per_client: usize,
    pub n_features: usize,
    pub n_classes: usize,
    /// Pairwise distance between class-conditional feature means.
    pub cluster_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_clusters_true", self.n_clusters_true),
            ("clients_per_cluster", self.clients_per_cluster),
            ("samples_per_client", self.samples_per_client),
            ("n_features", self.n_features),
            ("n_classes", self.n_classes),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::validation(format!("{name} must be >= 1")));
            }
        }
        if !(self.noise_std > 0.0) {
            return Err(Error::validation("noise_std must be > 0"));
        }
        if !(self.cluster_separation >= 0.0) {
            return Err(Error::validation("cluster_separation must be >= 0"));
        }
        Ok(())
    }
}

/// Class-conditional feature means placed so every distinct pair sits exactly
/// `separation` apart (axis-aligned, sign-flipped on wrap-around).
fn class_means(n_classes: usize, n_features: usize, separation: f64) -> Vec<Vec<f64>> {
    let scale = separation / std::f64::consts::SQRT_2;
    (0..n_classes)
        .map(|c| {
            let mut mu = vec![0.0; n_features];
            let axis = c % n_features;
            let sign = if (c / n_features) % 2 == 0 { 1.0 } else { -1.0 };
            mu[axis] = sign * scale;
            mu
        })
        .collect()
}

fn distinct_permutations(
    n_classes: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut tries = 0usize;
    while perms.len() < k {
        let mut p: Vec<usize> = (0..n_classes).collect();
        p.shuffle(rng);
        if !perms.contains(&p) {
            perms.push(p);
        }
        tries += 1;
        if tries > 10_000 {
            return Err(Error::validation(format!(
                "cannot draw {k} distinct label permutations over {n_classes} classes"
            )));
        }
    }
    Ok(perms)
}

/// Generate a synthetic dataset with cluster-wise concept shift and the
/// matching ground-truth partition. Fully deterministic given `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Partition)> {
    spec.validate()?;
    let c = spec.n_classes;
    let f = spec.n_features;
    let means = class_means(c, f, spec.cluster_separation);

    let mut setup_rng = rng_from(mix(spec.seed, 0));
    let perms = distinct_permutations(c, spec.n_clusters_true, &mut setup_rng)?;

    let m = spec.n_clusters_true * spec.clients_per_cluster;
    let n_total = m * spec.samples_per_client;
    let mut features = Vec::with_capacity(n_total * f);
    let mut labels = Vec::with_capacity(n_total);
    let mut shards = Vec::with_capacity(m);
    let mut cluster_of_client = Vec::with_capacity(m);

    let noise = Normal::new(0.0, spec.noise_std).expect("noise_std validated > 0");
    for k in 0..spec.n_clusters_true {
        for j in 0..spec.clients_per_cluster {
            let client = k * spec.clients_per_cluster + j;
            let mut rng = rng_from(mix(spec.seed, 1000 + client as u64));
            let start = labels.len();
            for _ in 0..spec.samples_per_client {
                let latent = rng.gen_range(0..c);
                for feat in 0..f {
                    features.push(means[latent][feat] + noise.sample(&mut rng));
                }
                labels.push(perms[k][latent]);
            }
            shards.push((start..labels.len()).collect());
            cluster_of_client.push(k);
        }
    }

    let dataset = Dataset::new(features, f, labels, c)?;
    let partition = Partition {
        seed: spec.seed,
        cluster_of_client,
        client_shards: shards,
    };
    partition.validate(&dataset)?;
    Ok((dataset, partition))
}

/// Deterministic 80/20 train/test split of one client shard. Shards too
/// small to spare a test sample keep everything in train and an empty test.
pub fn holdout_split(shard: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order = shard.to_vec();
    order.shuffle(&mut rng_from(seed));
    let n_test = shard.len() / 5;
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
