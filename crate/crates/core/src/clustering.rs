//! Weighted k-means over client parameter vectors.
//!
//! The E step assigns each client to its nearest centroid in parameter
//! space, the M step recomputes each centroid as the importance-weighted
//! mean of its members, and `objective_f` is the weighted clustering
//! objective both steps monotonically decrease. Empty clusters keep their
//! previous centroid so the monotonicity is preserved exactly.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::param::ParamVector;
use crate::rng::rng_from;

/// Per-client cluster index; the dense encoding of the 0/1 assignment
/// matrix with one 1 per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub cluster_of: Vec<usize>,
}

impl Assignment {
    pub fn new(cluster_of: Vec<usize>) -> Self {
        Assignment { cluster_of }
    }

    pub fn n_clients(&self) -> usize {
        self.cluster_of.len()
    }

    /// Client ids belonging to each of `k` clusters, in ascending order.
    pub fn members(&self, k: usize) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); k];
        for (client, &cluster) in self.cluster_of.iter().enumerate() {
            members[cluster].push(client);
        }
        members
    }
}

/// Positive importance weights, one per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    lambda: Vec<f64>,
}

impl Weights {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::validation("weights must be non-empty"));
        }
        if lambda.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::validation("all weights must be > 0"));
        }
        Ok(Weights { lambda })
    }

    pub fn uniform(m: usize) -> Self {
        Weights {
            lambda: vec![1.0; m],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda
    }

    pub fn total(&self) -> f64 {
        self.lambda.iter().sum()
    }
}

/// The K cluster centroids, all sharing one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub omega: Vec<ParamVector>,
}

impl Centroids {
    pub fn new(omega: Vec<ParamVector>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::validation("need at least one centroid"));
        }
        if omega.windows(2).any(|w| !w[0].same_layout(&w[1])) {
            return Err(Error::shape("centroids have mixed layouts"));
        }
        Ok(Centroids { omega })
    }

    pub fn k(&self) -> usize {
        self.omega.len()
    }
}

fn check_inputs(reps: &[ParamVector], centroids: &Centroids, weights: &Weights) -> Result<()> {
    if reps.is_empty() {
        return Err(Error::validation("need at least one client representation"));
    }
    if weights.values().len() != reps.len() {
        return Err(Error::validation(format!(
            "{} weights for {} clients",
            weights.values().len(),
            reps.len()
        )));
    }
    if reps.iter().any(|r| !r.same_layout(&centroids.omega[0])) {
        return Err(Error::shape("client representation layout differs from centroids"));
    }
    Ok(())
}

/// Assign every client to the centroid minimizing the weighted squared
/// distance. The positive weight is constant over k, so this is the plain
/// nearest-centroid argmin; ties break toward the lowest cluster index.
pub fn e_step(reps: &[ParamVector], centroids: &Centroids, weights: &Weights) -> Result<Assignment> {
    check_inputs(reps, centroids, weights)?;
    let cluster_of = par_map(reps, |rep| {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, omega) in centroids.omega.iter().enumerate() {
            let d = rep.distance_sq(omega).expect("layout checked");
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    });
    Ok(Assignment::new(cluster_of))
}

/// Recompute each centroid as the weighted mean of its members' reps.
/// Clusters with no members keep their previous centroid, supplied by the
/// caller as `prev`.
pub fn m_step(
    reps: &[ParamVector],
    assignment: &Assignment,
    weights: &Weights,
    prev: &Centroids,
) -> Result<Centroids> {
    check_inputs(reps, prev, weights)?;
    if assignment.n_clients() != reps.len() {
        return Err(Error::validation("assignment length differs from reps"));
    }
    if let Some(&bad) = assignment.cluster_of.iter().find(|&&k| k >= prev.k()) {
        return Err(Error::validation(format!(
            "assignment references cluster {bad} but only {} exist",
            prev.k()
        )));
    }
    let members = assignment.members(prev.k());
    let omega = members
        .iter()
        .enumerate()
        .map(|(k, ids)| {
            if ids.is_empty() {
                return Ok(prev.omega[k].clone());
            }
            let total: f64 = ids.iter().map(|&i| weights.values()[i]).sum();
            let mut mean = ParamVector::zeros(reps[0].layout().clone());
            for &i in ids {
                mean.add_scaled(&reps[i], weights.values()[i] / total)?;
            }
            Ok(mean)
        })
        .collect::<Result<Vec<_>>>()?;
    Centroids::new(omega)
}

/// The clustering objective: the globally weight-normalized sum of weighted
/// squared distances from each client rep to its assigned centroid.
pub fn objective_f(
    reps: &[ParamVector],
    assignment: &Assignment,
    centroids: &Centroids,
    weights: &Weights,
) -> Result<f64> {
    check_inputs(reps, centroids, weights)?;
    if assignment.n_clients() != reps.len() {
        return Err(Error::validation("assignment length differs from reps"));
    }
    let mut total = 0.0;
    for (i, rep) in reps.iter().enumerate() {
        let k = assignment.cluster_of[i];
        total += weights.values()[i] * rep.distance_sq(&centroids.omega[k])?;
    }
    Ok(total / weights.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// K distinct client reps chosen uniformly.
    RandomClients,
    /// Distance-squared-proportional seeding.
    Kmeanspp,
}

/// Pick the initial centroids from the client reps, deterministically under
/// the seed.
pub fn init_centroids(
    reps: &[ParamVector],
    k: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<Centroids> {
    if reps.is_empty() {
        return Err(Error::validation("need at least one client representation"));
    }
    if k == 0 {
        return Err(Error::validation("k must be >= 1"));
    }
    let mut rng = rng_from(seed);
    match strategy {
        InitStrategy::RandomClients => {
            if k > reps.len() {
                return Err(Error::validation(format!(
                    "k = {k} exceeds the {} available client reps",
                    reps.len()
                )));
            }
            let mut ids: Vec<usize> = (0..reps.len()).collect();
            ids.shuffle(&mut rng);
            ids.truncate(k);
            Centroids::new(ids.into_iter().map(|i| reps[i].clone()).collect())
        }
        InitStrategy::Kmeanspp => {
            let mut chosen: Vec<usize> = vec![rng.gen_range(0..reps.len())];
            while chosen.len() < k {
                let d2: Vec<f64> = reps
                    .iter()
                    .map(|rep| {
                        chosen
                            .iter()
                            .map(|&c| rep.distance_sq(&reps[c]).expect("same layout"))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let mut target = rng.gen_range(0.0..total);
                    let mut pick = d2.len() - 1;
                    for (i, &d) in d2.iter().enumerate() {
                        if target < d {
                            pick = i;
                            break;
                        }
                        target -= d;
                    }
                    pick
                } else {
                    // All reps coincide with a chosen centroid; duplicates are
                    // the only option left.
                    rng.gen_range(0..reps.len())
                };
                chosen.push(next);
            }
            Centroids::new(chosen.into_iter().map(|i| reps[i].clone()).collect())
        }
    }
}
