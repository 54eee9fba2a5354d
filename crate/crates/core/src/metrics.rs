//! Model and clustering evaluation: accuracy, macro F1, clusterability,
//! cosine similarity, adjusted Rand index, and the federation objective R.

use serde::{Deserialize, Serialize};

use crate::algorithms::FederationState;
use crate::clustering::Assignment;
use crate::error::{Error, Result};
use crate::model::{self, ModelSpec};
use crate::param::ParamVector;

/// The four phases of one communication round, in protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Expectation,
    Maximization,
    Distribution,
    LocalUpdate,
}

/// Everything measured in one communication round. Serialized as one
/// JSON-lines record per round; the in-memory extras (`r_after_m`,
/// `step_order`) are diagnostics for theorem checks and tests and stay out
/// of the wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub f_after_e: f64,
    pub f_after_m: f64,
    pub f_after_l: f64,
    pub r_value: f64,
    pub micro_acc: f64,
    pub macro_f1: f64,
    /// Per-cluster clusterability; `null` when the weighted mean gradient
    /// has zero norm and B is undefined.
    pub b_per_cluster: Vec<Option<f64>>,
    pub eta_bounds: Vec<f64>,
    pub assignment_snapshot: Assignment,
    pub ari_vs_truth: f64,
    #[serde(skip)]
    pub r_after_m: Option<f64>,
    /// Weight-normalized mean over participating clients of the mean squared
    /// per-step gradient norm; the per-round term of the convergence-rate
    /// trend.
    #[serde(skip)]
    pub weighted_sq_grad: f64,
    #[serde(skip)]
    pub step_order: Vec<StepKind>,
}

/// Percentage of exact label matches.
pub fn micro_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::validation(format!(
            "prediction length {} differs from truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::validation("cannot score an empty prediction list"));
    }
    let matches = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(100.0 * matches as f64 / pred.len() as f64)
}

/// Unweighted mean of per-class F1 over all `n_classes` classes. A class
/// with neither true nor predicted instances contributes F1 = 0.
pub fn macro_f1(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::validation(format!(
            "prediction length {} differs from truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() || n_classes == 0 {
        return Err(Error::validation("macro F1 needs samples and n_classes >= 1"));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&y| y >= n_classes) {
        return Err(Error::validation(format!(
            "label {bad} out of range for {n_classes} classes"
        )));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fnc = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnc[t] += 1;
        }
    }
    let mut total = 0.0;
    for c in 0..n_classes {
        let denom = 2 * tp[c] + fp[c] + fnc[c];
        if denom > 0 {
            total += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    Ok(total / n_classes as f64)
}

/// Clusterability B of one cluster: the largest relative deviation of a
/// member's gradient from the cluster's weighted mean gradient. Returns
/// `None` when the mean gradient has zero norm (B undefined).
pub fn clusterability_b(
    client_grads: &[ParamVector],
    weights: &[f64],
) -> Result<Option<f64>> {
    if client_grads.is_empty() {
        return Err(Error::validation("clusterability needs at least one member"));
    }
    if client_grads.len() != weights.len() {
        return Err(Error::validation("one weight per member gradient required"));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::validation("member weights must be > 0"));
    }
    if client_grads
        .windows(2)
        .any(|w| !w[0].same_layout(&w[1]))
    {
        return Err(Error::shape("member gradients have mixed layouts"));
    }
    let total: f64 = weights.iter().sum();
    let mut mean = ParamVector::zeros(client_grads[0].layout().clone());
    for (g, &w) in client_grads.iter().zip(weights) {
        mean.add_scaled(g, w / total)?;
    }
    let mean_norm = mean.l2_norm();
    if mean_norm == 0.0 {
        return Ok(None);
    }
    let mut worst = 0.0f64;
    for g in client_grads {
        worst = worst.max(mean.distance(g)?);
    }
    Ok(Some(worst / mean_norm))
}

/// Pairwise cosine similarities; diagonal exactly 1, symmetric by
/// construction. Errors on any zero-norm vector.
pub fn cosine_similarity_matrix(vectors: &[ParamVector]) -> Result<Vec<Vec<f64>>> {
    if vectors.is_empty() {
        return Err(Error::validation("cosine matrix needs at least one vector"));
    }
    let norms: Vec<f64> = vectors.iter().map(|v| v.l2_norm()).collect();
    if let Some(bad) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::validation(format!(
            "vector {bad} has zero norm; cosine undefined"
        )));
    }
    let n = vectors.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        s[i][i] = 1.0;
        for j in (i + 1)..n {
            let dot: f64 = vectors[i]
                .values()
                .iter()
                .zip(vectors[j].values())
                .map(|(a, b)| a * b)
                .sum();
            let sim = dot / (norms[i] * norms[j]);
            s[i][j] = sim;
            s[j][i] = sim;
        }
    }
    Ok(s)
}

fn comb2(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// True when the two labelings induce the same partition (a relabeling
/// bijection exists).
fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = std::collections::HashMap::new();
    let mut bwd = std::collections::HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Adjusted Rand index between two assignments via the contingency-table
/// formula; 1.0 iff the partitions are identical up to relabeling.
pub fn adjusted_rand_index(a: &Assignment, b: &Assignment) -> Result<f64> {
    if a.n_clients() != b.n_clients() {
        return Err(Error::validation(format!(
            "assignments cover {} vs {} clients",
            a.n_clients(),
            b.n_clients()
        )));
    }
    if a.n_clients() == 0 {
        return Err(Error::validation("assignments are empty"));
    }
    let mut table = std::collections::HashMap::new();
    let mut row = std::collections::HashMap::new();
    let mut col = std::collections::HashMap::new();
    for (&x, &y) in a.cluster_of.iter().zip(&b.cluster_of) {
        *table.entry((x, y)).or_insert(0u64) += 1;
        *row.entry(x).or_insert(0u64) += 1;
        *col.entry(y).or_insert(0u64) += 1;
    }
    let index: f64 = table.values().map(|&n| comb2(n)).sum();
    let sum_rows: f64 = row.values().map(|&n| comb2(n)).sum();
    let sum_cols: f64 = col.values().map(|&n| comb2(n)).sum();
    let pairs = comb2(a.n_clients() as u64);
    if pairs == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / pairs;
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        return Ok(if same_partition(&a.cluster_of, &b.cluster_of) {
            1.0
        } else {
            0.0
        });
    }
    Ok((index - expected) / denom)
}

/// The federation objective R: the weight-normalized sum over clients of
/// the loss of their cluster's model on their own training shard.
pub fn objective_r(state: &FederationState, spec: &ModelSpec) -> Result<f64> {
    let mut total = 0.0;
    let mut weight_total = 0.0;
    for client in &state.clients {
        let cluster_model = &state.clusters[client.cluster].model;
        let l = model::loss(cluster_model, spec, state.dataset(), &client.train_shard)?;
        total += client.weight * l;
        weight_total += client.weight;
    }
    Ok(total / weight_total)
}
