//! Federated training strategies.
//!
//! All clustered strategies share the same four-step communication round:
//! assignment (E), aggregation (M), distribution (D) and Q local SGD steps
//! (L). WeCFL assigns by weighted parameter distance, FeSEM is WeCFL with
//! uniform weights, IFCA assigns by per-cluster training loss, and
//! FedAvg/FedProx are the single-cluster special case (FedProx adds a
//! proximal pull toward the broadcast model). Ensembles of independent
//! FedAvg/FedProx runs are combined by soft voting at prediction time.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clustering::{self, Assignment, Centroids, InitStrategy, Weights};
use crate::data::{holdout_split, Dataset, Partition};
use crate::error::{Error, Result};
use crate::metrics::{self, RoundRecord, StepKind};
use crate::model::{self, ModelSpec, SgdConfig};
use crate::parallel::par_map;
use crate::param::{ParamVector, RepMask};
use crate::rng::{mix, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleBase {
    FedAvg,
    FedProx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    FedAvg,
    FedProx,
    Ifca,
    Fesem,
    Wecfl,
    /// K independent FedAvg/FedProx runs soft-voted at evaluation time;
    /// the run count is `k_clusters`.
    Ensemble(EnsembleBase),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    ShardSize,
    Uniform,
}

/// Learning-rate clamp applied per client per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaClamp {
    /// No clamp; use the configured learning rate.
    None,
    /// eta_i <= ||omega_i - Omega_k|| / (Q U), the clustering-objective
    /// convergence bound.
    ClusteringBound,
    /// The clustering bound plus the descent-bound term
    /// (||grad||^2 - B U^2) / ||grad||^2 * 2 / beta, plugged in with the
    /// current full-batch gradient (deterministic regime, sigma = 0).
    DescentBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub k_clusters: usize,
    pub sgd: SgdConfig,
    pub weight_mode: WeightMode,
    /// Fraction of clients running the local-update step each round.
    pub participation: f64,
    /// Which parameter segments form the clustering representation.
    pub rep_mask: RepMask,
    pub centroid_init: InitStrategy,
    pub eta_clamp: EtaClamp,
}

impl Strategy {
    pub fn new(kind: StrategyKind, k_clusters: usize, sgd: SgdConfig) -> Self {
        Strategy {
            kind,
            k_clusters,
            sgd,
            weight_mode: WeightMode::ShardSize,
            participation: 1.0,
            rep_mask: RepMask::Full,
            centroid_init: InitStrategy::RandomClients,
            eta_clamp: EtaClamp::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.k_clusters == 0 {
            return Err(Error::validation("k_clusters must be >= 1"));
        }
        if matches!(self.kind, StrategyKind::FedAvg | StrategyKind::FedProx)
            && self.k_clusters != 1
        {
            return Err(Error::validation(format!(
                "{:?} requires k_clusters = 1, got {}",
                self.kind, self.k_clusters
            )));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::validation("participation must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientState {
    pub params: ParamVector,
    pub weight: f64,
    pub train_shard: Vec<usize>,
    pub test_shard: Vec<usize>,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub model: ParamVector,
    pub members: Vec<usize>,
}

/// All mutable state of one simulated federation.
#[derive(Debug, Clone)]
pub struct FederationState {
    dataset: Arc<Dataset>,
    spec: ModelSpec,
    pub clients: Vec<ClientState>,
    pub clusters: Vec<ClusterState>,
    pub round: usize,
    /// Running max of every stochastic gradient norm observed so far; the
    /// online estimate of the bound U.
    pub u_estimate: f64,
    /// Smoothness plug-in for the descent-bound clamp.
    pub beta: f64,
    /// Ground-truth cluster of each client, for recovery metrics.
    pub truth: Vec<usize>,
}

impl FederationState {
    pub fn new(
        dataset: Arc<Dataset>,
        spec: ModelSpec,
        clients: Vec<ClientState>,
        clusters: Vec<ClusterState>,
        truth: Vec<usize>,
    ) -> Result<Self> {
        spec.validate()?;
        if clients.is_empty() || clusters.is_empty() {
            return Err(Error::validation("federation needs clients and clusters"));
        }
        if truth.len() != clients.len() {
            return Err(Error::validation("one ground-truth cluster per client required"));
        }
        let layout = spec.layout();
        for (i, c) in clients.iter().enumerate() {
            if c.cluster >= clusters.len() {
                return Err(Error::validation(format!(
                    "client {i} references cluster {} of {}",
                    c.cluster,
                    clusters.len()
                )));
            }
            if c.params.layout() != &layout {
                return Err(Error::shape(format!("client {i} params do not match the model layout")));
            }
            if c.train_shard.is_empty() {
                return Err(Error::validation(format!("client {i} has an empty train shard")));
            }
            if !(c.weight > 0.0) {
                return Err(Error::validation(format!("client {i} has non-positive weight")));
            }
        }
        if clusters.iter().any(|c| c.model.layout() != &layout) {
            return Err(Error::shape("cluster model does not match the model layout"));
        }
        let all_train: Vec<usize> = clients.iter().flat_map(|c| c.train_shard.clone()).collect();
        let beta = model::smoothness_bound(&dataset, &all_train);
        Ok(FederationState {
            dataset,
            spec,
            clients,
            clusters,
            round: 0,
            u_estimate: 0.0,
            beta,
            truth,
        })
    }

    /// Assemble a federation from a dataset and partition: 80/20 holdout
    /// split per shard, per-client parameter init, centroids seeded from
    /// client parameters, and an initial nearest-centroid assignment.
    pub fn build(
        dataset: Arc<Dataset>,
        partition: &Partition,
        spec: &ModelSpec,
        strategy: &Strategy,
        seed_data: u64,
        seed_init: u64,
    ) -> Result<Self> {
        strategy.validate()?;
        spec.validate()?;
        partition.validate(&dataset)?;
        let m = partition.n_clients();
        let uniform_weights = matches!(strategy.weight_mode, WeightMode::Uniform)
            || strategy.kind == StrategyKind::Fesem;

        let mut clients = Vec::with_capacity(m);
        for (i, shard) in partition.client_shards.iter().enumerate() {
            let (train, test) = holdout_split(shard, mix(seed_data, 7000 + i as u64));
            let weight = if uniform_weights {
                1.0
            } else {
                train.len() as f64
            };
            clients.push(ClientState {
                params: spec.init_params(mix(seed_init, i as u64)),
                weight,
                train_shard: train,
                test_shard: test,
                cluster: 0,
            });
        }

        let reps: Vec<ParamVector> = clients.iter().map(|c| c.params.clone()).collect();
        let centroids = clustering::init_centroids(
            &reps,
            strategy.k_clusters,
            strategy.centroid_init,
            mix(seed_init, 0xC3),
        )?;
        let weights = Weights::new(clients.iter().map(|c| c.weight).collect())?;
        let assignment = clustering::e_step(&reps, &centroids, &weights)?;
        for (i, &k) in assignment.cluster_of.iter().enumerate() {
            clients[i].cluster = k;
        }
        let members = assignment.members(strategy.k_clusters);
        let clusters = centroids
            .omega
            .into_iter()
            .zip(members)
            .map(|(model, members)| ClusterState { model, members })
            .collect();

        FederationState::new(
            dataset,
            spec.clone(),
            clients,
            clusters,
            partition.cluster_of_client.clone(),
        )
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }
}

/// Theorem 1's per-client learning-rate bound ||omega_i - Omega_k|| / (Q U).
/// A coincident client yields 0; U = 0 with a displaced client yields the
/// +infinity sentinel (a null gradient field admits any learning rate).
pub fn theorem_eta_bound(
    client_params: &ParamVector,
    centroid: &ParamVector,
    q: usize,
    u_estimate: f64,
) -> Result<f64> {
    if q == 0 {
        return Err(Error::validation("q must be >= 1"));
    }
    if !(u_estimate >= 0.0) {
        return Err(Error::validation("u_estimate must be >= 0"));
    }
    Ok(eta_bound_scalar(
        client_params.distance(centroid)?,
        q,
        u_estimate,
    ))
}

fn eta_bound_scalar(dist: f64, q: usize, u: f64) -> f64 {
    if dist == 0.0 {
        0.0
    } else if u == 0.0 {
        f64::INFINITY
    } else {
        dist / (q as f64 * u)
    }
}

/// Soft voting: the elementwise mean of each model's class-probability
/// output. Rows still sum to 1.
pub fn ensemble_predict(
    models: &[ParamVector],
    spec: &ModelSpec,
    features: &[f64],
) -> Result<Vec<f64>> {
    if models.is_empty() {
        return Err(Error::validation("ensemble needs at least one model"));
    }
    let mut mean = model::forward(&models[0], spec, features)?;
    for m in &models[1..] {
        let probs = model::forward(m, spec, features)?;
        for (acc, p) in mean.iter_mut().zip(probs) {
            *acc += p;
        }
    }
    let k = models.len() as f64;
    mean.iter_mut().for_each(|p| *p /= k);
    Ok(mean)
}

/// IFCA's assignment rule: each client joins the cluster whose model attains
/// the minimum loss on the client's shard, ties toward the lowest index.
pub fn ifca_assign(loss_table: &[Vec<f64>]) -> Result<Assignment> {
    if loss_table.is_empty() || loss_table[0].is_empty() {
        return Err(Error::validation("loss table must be m x K with m, K >= 1"));
    }
    let cluster_of = loss_table
        .iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_loss = f64::INFINITY;
            for (k, &l) in row.iter().enumerate() {
                if l < best_loss {
                    best_loss = l;
                    best = k;
                }
            }
            best
        })
        .collect();
    Ok(Assignment::new(cluster_of))
}

enum AssignRule {
    ParamDistance,
    LossBased,
}

fn effective_weights(state: &FederationState, strategy: &Strategy) -> Result<Weights> {
    if strategy.kind == StrategyKind::Fesem {
        Ok(Weights::uniform(state.n_clients()))
    } else {
        Weights::new(state.clients.iter().map(|c| c.weight).collect())
    }
}

/// Clients running the local-update step this round.
fn participants(state: &FederationState, strategy: &Strategy, seed: u64) -> Vec<bool> {
    let m = state.n_clients();
    if strategy.participation >= 1.0 {
        return vec![true; m];
    }
    let take = ((strategy.participation * m as f64).ceil() as usize).clamp(1, m);
    let mut ids: Vec<usize> = (0..m).collect();
    use rand::seq::SliceRandom;
    ids.shuffle(&mut rng_from(mix(seed, 0x9A47)));
    let mut mask = vec![false; m];
    for &i in ids.iter().take(take) {
        mask[i] = true;
    }
    mask
}

/// One four-step communication round shared by every strategy.
fn run_em_round(
    state: &mut FederationState,
    strategy: &Strategy,
    seed: u64,
    assign_rule: AssignRule,
    prox: bool,
) -> Result<RoundRecord> {
    let weights = effective_weights(state, strategy)?;
    let spec = state.spec.clone();
    let dataset = Arc::clone(&state.dataset);
    let mask = &strategy.rep_mask;
    let q = strategy.sgd.local_steps;
    let mut step_order = Vec::with_capacity(4);

    let reps: Vec<ParamVector> = state
        .clients
        .iter()
        .map(|c| mask.extract(&c.params))
        .collect::<Result<Vec<_>>>()?;
    let prev_masked = Centroids::new(
        state
            .clusters
            .iter()
            .map(|c| mask.extract(&c.model))
            .collect::<Result<Vec<_>>>()?,
    )?;

    // Expectation step.
    let assignment = match assign_rule {
        AssignRule::ParamDistance => clustering::e_step(&reps, &prev_masked, &weights)?,
        AssignRule::LossBased => {
            let models: Vec<ParamVector> =
                state.clusters.iter().map(|c| c.model.clone()).collect();
            let shards: Vec<&[usize]> = state
                .clients
                .iter()
                .map(|c| c.train_shard.as_slice())
                .collect();
            let table: Vec<Vec<f64>> = par_map(&shards, |shard| {
                models
                    .iter()
                    .map(|m| model::loss(m, &spec, &dataset, shard).expect("state validated"))
                    .collect()
            });
            ifca_assign(&table)?
        }
    };
    step_order.push(StepKind::Expectation);
    let f_after_e = clustering::objective_f(&reps, &assignment, &prev_masked, &weights)?;

    // Maximization (aggregation) step, in the full parameter space.
    let full_reps: Vec<ParamVector> = state.clients.iter().map(|c| c.params.clone()).collect();
    let prev_full = Centroids::new(state.clusters.iter().map(|c| c.model.clone()).collect())?;
    let new_full = clustering::m_step(&full_reps, &assignment, &weights, &prev_full)?;
    let new_masked = Centroids::new(
        new_full
            .omega
            .iter()
            .map(|m| mask.extract(m))
            .collect::<Result<Vec<_>>>()?,
    )?;
    step_order.push(StepKind::Maximization);
    let f_after_m = clustering::objective_f(&reps, &assignment, &new_masked, &weights)?;

    // Distances from each client's pre-distribution representation to its
    // new centroid, for the learning-rate bound.
    let dists: Vec<f64> = reps
        .iter()
        .enumerate()
        .map(|(i, rep)| rep.distance(&new_masked.omega[assignment.cluster_of[i]]))
        .collect::<Result<Vec<_>>>()?;

    // Distribution step: participants receive their cluster model.
    let active = participants(state, strategy, seed);
    for (i, client) in state.clients.iter_mut().enumerate() {
        client.cluster = assignment.cluster_of[i];
        if active[i] {
            client.params = new_full.omega[assignment.cluster_of[i]].clone();
        }
    }
    let members = assignment.members(state.clusters.len());
    for (k, cluster) in state.clusters.iter_mut().enumerate() {
        cluster.model = new_full.omega[k].clone();
        cluster.members = members[k].clone();
    }
    step_order.push(StepKind::Distribution);

    // R at the M step: cluster models scored on their members' train shards.
    let r_after_m = metrics::objective_r(state, &spec)?;

    // Full-batch gradients at the distributed parameters: the clusterability
    // snapshot and the U plug-in, momentum and proximal terms excluded.
    let grad_inputs: Vec<(ParamVector, Vec<usize>)> = state
        .clients
        .iter()
        .map(|c| (c.params.clone(), c.train_shard.clone()))
        .collect();
    let full_grads: Vec<ParamVector> = par_map(&grad_inputs, |(params, shard)| {
        model::gradient(params, &spec, &dataset, shard, None, 0.0).expect("state validated")
    });
    let mut u = state.u_estimate;
    for g in &full_grads {
        u = u.max(g.l2_norm());
    }
    state.u_estimate = u;

    let b_per_cluster: Vec<Option<f64>> = members
        .iter()
        .map(|ids| {
            if ids.is_empty() {
                return Ok(None);
            }
            let grads: Vec<ParamVector> = ids.iter().map(|&i| full_grads[i].clone()).collect();
            let w: Vec<f64> = ids.iter().map(|&i| weights.values()[i]).collect();
            metrics::clusterability_b(&grads, &w)
        })
        .collect::<Result<Vec<_>>>()?;

    let eta_bounds: Vec<f64> = dists.iter().map(|&d| eta_bound_scalar(d, q, u)).collect();

    let per_client_lr: Vec<f64> = (0..state.n_clients())
        .map(|i| {
            let base = strategy.sgd.learning_rate;
            match strategy.eta_clamp {
                EtaClamp::None => base,
                EtaClamp::ClusteringBound => base.min(eta_bounds[i]),
                EtaClamp::DescentBound => {
                    let g2 = {
                        let n = full_grads[i].l2_norm();
                        n * n
                    };
                    let b = b_per_cluster[assignment.cluster_of[i]].unwrap_or(0.0);
                    let descent = if g2 <= 0.0 {
                        0.0
                    } else {
                        (((g2 - b * u * u) / g2) * 2.0 / state.beta).max(0.0)
                    };
                    base.min(eta_bounds[i]).min(descent)
                }
            }
        })
        .collect();

    // Local update step.
    let update_inputs: Vec<usize> = (0..state.n_clients()).collect();
    let updates: Vec<Option<(ParamVector, model::UpdateTrace)>> = par_map(&update_inputs, |&i| {
        if !active[i] {
            return None;
        }
        let client = &state.clients[i];
        let mut cfg = strategy.sgd.clone();
        cfg.learning_rate = per_client_lr[i];
        if !prox {
            cfg.prox_mu = 0.0;
        }
        Some(
            model::local_update(
                &client.params,
                &spec,
                &dataset,
                &client.train_shard,
                &cfg,
                mix(seed, 1000 + i as u64),
            )
            .expect("state validated"),
        )
    });
    step_order.push(StepKind::LocalUpdate);

    let mut u = state.u_estimate;
    for update in updates.iter().flatten() {
        for &n in &update.1.grad_norms {
            u = u.max(n);
        }
    }
    state.u_estimate = u;

    // Per-round term of the convergence-rate trend: the weight-normalized
    // mean over participants of the mean squared per-step gradient norm.
    let mut sq_grad_total = 0.0;
    let mut sq_grad_weight = 0.0;
    for (i, update) in updates.iter().enumerate() {
        if let Some((_, trace)) = update {
            let mean_sq = trace.grad_norms.iter().map(|n| n * n).sum::<f64>()
                / trace.grad_norms.len() as f64;
            sq_grad_total += weights.values()[i] * mean_sq;
            sq_grad_weight += weights.values()[i];
        }
    }
    let weighted_sq_grad = if sq_grad_weight > 0.0 {
        sq_grad_total / sq_grad_weight
    } else {
        0.0
    };

    for (i, update) in updates.into_iter().enumerate() {
        if let Some((params, _)) = update {
            state.clients[i].params = params;
        }
    }

    let new_reps: Vec<ParamVector> = state
        .clients
        .iter()
        .map(|c| mask.extract(&c.params))
        .collect::<Result<Vec<_>>>()?;
    let f_after_l = clustering::objective_f(&new_reps, &assignment, &new_masked, &weights)?;

    // R after the local update: each client's own freshly trained model on
    // its own train shard.
    let loss_inputs: Vec<(ParamVector, Vec<usize>)> = state
        .clients
        .iter()
        .map(|c| (c.params.clone(), c.train_shard.clone()))
        .collect();
    let client_losses: Vec<f64> = par_map(&loss_inputs, |(params, shard)| {
        model::loss(params, &spec, &dataset, shard).expect("state validated")
    });
    let r_value = client_losses
        .iter()
        .zip(weights.values())
        .map(|(l, w)| l * w)
        .sum::<f64>()
        / weights.total();

    // Evaluation on the client-wise held-out test shards.
    let eval_inputs: Vec<(ParamVector, Vec<usize>)> = state
        .clients
        .iter()
        .map(|c| (c.params.clone(), c.test_shard.clone()))
        .collect();
    let predictions: Vec<(Vec<usize>, Vec<usize>)> = par_map(&eval_inputs, |(params, shard)| {
        if shard.is_empty() {
            return (Vec::new(), Vec::new());
        }
        let features: Vec<f64> = shard.iter().flat_map(|&i| dataset.row(i).to_vec()).collect();
        let probs = model::forward(params, &spec, &features).expect("state validated");
        let pred: Vec<usize> = probs
            .chunks(spec.n_classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probs"))
                    .map(|(c, _)| c)
                    .expect("non-empty row")
            })
            .collect();
        let truth: Vec<usize> = shard.iter().map(|&i| dataset.label(i)).collect();
        (pred, truth)
    });
    let mut pooled_pred = Vec::new();
    let mut pooled_truth = Vec::new();
    for (pred, truth) in predictions {
        pooled_pred.extend(pred);
        pooled_truth.extend(truth);
    }
    let (micro_acc, macro_f1) = if pooled_pred.is_empty() {
        (0.0, 0.0)
    } else {
        (
            metrics::micro_accuracy(&pooled_pred, &pooled_truth)?,
            metrics::macro_f1(&pooled_pred, &pooled_truth, spec.n_classes)?,
        )
    };

    let ari_vs_truth =
        metrics::adjusted_rand_index(&assignment, &Assignment::new(state.truth.clone()))?;

    state.round += 1;
    Ok(RoundRecord {
        round: state.round,
        f_after_e,
        f_after_m,
        f_after_l,
        r_value,
        micro_acc,
        macro_f1,
        b_per_cluster,
        eta_bounds,
        assignment_snapshot: assignment,
        ari_vs_truth,
        r_after_m: Some(r_after_m),
        weighted_sq_grad,
        step_order,
    })
}

/// One WeCFL round: weighted nearest-centroid assignment, weighted
/// aggregation, distribution, Q local steps.
pub fn wecfl_round(
    state: &mut FederationState,
    strategy: &Strategy,
    seed: u64,
) -> Result<RoundRecord> {
    expect_kind(strategy, StrategyKind::Wecfl)?;
    run_em_round(state, strategy, seed, AssignRule::ParamDistance, false)
}

/// One FeSEM round: WeCFL with uniform weights.
pub fn fesem_round(
    state: &mut FederationState,
    strategy: &Strategy,
    seed: u64,
) -> Result<RoundRecord> {
    expect_kind(strategy, StrategyKind::Fesem)?;
    run_em_round(state, strategy, seed, AssignRule::ParamDistance, false)
}

/// One IFCA round: loss-based assignment, then aggregation, distribution
/// and local update as in the clustered round.
pub fn ifca_round(
    state: &mut FederationState,
    strategy: &Strategy,
    seed: u64,
) -> Result<RoundRecord> {
    expect_kind(strategy, StrategyKind::Ifca)?;
    run_em_round(state, strategy, seed, AssignRule::LossBased, false)
}

/// One FedAvg round: the K = 1 special case.
pub fn fedavg_round(
    state: &mut FederationState,
    strategy: &Strategy,
    seed: u64,
) -> Result<RoundRecord> {
    expect_kind(strategy, StrategyKind::FedAvg)?;
    run_em_round(state, strategy, seed, AssignRule::ParamDistance, false)
}

/// One FedProx round: FedAvg with the proximal term anchored at the
/// broadcast global model.
pub fn fedprox_round(
    state: &mut FederationState,
    strategy: &Strategy,
    seed: u64,
) -> Result<RoundRecord> {
    expect_kind(strategy, StrategyKind::FedProx)?;
    run_em_round(state, strategy, seed, AssignRule::ParamDistance, true)
}

fn expect_kind(strategy: &Strategy, kind: StrategyKind) -> Result<()> {
    strategy.validate()?;
    if strategy.kind != kind {
        return Err(Error::validation(format!(
            "round function for {kind:?} called with strategy kind {:?}",
            strategy.kind
        )));
    }
    Ok(())
}

/// Run one round of whatever non-ensemble strategy is configured.
pub fn run_round(
    state: &mut FederationState,
    strategy: &Strategy,
    seed: u64,
) -> Result<RoundRecord> {
    match strategy.kind {
        StrategyKind::Wecfl => wecfl_round(state, strategy, seed),
        StrategyKind::Fesem => fesem_round(state, strategy, seed),
        StrategyKind::Ifca => ifca_round(state, strategy, seed),
        StrategyKind::FedAvg => fedavg_round(state, strategy, seed),
        StrategyKind::FedProx => fedprox_round(state, strategy, seed),
        StrategyKind::Ensemble(_) => Err(Error::validation(
            "ensemble strategies are orchestrated by the engine, not a single round",
        )),
    }
}
