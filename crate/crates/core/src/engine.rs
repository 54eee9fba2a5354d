//! Experiment orchestration: build a federation from a config, run the
//! communication rounds, check the convergence conditions when asked, and
//! serialize every artifact deterministically.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    self, ensemble_predict, EnsembleBase, EtaClamp, FederationState, Strategy, StrategyKind,
};
use crate::clustering::Assignment;
use crate::config::{DataSource, ExperimentConfig, Partitioner};
use crate::data::{dirichlet_partition, generate_synthetic, load_idx, nclass_partition, Dataset,
    Partition, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, RoundRecord};
use crate::model::ModelSpec;
use crate::parallel::par_map;
use crate::param::{Layout, ParamVector};
use crate::rng::mix;

/// Windowed means over the last rounds plus the run's final objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rounds_run: usize,
    pub window: usize,
    pub micro_acc_mean: f64,
    pub micro_acc_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub final_f: f64,
    pub final_r: f64,
    pub final_ari: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<RoundRecord>,
    pub summary: Summary,
    /// Final flat parameter vector per client, for external embedding tools.
    pub client_params: Vec<Vec<f64>>,
    /// Final cluster models (ensemble: the member models).
    pub centroid_params: Vec<Vec<f64>>,
    pub truth: Vec<usize>,
    pub final_assignment: Vec<usize>,
    /// Paths written by [`write_artifacts`]; empty until then.
    pub artifacts: Vec<PathBuf>,
}

/// Materialize the dataset and client partition a config describes.
pub fn build_data(cfg: &ExperimentConfig) -> Result<(Arc<Dataset>, Partition)> {
    let seed = cfg.run.seed_data;
    let (dataset, generated) = match &cfg.data.source {
        DataSource::Synthetic {
            n_clusters_true,
            clients_per_cluster,
            samples_per_client,
            n_features,
            n_classes,
            cluster_separation,
            noise_std,
        } => {
            let spec = SyntheticSpec {
                n_clusters_true: *n_clusters_true,
                clients_per_cluster: *clients_per_cluster,
                samples_per_client: *samples_per_client,
                n_features: *n_features,
                n_classes: *n_classes,
                cluster_separation: *cluster_separation,
                noise_std: *noise_std,
                seed,
            };
            let (d, p) = generate_synthetic(&spec)?;
            (Arc::new(d), Some(p))
        }
        DataSource::Idx {
            images_path,
            labels_path,
        } => {
            let d = load_idx(Path::new(images_path), Path::new(labels_path))?;
            (Arc::new(d), None)
        }
    };
    let partition = match &cfg.data.partitioner {
        Partitioner::None => generated.ok_or_else(|| {
            Error::validation("partitioner = none requires a synthetic source")
        })?,
        Partitioner::Dirichlet {
            clients,
            clusters,
            alpha_cluster,
            alpha_client,
        } => dirichlet_partition(
            &dataset,
            *clients,
            *clusters,
            *alpha_cluster,
            *alpha_client,
            mix(seed, 1),
        )?,
        Partitioner::Nclass {
            clients,
            clusters,
            cluster_classes,
            client_classes,
        } => nclass_partition(
            &dataset,
            *clients,
            *clusters,
            *cluster_classes,
            *client_classes,
            mix(seed, 1),
        )?,
    };
    Ok((dataset, partition))
}

fn model_spec_for(cfg: &ExperimentConfig, dataset: &Dataset) -> ModelSpec {
    ModelSpec {
        kind: cfg.model.kind,
        n_features: dataset.n_features(),
        n_classes: dataset.n_classes(),
        hidden_units: cfg.model.hidden_units,
        init: cfg.model.init,
    }
}

/// The strategy actually executed: the head mask resolved against the model
/// and the theorem-check forcings applied.
fn effective_strategy(cfg: &ExperimentConfig, spec: &ModelSpec) -> Strategy {
    let mut strategy = cfg.strategy.clone();
    if let crate::param::RepMask::Segments(names) = &strategy.rep_mask {
        if names.is_empty() {
            strategy.rep_mask = spec.head_mask();
        }
    }
    strategy.eta_clamp = cfg.run.eta_clamp.unwrap_or(if cfg.run.theorem_check_mode {
        EtaClamp::ClusteringBound
    } else {
        EtaClamp::None
    });
    if cfg.run.theorem_check_mode {
        strategy.sgd.full_batch = true;
        strategy.sgd.momentum = 0.0;
    }
    strategy
}

fn check_monotone(
    round: usize,
    step: &'static str,
    before: f64,
    after: f64,
    rel_slack: f64,
) -> Result<()> {
    let slack = rel_slack * before.abs().max(after.abs()) + 1e-15;
    if !after.is_finite() || after > before + slack {
        return Err(Error::TheoremViolation {
            round,
            step,
            before,
            after,
        });
    }
    Ok(())
}

fn theorem_asserts(prev: Option<&RoundRecord>, record: &RoundRecord) -> Result<()> {
    if let Some(prev) = prev {
        check_monotone(
            record.round,
            "expectation step (F vs previous local step)",
            prev.f_after_l,
            record.f_after_e,
            1e-12,
        )?;
    }
    check_monotone(
        record.round,
        "maximization step",
        record.f_after_e,
        record.f_after_m,
        1e-12,
    )?;
    check_monotone(
        record.round,
        "local update step",
        record.f_after_m,
        record.f_after_l,
        1e-9,
    )?;
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(records: &[RoundRecord], window: usize) -> Summary {
    let window = window.min(records.len());
    let tail = &records[records.len() - window..];
    let (acc_mean, acc_std) = mean_std(&tail.iter().map(|r| r.micro_acc).collect::<Vec<_>>());
    let (f1_mean, f1_std) = mean_std(&tail.iter().map(|r| r.macro_f1).collect::<Vec<_>>());
    let last = records.last().expect("at least one round");
    Summary {
        rounds_run: records.len(),
        window,
        micro_acc_mean: acc_mean,
        micro_acc_std: acc_std,
        macro_f1_mean: f1_mean,
        macro_f1_std: f1_std,
        final_f: last.f_after_l,
        final_r: last.r_value,
        final_ari: last.ari_vs_truth,
    }
}

/// Run one experiment end to end: data, partition, init, rounds, summary.
/// Fully deterministic given the config's three seeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (dataset, partition) = build_data(cfg)?;
    let spec = model_spec_for(cfg, &dataset);
    let strategy = effective_strategy(cfg, &spec);

    if let StrategyKind::Ensemble(base) = strategy.kind {
        return run_ensemble(cfg, &dataset, &partition, &spec, &strategy, base);
    }

    let mut state = FederationState::build(
        Arc::clone(&dataset),
        &partition,
        &spec,
        &strategy,
        cfg.run.seed_data,
        cfg.run.seed_init,
    )?;

    let mut records: Vec<RoundRecord> = Vec::with_capacity(cfg.run.rounds);
    let mut stall = 0usize;
    for t in 0..cfg.run.rounds {
        let record = algorithms::run_round(&mut state, &strategy, mix(cfg.run.seed_train, t as u64))?;
        if cfg.run.theorem_check_mode {
            theorem_asserts(records.last(), &record)?;
        }
        if let Some(prev) = records.last() {
            let rel = (record.f_after_l - prev.f_after_l).abs() / prev.f_after_l.max(1e-12);
            stall = if rel < 1e-6 { stall + 1 } else { 0 };
        }
        records.push(record);
        if cfg.run.early_stop && stall >= 5 {
            break;
        }
    }

    let summary = summarize(&records, cfg.run.report_window);
    Ok(ExperimentResult {
        client_params: state
            .clients
            .iter()
            .map(|c| c.params.values().to_vec())
            .collect(),
        centroid_params: state
            .clusters
            .iter()
            .map(|c| c.model.values().to_vec())
            .collect(),
        truth: state.truth.clone(),
        final_assignment: state.clients.iter().map(|c| c.cluster).collect(),
        records,
        summary,
        artifacts: Vec::new(),
    })
}

/// K independent FedAvg/FedProx runs soft-voted per round. Accuracy and
/// macro F1 are the ensemble's; the objective fields are averaged over the
/// base runs.
fn run_ensemble(
    cfg: &ExperimentConfig,
    dataset: &Arc<Dataset>,
    partition: &Partition,
    spec: &ModelSpec,
    strategy: &Strategy,
    base: EnsembleBase,
) -> Result<ExperimentResult> {
    let runs = strategy.k_clusters;
    let sub_strategy = Strategy {
        kind: match base {
            EnsembleBase::FedAvg => StrategyKind::FedAvg,
            EnsembleBase::FedProx => StrategyKind::FedProx,
        },
        k_clusters: 1,
        ..strategy.clone()
    };

    let mut run_records: Vec<Vec<RoundRecord>> = Vec::with_capacity(runs);
    let mut run_models: Vec<Vec<ParamVector>> = Vec::with_capacity(runs);
    let mut last_state: Option<FederationState> = None;
    for j in 0..runs {
        let mut state = FederationState::build(
            Arc::clone(dataset),
            partition,
            spec,
            &sub_strategy,
            cfg.run.seed_data,
            mix(cfg.run.seed_init, 1000 + j as u64),
        )?;
        let mut records = Vec::with_capacity(cfg.run.rounds);
        let mut models = Vec::with_capacity(cfg.run.rounds);
        for t in 0..cfg.run.rounds {
            let seed = mix(mix(cfg.run.seed_train, 1000 + j as u64), t as u64);
            records.push(algorithms::run_round(&mut state, &sub_strategy, seed)?);
            models.push(state.clusters[0].model.clone());
        }
        run_records.push(records);
        run_models.push(models);
        last_state = Some(state);
    }
    let state = last_state.expect("at least one ensemble run");

    let eval_shards: Vec<Vec<usize>> = state.clients.iter().map(|c| c.test_shard.clone()).collect();
    let mut records = Vec::with_capacity(cfg.run.rounds);
    for t in 0..cfg.run.rounds {
        let models_t: Vec<ParamVector> = run_models.iter().map(|m| m[t].clone()).collect();
        let predictions: Vec<(Vec<usize>, Vec<usize>)> = par_map(&eval_shards, |shard| {
            if shard.is_empty() {
                return (Vec::new(), Vec::new());
            }
            let features: Vec<f64> = shard.iter().flat_map(|&i| dataset.row(i).to_vec()).collect();
            let probs = ensemble_predict(&models_t, spec, &features).expect("validated models");
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

        let over_runs = |f: &dyn Fn(&RoundRecord) -> f64| -> f64 {
            run_records.iter().map(|r| f(&r[t])).sum::<f64>() / runs as f64
        };
        let m = state.n_clients();
        let eta_bounds: Vec<f64> = (0..m)
            .map(|i| {
                run_records.iter().map(|r| r[t].eta_bounds[i]).sum::<f64>() / runs as f64
            })
            .collect();
        let assignment = Assignment::new(vec![0; m]);
        let ari_vs_truth =
            metrics::adjusted_rand_index(&assignment, &Assignment::new(state.truth.clone()))?;
        records.push(RoundRecord {
            round: t + 1,
            f_after_e: over_runs(&|r| r.f_after_e),
            f_after_m: over_runs(&|r| r.f_after_m),
            f_after_l: over_runs(&|r| r.f_after_l),
            r_value: over_runs(&|r| r.r_value),
            micro_acc,
            macro_f1,
            b_per_cluster: run_records.iter().map(|r| r[t].b_per_cluster[0]).collect(),
            eta_bounds,
            assignment_snapshot: assignment,
            ari_vs_truth,
            r_after_m: Some(over_runs(&|r| r.r_after_m.unwrap_or(f64::NAN))),
            weighted_sq_grad: over_runs(&|r| r.weighted_sq_grad),
            step_order: run_records[0][t].step_order.clone(),
        });
    }

    let summary = summarize(&records, cfg.run.report_window);
    Ok(ExperimentResult {
        client_params: state
            .clients
            .iter()
            .map(|c| c.params.values().to_vec())
            .collect(),
        centroid_params: run_models.iter().map(|m| m[cfg.run.rounds - 1].values().to_vec()).collect(),
        truth: state.truth.clone(),
        final_assignment: vec![0; state.n_clients()],
        records,
        summary,
        artifacts: Vec::new(),
    })
}

/// Independent runs over one partition, varying a single dotted config key.
/// The data seed (and hence the partition) is shared unless the axis itself
/// changes it.
pub fn sweep(
    base: &ExperimentConfig,
    axis: &str,
    values: &[String],
) -> Result<Vec<ExperimentResult>> {
    let mut configs = Vec::with_capacity(values.len());
    for value in values {
        let mut raw = base.to_raw();
        raw.apply_override(&format!("{axis}={value}"))?;
        configs.push(ExperimentConfig::from_raw(&raw)?);
    }
    let results = par_map(&configs, run_experiment);
    results.into_iter().collect()
}

fn write_csv_matrix(path: &Path, header_prefix: &str, matrix: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    if let Some(first) = matrix.first() {
        let cols: Vec<String> = (0..first.len()).map(|j| format!("{header_prefix}{j}")).collect();
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    for row in matrix {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn flat_params(values: &[f64]) -> ParamVector {
    ParamVector::new(values.to_vec(), Layout::new(vec![("v", values.len())]))
        .expect("layout sized to values")
}

/// Write every result artifact under `out_dir` and record the paths:
/// `rounds.jsonl`, `summary.json`, `assignments.jsonl`, `client_params.csv`,
/// `centroids.json`, and the two cosine matrices (skipped for degenerate
/// all-zero vectors).
pub fn write_artifacts(result: &mut ExperimentResult, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();

    let rounds_path = out_dir.join("rounds.jsonl");
    let mut jsonl = String::new();
    for record in &result.records {
        jsonl.push_str(&serde_json::to_string(record)?);
        jsonl.push('\n');
    }
    std::fs::write(&rounds_path, jsonl)?;
    paths.push(rounds_path);

    let summary_path = out_dir.join("summary.json");
    let mut summary_json = serde_json::to_string_pretty(&result.summary)?;
    summary_json.push('\n');
    std::fs::write(&summary_path, summary_json)?;
    paths.push(summary_path);

    let assignments_path = out_dir.join("assignments.jsonl");
    let mut jsonl = String::new();
    for record in &result.records {
        let line = serde_json::json!({
            "round": record.round,
            "cluster_of": record.assignment_snapshot.cluster_of,
        });
        jsonl.push_str(&serde_json::to_string(&line)?);
        jsonl.push('\n');
    }
    std::fs::write(&assignments_path, jsonl)?;
    paths.push(assignments_path);

    let params_path = out_dir.join("client_params.csv");
    let dim = result.client_params.first().map_or(0, |p| p.len());
    let mut csv = String::from("client,true_cluster,assigned_cluster");
    for j in 0..dim {
        csv.push_str(&format!(",p{j}"));
    }
    csv.push('\n');
    for (i, params) in result.client_params.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{}",
            result.truth[i], result.final_assignment[i]
        ));
        for v in params {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    std::fs::write(&params_path, csv)?;
    paths.push(params_path);

    let centroids_path = out_dir.join("centroids.json");
    let mut centroids_json = serde_json::to_string(&result.centroid_params)?;
    centroids_json.push('\n');
    std::fs::write(&centroids_path, centroids_json)?;
    paths.push(centroids_path);

    let centroid_vecs: Vec<ParamVector> =
        result.centroid_params.iter().map(|p| flat_params(p)).collect();
    if let Ok(matrix) = metrics::cosine_similarity_matrix(&centroid_vecs) {
        let path = out_dir.join("cosine_clusters.csv");
        write_csv_matrix(&path, "k", &matrix)?;
        paths.push(path);
    }
    let client_vecs: Vec<ParamVector> =
        result.client_params.iter().map(|p| flat_params(p)).collect();
    if let Ok(matrix) = metrics::cosine_similarity_matrix(&client_vecs) {
        let path = out_dir.join("cosine_clients.csv");
        write_csv_matrix(&path, "c", &matrix)?;
        paths.push(path);
    }

    result.artifacts = paths;
    Ok(())
}

/// One histogram row of the partition report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionStatsRow {
    pub label: String,
    pub cluster: usize,
    pub n_samples: usize,
    pub class_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionStats {
    pub rows: Vec<PartitionStatsRow>,
    /// Mean pairwise L1 distance between intra-cluster client class
    /// distributions (0 when no such pair exists).
    pub intra_cluster_l1: f64,
    /// Mean pairwise L1 distance between cluster-level class distributions.
    pub inter_cluster_l1: f64,
}

impl PartitionStats {
    pub fn to_csv(&self) -> String {
        let n_classes = self.rows.first().map_or(0, |r| r.class_counts.len());
        let mut out = String::from("label,cluster,n_samples");
        for c in 0..n_classes {
            out.push_str(&format!(",class_{c}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{},{}", row.label, row.cluster, row.n_samples));
            for count in &row.class_counts {
                out.push_str(&format!(",{count}"));
            }
            out.push('\n');
        }
        out
    }
}

fn normalized(hist: &[usize]) -> Vec<f64> {
    let total: usize = hist.iter().sum();
    hist.iter().map(|&h| h as f64 / total.max(1) as f64).collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Per-client and per-cluster class histograms plus the intra/inter-cluster
/// histogram distances of the partition report.
pub fn partition_stats(dataset: &Dataset, partition: &Partition) -> PartitionStats {
    let m = partition.n_clients();
    let k = partition.cluster_of_client.iter().max().map_or(1, |&x| x + 1);
    let client_hists: Vec<Vec<usize>> = partition
        .client_shards
        .iter()
        .map(|s| dataset.class_histogram(s))
        .collect();

    let mut rows: Vec<PartitionStatsRow> = (0..m)
        .map(|i| PartitionStatsRow {
            label: format!("client_{i}"),
            cluster: partition.cluster_of_client[i],
            n_samples: partition.client_shards[i].len(),
            class_counts: client_hists[i].clone(),
        })
        .collect();

    let mut cluster_hists = vec![vec![0usize; dataset.n_classes()]; k];
    for i in 0..m {
        for (c, count) in client_hists[i].iter().enumerate() {
            cluster_hists[partition.cluster_of_client[i]][c] += count;
        }
    }
    for (cluster, hist) in cluster_hists.iter().enumerate() {
        rows.push(PartitionStatsRow {
            label: format!("cluster_{cluster}"),
            cluster,
            n_samples: hist.iter().sum(),
            class_counts: hist.clone(),
        });
    }

    let mut intra_total = 0.0;
    let mut intra_pairs = 0usize;
    for i in 0..m {
        for j in (i + 1)..m {
            if partition.cluster_of_client[i] == partition.cluster_of_client[j] {
                intra_total += l1(&normalized(&client_hists[i]), &normalized(&client_hists[j]));
                intra_pairs += 1;
            }
        }
    }
    let mut inter_total = 0.0;
    let mut inter_pairs = 0usize;
    for a in 0..k {
        for b in (a + 1)..k {
            inter_total += l1(&normalized(&cluster_hists[a]), &normalized(&cluster_hists[b]));
            inter_pairs += 1;
        }
    }
    PartitionStats {
        rows,
        intra_cluster_l1: if intra_pairs > 0 {
            intra_total / intra_pairs as f64
        } else {
            0.0
        },
        inter_cluster_l1: if inter_pairs > 0 {
            inter_total / inter_pairs as f64
        } else {
            0.0
        },
    }
}
