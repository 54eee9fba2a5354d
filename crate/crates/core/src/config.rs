//! The experiment config file format.
//!
//! Configs are plain sectioned key-value text:
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Overrides address keys by dotted path (`section.key=value`) and apply to
//! the raw form before validation, so a sweep axis can be any config key.
//! The full grammar and key list are documented in the repository README.

use std::collections::BTreeMap;

use crate::algorithms::{EnsembleBase, EtaClamp, Strategy, StrategyKind, WeightMode};
use crate::clustering::InitStrategy;
use crate::error::{Error, Result};
use crate::model::{InitKind, ModelKind, SgdConfig};
use crate::param::RepMask;

/// Parsed but untyped config: sections of key-value pairs, order preserved
/// for faithful echo.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut raw = RawConfig::default();
        let mut current: Option<usize> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(Error::Config {
                    line: lineno + 1,
                    message: "unterminated section header".into(),
                })?;
                raw.sections.push((name.trim().to_string(), Vec::new()));
                current = Some(raw.sections.len() - 1);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: lineno + 1,
                    message: format!("expected `key = value`, got {line:?}"),
                });
            };
            let Some(section) = current else {
                return Err(Error::Config {
                    line: lineno + 1,
                    message: "key outside of any [section]".into(),
                });
            };
            raw.sections[section]
                .1
                .push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(raw)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (key, value) in entries {
                out.push_str(&format!("{key} = {value}\n"));
            }
            out.push('\n');
        }
        out
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|(name, _)| name == section)
            .and_then(|(_, entries)| {
                entries
                    .iter()
                    .rev()
                    .find(|(k, _)| k == key)
                    .map(|(_, v)| v.as_str())
            })
    }

    /// Set `section.key`, creating the section or key as needed. Later
    /// values win, so overrides can simply be appended.
    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        let idx = match self.sections.iter().position(|(name, _)| name == section) {
            Some(i) => i,
            None => {
                self.sections.push((section.to_string(), Vec::new()));
                self.sections.len() - 1
            }
        };
        let entries = &mut self.sections[idx].1;
        match entries.iter_mut().find(|(k, _)| k == key) {
            Some((_, v)) => *v = value.to_string(),
            None => entries.push((key.to_string(), value.to_string())),
        }
    }

    /// Apply one `section.key=value` override string.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec.split_once('=').ok_or_else(|| {
            Error::validation(format!("override {spec:?} must look like section.key=value"))
        })?;
        let (section, key) = path.trim().split_once('.').ok_or_else(|| {
            Error::validation(format!("override path {path:?} must be section.key"))
        })?;
        self.set(section.trim(), key.trim(), value.trim());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        n_clusters_true: usize,
        clients_per_cluster: usize,
        samples_per_client: usize,
        n_features: usize,
        n_classes: usize,
        cluster_separation: f64,
        noise_std: f64,
    },
    Idx {
        images_path: String,
        labels_path: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Partitioner {
    /// Synthetic ground-truth shards (invalid for IDX sources).
    None,
    Dirichlet {
        clients: usize,
        clusters: usize,
        alpha_cluster: f64,
        alpha_client: f64,
    },
    Nclass {
        clients: usize,
        clusters: usize,
        cluster_classes: usize,
        client_classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub partitioner: Partitioner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_units: usize,
    pub init: InitKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rounds: usize,
    pub seed_data: u64,
    pub seed_init: u64,
    pub seed_train: u64,
    pub theorem_check_mode: bool,
    /// Explicit clamp choice; `None` defers to the mode default (no clamp,
    /// or the clustering bound under theorem checking).
    pub eta_clamp: Option<EtaClamp>,
    pub report_window: usize,
    pub early_stop: bool,
}

/// The fully typed experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub strategy: Strategy,
    pub run: RunConfig,
}

struct SectionReader<'a> {
    name: &'a str,
    entries: BTreeMap<&'a str, &'a str>,
}

impl<'a> SectionReader<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.entries.get(key).copied()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::validation(format!("{}.{key}: cannot parse {v:?}", self.name))
            }),
        }
    }

    fn parse_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::validation(format!(
                "{}.{key}: expected true or false, got {v:?}",
                self.name
            ))),
        }
    }
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    (
        "data",
        &[
            "source",
            "n_clusters_true",
            "clients_per_cluster",
            "samples_per_client",
            "n_features",
            "n_classes",
            "cluster_separation",
            "noise_std",
            "images_path",
            "labels_path",
            "partitioner",
            "partition_clients",
            "partition_clusters",
            "alpha_cluster",
            "alpha_client",
            "cluster_classes",
            "client_classes",
        ],
    ),
    ("model", &["kind", "hidden_units", "init", "init_std"]),
    (
        "sgd",
        &[
            "learning_rate",
            "momentum",
            "batch_size",
            "local_steps",
            "prox_mu",
            "full_batch",
        ],
    ),
    (
        "strategy",
        &[
            "kind",
            "k_clusters",
            "weight_mode",
            "participation",
            "rep",
            "centroid_init",
        ],
    ),
    (
        "run",
        &[
            "rounds",
            "seed_data",
            "seed_init",
            "seed_train",
            "theorem_check_mode",
            "eta_clamp",
            "report_window",
            "early_stop",
        ],
    ),
];

fn check_known_keys(raw: &RawConfig) -> Result<()> {
    for (section, entries) in &raw.sections {
        let known = KNOWN_KEYS
            .iter()
            .find(|(name, _)| name == section)
            .map(|(_, keys)| *keys)
            .ok_or_else(|| Error::UnknownKey(section.clone()))?;
        for (key, _) in entries {
            if !known.contains(&key.as_str()) {
                return Err(Error::UnknownKey(format!("{section}.{key}")));
            }
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<ExperimentConfig> {
        check_known_keys(raw)?;
        let reader = |name: &'static str| -> SectionReader<'_> {
            let entries = raw
                .sections
                .iter()
                .filter(|(n, _)| n == name)
                .flat_map(|(_, e)| e.iter().map(|(k, v)| (k.as_str(), v.as_str())))
                .collect();
            SectionReader { name, entries }
        };

        let data = reader("data");
        let source = match data.get("source").unwrap_or("synthetic") {
            "synthetic" => DataSource::Synthetic {
                n_clusters_true: data.parse("n_clusters_true", 4usize)?,
                clients_per_cluster: data.parse("clients_per_cluster", 10usize)?,
                samples_per_client: data.parse("samples_per_client", 100usize)?,
                n_features: data.parse("n_features", 16usize)?,
                n_classes: data.parse("n_classes", 4usize)?,
                cluster_separation: data.parse("cluster_separation", 3.0f64)?,
                noise_std: data.parse("noise_std", 0.5f64)?,
            },
            "idx" => DataSource::Idx {
                images_path: data
                    .get("images_path")
                    .ok_or_else(|| Error::validation("data.images_path required for idx source"))?
                    .to_string(),
                labels_path: data
                    .get("labels_path")
                    .ok_or_else(|| Error::validation("data.labels_path required for idx source"))?
                    .to_string(),
            },
            other => {
                return Err(Error::validation(format!(
                    "data.source: expected synthetic or idx, got {other:?}"
                )))
            }
        };
        let partitioner = match data.get("partitioner").unwrap_or("none") {
            "none" => Partitioner::None,
            "dirichlet" => Partitioner::Dirichlet {
                clients: data.parse("partition_clients", 40usize)?,
                clusters: data.parse("partition_clusters", 4usize)?,
                alpha_cluster: data.parse("alpha_cluster", 0.1f64)?,
                alpha_client: data.parse("alpha_client", 10.0f64)?,
            },
            "nclass" => Partitioner::Nclass {
                clients: data.parse("partition_clients", 40usize)?,
                clusters: data.parse("partition_clusters", 4usize)?,
                cluster_classes: data.parse("cluster_classes", 3usize)?,
                client_classes: data.parse("client_classes", 2usize)?,
            },
            other => {
                return Err(Error::validation(format!(
                    "data.partitioner: expected none, dirichlet or nclass, got {other:?}"
                )))
            }
        };

        let model = reader("model");
        let kind = match model.get("kind").unwrap_or("logistic") {
            "logistic" => ModelKind::Logistic,
            "mlp1" => ModelKind::Mlp1,
            other => {
                return Err(Error::validation(format!(
                    "model.kind: expected logistic or mlp1, got {other:?}"
                )))
            }
        };
        let init = match model.get("init").unwrap_or("gaussian") {
            "zeros" => InitKind::Zeros,
            "gaussian" => InitKind::Gaussian {
                std: model.parse("init_std", 0.1f64)?,
            },
            other => {
                return Err(Error::validation(format!(
                    "model.init: expected zeros or gaussian, got {other:?}"
                )))
            }
        };
        let model_cfg = ModelConfig {
            kind,
            hidden_units: model.parse("hidden_units", 16usize)?,
            init,
        };

        let sgd_section = reader("sgd");
        let sgd = SgdConfig {
            learning_rate: sgd_section.parse("learning_rate", 0.001f64)?,
            momentum: sgd_section.parse("momentum", 0.9f64)?,
            batch_size: sgd_section.parse("batch_size", 32usize)?,
            local_steps: sgd_section.parse("local_steps", 10usize)?,
            prox_mu: sgd_section.parse("prox_mu", 0.95f64)?,
            full_batch: sgd_section.parse_bool("full_batch", false)?,
        };

        let strat = reader("strategy");
        let kind = match strat.get("kind").unwrap_or("wecfl") {
            "fedavg" => StrategyKind::FedAvg,
            "fedprox" => StrategyKind::FedProx,
            "ifca" => StrategyKind::Ifca,
            "fesem" => StrategyKind::Fesem,
            "wecfl" => StrategyKind::Wecfl,
            "fedavg_ensemble" => StrategyKind::Ensemble(EnsembleBase::FedAvg),
            "fedprox_ensemble" => StrategyKind::Ensemble(EnsembleBase::FedProx),
            other => {
                return Err(Error::validation(format!(
                    "strategy.kind: unknown strategy {other:?}"
                )))
            }
        };
        let weight_mode = match strat.get("weight_mode").unwrap_or("shard_size") {
            "shard_size" => WeightMode::ShardSize,
            "uniform" => WeightMode::Uniform,
            other => {
                return Err(Error::validation(format!(
                    "strategy.weight_mode: expected shard_size or uniform, got {other:?}"
                )))
            }
        };
        let rep_mask = match strat.get("rep").unwrap_or("full") {
            "full" => RepMask::Full,
            "head" => RepMask::Segments(Vec::new()), // resolved against the model at build time
            other => {
                return Err(Error::validation(format!(
                    "strategy.rep: expected full or head, got {other:?}"
                )))
            }
        };
        let centroid_init = match strat.get("centroid_init").unwrap_or("random_clients") {
            "random_clients" => InitStrategy::RandomClients,
            "kmeanspp" => InitStrategy::Kmeanspp,
            other => {
                return Err(Error::validation(format!(
                    "strategy.centroid_init: expected random_clients or kmeanspp, got {other:?}"
                )))
            }
        };
        let default_k = if matches!(kind, StrategyKind::FedAvg | StrategyKind::FedProx) {
            1
        } else {
            4
        };
        let strategy = Strategy {
            kind,
            k_clusters: strat.parse("k_clusters", default_k)?,
            sgd,
            weight_mode,
            participation: strat.parse("participation", 1.0f64)?,
            rep_mask,
            centroid_init,
            eta_clamp: EtaClamp::None, // resolved from run.eta_clamp when running
        };

        let run = reader("run");
        let eta_clamp = match run.get("eta_clamp") {
            None => None,
            Some("none") => Some(EtaClamp::None),
            Some("clustering") => Some(EtaClamp::ClusteringBound),
            Some("descent") => Some(EtaClamp::DescentBound),
            Some(other) => {
                return Err(Error::validation(format!(
                    "run.eta_clamp: expected none, clustering or descent, got {other:?}"
                )))
            }
        };
        let run_cfg = RunConfig {
            rounds: run.parse("rounds", 100usize)?,
            seed_data: run.parse("seed_data", 1u64)?,
            seed_init: run.parse("seed_init", 2u64)?,
            seed_train: run.parse("seed_train", 3u64)?,
            theorem_check_mode: run.parse_bool("theorem_check_mode", false)?,
            eta_clamp,
            report_window: run.parse("report_window", 3usize)?,
            early_stop: run.parse_bool("early_stop", false)?,
        };

        let cfg = ExperimentConfig {
            data: DataConfig {
                source,
                partitioner,
            },
            model: model_cfg,
            strategy,
            run: run_cfg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        if self.run.rounds == 0 {
            return Err(Error::validation("run.rounds must be >= 1"));
        }
        if self.run.report_window == 0 || self.run.report_window > self.run.rounds {
            return Err(Error::validation(format!(
                "run.report_window must be in [1, rounds = {}]",
                self.run.rounds
            )));
        }
        if matches!(self.data.source, DataSource::Idx { .. })
            && matches!(self.data.partitioner, Partitioner::None)
        {
            return Err(Error::validation(
                "idx sources need a partitioner (dirichlet or nclass)",
            ));
        }
        if self.model.kind == ModelKind::Mlp1 && self.model.hidden_units == 0 {
            return Err(Error::validation("model.hidden_units must be >= 1 for mlp1"));
        }
        Ok(())
    }

    /// Canonical raw form: every effective key, defaults included. This is
    /// what gets echoed next to the results for provenance.
    pub fn to_raw(&self) -> RawConfig {
        let mut raw = RawConfig::default();
        match &self.data.source {
            DataSource::Synthetic {
                n_clusters_true,
                clients_per_cluster,
                samples_per_client,
                n_features,
                n_classes,
                cluster_separation,
                noise_std,
            } => {
                raw.set("data", "source", "synthetic");
                raw.set("data", "n_clusters_true", &n_clusters_true.to_string());
                raw.set("data", "clients_per_cluster", &clients_per_cluster.to_string());
                raw.set("data", "samples_per_client", &samples_per_client.to_string());
                raw.set("data", "n_features", &n_features.to_string());
                raw.set("data", "n_classes", &n_classes.to_string());
                raw.set("data", "cluster_separation", &cluster_separation.to_string());
                raw.set("data", "noise_std", &noise_std.to_string());
            }
            DataSource::Idx {
                images_path,
                labels_path,
            } => {
                raw.set("data", "source", "idx");
                raw.set("data", "images_path", images_path);
                raw.set("data", "labels_path", labels_path);
            }
        }
        match &self.data.partitioner {
            Partitioner::None => raw.set("data", "partitioner", "none"),
            Partitioner::Dirichlet {
                clients,
                clusters,
                alpha_cluster,
                alpha_client,
            } => {
                raw.set("data", "partitioner", "dirichlet");
                raw.set("data", "partition_clients", &clients.to_string());
                raw.set("data", "partition_clusters", &clusters.to_string());
                raw.set("data", "alpha_cluster", &alpha_cluster.to_string());
                raw.set("data", "alpha_client", &alpha_client.to_string());
            }
            Partitioner::Nclass {
                clients,
                clusters,
                cluster_classes,
                client_classes,
            } => {
                raw.set("data", "partitioner", "nclass");
                raw.set("data", "partition_clients", &clients.to_string());
                raw.set("data", "partition_clusters", &clusters.to_string());
                raw.set("data", "cluster_classes", &cluster_classes.to_string());
                raw.set("data", "client_classes", &client_classes.to_string());
            }
        }

        raw.set(
            "model",
            "kind",
            match self.model.kind {
                ModelKind::Logistic => "logistic",
                ModelKind::Mlp1 => "mlp1",
            },
        );
        raw.set("model", "hidden_units", &self.model.hidden_units.to_string());
        match self.model.init {
            InitKind::Zeros => raw.set("model", "init", "zeros"),
            InitKind::Gaussian { std } => {
                raw.set("model", "init", "gaussian");
                raw.set("model", "init_std", &std.to_string());
            }
        }

        let sgd = &self.strategy.sgd;
        raw.set("sgd", "learning_rate", &sgd.learning_rate.to_string());
        raw.set("sgd", "momentum", &sgd.momentum.to_string());
        raw.set("sgd", "batch_size", &sgd.batch_size.to_string());
        raw.set("sgd", "local_steps", &sgd.local_steps.to_string());
        raw.set("sgd", "prox_mu", &sgd.prox_mu.to_string());
        raw.set("sgd", "full_batch", &sgd.full_batch.to_string());

        raw.set(
            "strategy",
            "kind",
            match self.strategy.kind {
                StrategyKind::FedAvg => "fedavg",
                StrategyKind::FedProx => "fedprox",
                StrategyKind::Ifca => "ifca",
                StrategyKind::Fesem => "fesem",
                StrategyKind::Wecfl => "wecfl",
                StrategyKind::Ensemble(EnsembleBase::FedAvg) => "fedavg_ensemble",
                StrategyKind::Ensemble(EnsembleBase::FedProx) => "fedprox_ensemble",
            },
        );
        raw.set("strategy", "k_clusters", &self.strategy.k_clusters.to_string());
        raw.set(
            "strategy",
            "weight_mode",
            match self.strategy.weight_mode {
                WeightMode::ShardSize => "shard_size",
                WeightMode::Uniform => "uniform",
            },
        );
        raw.set("strategy", "participation", &self.strategy.participation.to_string());
        raw.set(
            "strategy",
            "rep",
            match self.strategy.rep_mask {
                RepMask::Full => "full",
                RepMask::Segments(_) => "head",
            },
        );
        raw.set(
            "strategy",
            "centroid_init",
            match self.strategy.centroid_init {
                InitStrategy::RandomClients => "random_clients",
                InitStrategy::Kmeanspp => "kmeanspp",
            },
        );

        raw.set("run", "rounds", &self.run.rounds.to_string());
        raw.set("run", "seed_data", &self.run.seed_data.to_string());
        raw.set("run", "seed_init", &self.run.seed_init.to_string());
        raw.set("run", "seed_train", &self.run.seed_train.to_string());
        raw.set(
            "run",
            "theorem_check_mode",
            &self.run.theorem_check_mode.to_string(),
        );
        if let Some(clamp) = self.run.eta_clamp {
            raw.set(
                "run",
                "eta_clamp",
                match clamp {
                    EtaClamp::None => "none",
                    EtaClamp::ClusteringBound => "clustering",
                    EtaClamp::DescentBound => "descent",
                },
            );
        }
        raw.set("run", "report_window", &self.run.report_window.to_string());
        raw.set("run", "early_stop", &self.run.early_stop.to_string());
        raw
    }
}
