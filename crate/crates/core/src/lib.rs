//! Clustered federated-learning simulator.
//!
//! Clients are clustered in model-parameter space by weighted k-means while
//! each cluster trains a shared model with federated averaging. The crate
//! provides the training strategies (WeCFL, FeSEM, IFCA, FedAvg, FedProx and
//! soft-voting ensembles), two cluster-wise non-IID partitioners, small
//! hand-differentiated classifiers, convergence monitors for the clustering
//! and federation objectives, and a deterministic experiment engine with
//! JSON-lines output.
//!
//! Everything is seeded: identical configs produce byte-identical artifacts
//! at any parallelism level. The per-client inner loops run on rayon when
//! the `parallel` feature (default) is enabled and fall back to sequential
//! iteration without it.

pub mod algorithms;
pub mod clustering;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod param;
pub mod rng;

pub use error::{Error, Result};
