//! Small differentiable classifiers with analytic gradients.
//!
//! Two model kinds are supported: multinomial logistic regression and a
//! one-hidden-layer tanh MLP. Gradients are hand-derived (no autodiff) and
//! checked against central finite differences in the test suite. Local
//! training is plain (momentum) SGD over a client shard for a fixed number
//! of steps.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::param::{Layout, ParamVector, RepMask};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zeros,
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n_features: usize,
    pub n_classes: usize,
    /// Hidden width, used by `Mlp1` only.
    pub hidden_units: usize,
    pub init: InitKind,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_classes == 0 {
            return Err(Error::validation("model needs n_features >= 1 and n_classes >= 1"));
        }
        if self.kind == ModelKind::Mlp1 && self.hidden_units == 0 {
            return Err(Error::validation("mlp1 needs hidden_units >= 1"));
        }
        if let InitKind::Gaussian { std } = self.init {
            if !(std > 0.0) {
                return Err(Error::validation("gaussian init std must be > 0"));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let f = self.n_features;
        let c = self.n_classes;
        match self.kind {
            ModelKind::Logistic => Layout::new(vec![("w", c * f), ("b", c)]),
            ModelKind::Mlp1 => {
                let h = self.hidden_units;
                Layout::new(vec![("w1", h * f), ("b1", h), ("w2", c * h), ("b2", c)])
            }
        }
    }

    /// Mask selecting the output layer, the usual clustering representation
    /// when only part of the model should count.
    pub fn head_mask(&self) -> RepMask {
        match self.kind {
            ModelKind::Logistic => RepMask::Segments(vec!["w".into(), "b".into()]),
            ModelKind::Mlp1 => RepMask::Segments(vec!["w2".into(), "b2".into()]),
        }
    }

    pub fn init_params(&self, seed: u64) -> ParamVector {
        let layout = self.layout();
        match self.init {
            InitKind::Zeros => ParamVector::zeros(layout),
            InitKind::Gaussian { std } => {
                let normal = Normal::new(0.0, std).expect("validated std");
                let mut rng = rng_from(seed);
                let values = (0..layout.total_len())
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                ParamVector::new(values, layout).expect("layout-sized vector")
            }
        }
    }
}

/// Local SGD settings for one client update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Number of local steps Q per communication round.
    pub local_steps: usize,
    /// Proximal coefficient; 0 disables the proximal term.
    pub prox_mu: f64,
    /// Use the whole shard every step (no sampling).
    pub full_batch: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 32,
            local_steps: 10,
            prox_mu: 0.95,
            full_batch: false,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(Error::validation("learning_rate must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation("momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        if self.local_steps == 0 {
            return Err(Error::validation("local_steps must be >= 1"));
        }
        if !(self.prox_mu >= 0.0) {
            return Err(Error::validation("prox_mu must be >= 0"));
        }
        Ok(())
    }
}

fn check_params(params: &ParamVector, spec: &ModelSpec) -> Result<()> {
    if params.layout() != &spec.layout() {
        return Err(Error::shape("param vector does not match the model layout"));
    }
    Ok(())
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Class probabilities for one feature row, plus the hidden activations for
/// the MLP (needed by backprop).
fn forward_row(params: &ParamVector, spec: &ModelSpec, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let c = spec.n_classes;
    let f = spec.n_features;
    match spec.kind {
        ModelKind::Logistic => {
            let w = params.segment("w").expect("layout checked");
            let b = params.segment("b").expect("layout checked");
            let mut z = vec![0.0; c];
            for (cls, zc) in z.iter_mut().enumerate() {
                let row = &w[cls * f..(cls + 1) * f];
                *zc = b[cls] + row.iter().zip(x).map(|(wv, xv)| wv * xv).sum::<f64>();
            }
            softmax_in_place(&mut z);
            (z, Vec::new())
        }
        ModelKind::Mlp1 => {
            let h = spec.hidden_units;
            let w1 = params.segment("w1").expect("layout checked");
            let b1 = params.segment("b1").expect("layout checked");
            let w2 = params.segment("w2").expect("layout checked");
            let b2 = params.segment("b2").expect("layout checked");
            let mut hidden = vec![0.0; h];
            for (j, hj) in hidden.iter_mut().enumerate() {
                let row = &w1[j * f..(j + 1) * f];
                *hj = (b1[j] + row.iter().zip(x).map(|(wv, xv)| wv * xv).sum::<f64>()).tanh();
            }
            let mut z = vec![0.0; c];
            for (cls, zc) in z.iter_mut().enumerate() {
                let row = &w2[cls * h..(cls + 1) * h];
                *zc = b2[cls] + row.iter().zip(&hidden).map(|(wv, hv)| wv * hv).sum::<f64>();
            }
            softmax_in_place(&mut z);
            (z, hidden)
        }
    }
}

/// Row-major class-probability matrix for a row-major feature matrix.
pub fn forward(params: &ParamVector, spec: &ModelSpec, features: &[f64]) -> Result<Vec<f64>> {
    check_params(params, spec)?;
    if features.len() % spec.n_features != 0 {
        return Err(Error::shape(format!(
            "feature buffer of {} values is not a multiple of n_features = {}",
            features.len(),
            spec.n_features
        )));
    }
    let n = features.len() / spec.n_features;
    let mut out = Vec::with_capacity(n * spec.n_classes);
    for i in 0..n {
        let x = &features[i * spec.n_features..(i + 1) * spec.n_features];
        let (probs, _) = forward_row(params, spec, x);
        out.extend_from_slice(&probs);
    }
    Ok(out)
}

fn check_shard(data: &Dataset, spec: &ModelSpec, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::validation("shard is empty"));
    }
    if data.n_features() != spec.n_features || data.n_classes() > spec.n_classes {
        return Err(Error::shape(format!(
            "dataset ({} features, {} classes) does not fit model ({} features, {} classes)",
            data.n_features(),
            data.n_classes(),
            spec.n_features,
            spec.n_classes
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood over a shard, plus an optional proximal
/// penalty `(mu/2) * ||params - anchor||^2`.
pub fn loss_prox(
    params: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    indices: &[usize],
    prox_anchor: Option<&ParamVector>,
    prox_mu: f64,
) -> Result<f64> {
    check_params(params, spec)?;
    check_shard(data, spec, indices)?;
    let mut total = 0.0;
    for &i in indices {
        let (probs, _) = forward_row(params, spec, data.row(i));
        total += -probs[data.label(i)].max(1e-300).ln();
    }
    let mut value = total / indices.len() as f64;
    if prox_mu > 0.0 {
        let anchor = prox_anchor
            .ok_or_else(|| Error::validation("prox_mu > 0 requires a prox anchor"))?;
        value += 0.5 * prox_mu * params.distance_sq(anchor)?;
    }
    Ok(value)
}

/// Mean cross-entropy loss of the model over a shard.
pub fn loss(params: &ParamVector, spec: &ModelSpec, data: &Dataset, indices: &[usize]) -> Result<f64> {
    loss_prox(params, spec, data, indices, None, 0.0)
}

/// Analytic gradient of [`loss_prox`] with respect to the parameters,
/// averaged over the batch. With `prox_mu = 0` the anchor is ignored.
pub fn gradient(
    params: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    batch: &[usize],
    prox_anchor: Option<&ParamVector>,
    prox_mu: f64,
) -> Result<ParamVector> {
    check_params(params, spec)?;
    check_shard(data, spec, batch)?;
    let c = spec.n_classes;
    let f = spec.n_features;
    let mut grad = ParamVector::zeros(spec.layout());

    match spec.kind {
        ModelKind::Logistic => {
            let w_range = spec.layout().range_of("w").expect("layout");
            let b_range = spec.layout().range_of("b").expect("layout");
            for &i in batch {
                let x = data.row(i);
                let (mut dz, _) = forward_row(params, spec, x);
                dz[data.label(i)] -= 1.0;
                let g = grad.values_mut();
                for (cls, &dzc) in dz.iter().enumerate() {
                    for (feat, &xv) in x.iter().enumerate() {
                        g[w_range.start + cls * f + feat] += dzc * xv;
                    }
                    g[b_range.start + cls] += dzc;
                }
            }
        }
        ModelKind::Mlp1 => {
            let h = spec.hidden_units;
            let layout = spec.layout();
            let w1_range = layout.range_of("w1").expect("layout");
            let b1_range = layout.range_of("b1").expect("layout");
            let w2_range = layout.range_of("w2").expect("layout");
            let b2_range = layout.range_of("b2").expect("layout");
            let w2 = params.segment("w2").expect("layout").to_vec();
            for &i in batch {
                let x = data.row(i);
                let (mut dz, hidden) = forward_row(params, spec, x);
                dz[data.label(i)] -= 1.0;
                let g = grad.values_mut();
                for (cls, &dzc) in dz.iter().enumerate() {
                    for (j, &hv) in hidden.iter().enumerate() {
                        g[w2_range.start + cls * h + j] += dzc * hv;
                    }
                    g[b2_range.start + cls] += dzc;
                }
                for (j, &hv) in hidden.iter().enumerate() {
                    let dh: f64 = (0..c).map(|cls| dz[cls] * w2[cls * h + j]).sum();
                    let da = dh * (1.0 - hv * hv);
                    for (feat, &xv) in x.iter().enumerate() {
                        g[w1_range.start + j * f + feat] += da * xv;
                    }
                    g[b1_range.start + j] += da;
                }
            }
        }
    }

    grad.scale(1.0 / batch.len() as f64);
    if prox_mu > 0.0 {
        let anchor = prox_anchor
            .ok_or_else(|| Error::validation("prox_mu > 0 requires a prox anchor"))?;
        if !anchor.same_layout(params) {
            return Err(Error::shape("prox anchor layout differs from params"));
        }
        let g = grad.values_mut();
        for (i, (p, a)) in params.values().iter().zip(anchor.values()).enumerate() {
            g[i] += prox_mu * (p - a);
        }
    }
    Ok(grad)
}

/// Per-step diagnostics of one local update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateTrace {
    /// L2 norm of the stochastic gradient used at each step.
    pub grad_norms: Vec<f64>,
    /// Total parameter displacement over the Q steps.
    pub displacement: f64,
    /// Sample indices of each step's batch.
    pub step_batches: Vec<Vec<usize>>,
}

/// Run exactly Q steps of (momentum) SGD on a client shard.
///
/// Batches are sampled without replacement per epoch and reshuffled when the
/// epoch is exhausted; `full_batch` uses the whole shard every step. When
/// `prox_mu > 0` the proximal anchor is the incoming parameter vector, i.e.
/// the model just received from the server.
pub fn local_update(
    params: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    shard: &[usize],
    cfg: &SgdConfig,
    seed: u64,
) -> Result<(ParamVector, UpdateTrace)> {
    cfg.validate()?;
    check_params(params, spec)?;
    check_shard(data, spec, shard)?;

    let anchor = if cfg.prox_mu > 0.0 {
        Some(params.clone())
    } else {
        None
    };
    let mut theta = params.clone();
    let mut velocity = vec![0.0; params.len()];
    let mut rng = rng_from(seed);
    let mut order = shard.to_vec();
    let mut cursor = order.len();

    let mut grad_norms = Vec::with_capacity(cfg.local_steps);
    let mut step_batches = Vec::with_capacity(cfg.local_steps);
    for _ in 0..cfg.local_steps {
        let batch: Vec<usize> = if cfg.full_batch {
            shard.to_vec()
        } else {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let end = (cursor + cfg.batch_size).min(order.len());
            let b = order[cursor..end].to_vec();
            cursor = end;
            b
        };
        let grad = gradient(&theta, spec, data, &batch, anchor.as_ref(), cfg.prox_mu)?;
        grad_norms.push(grad.l2_norm());
        let t = theta.values_mut();
        for (i, g) in grad.values().iter().enumerate() {
            velocity[i] = cfg.momentum * velocity[i] + g;
            t[i] -= cfg.learning_rate * velocity[i];
        }
        step_batches.push(batch);
    }

    let displacement = theta.distance(params)?;
    Ok((
        theta,
        UpdateTrace {
            grad_norms,
            displacement,
            step_batches,
        },
    ))
}

/// Running maximum of all recorded stochastic gradient norms; the online
/// estimate of the gradient-norm bound U.
pub fn gradient_norm_bound_estimate(traces: &[UpdateTrace]) -> Result<f64> {
    if traces.is_empty() {
        return Err(Error::validation("need at least one trace to estimate U"));
    }
    Ok(traces
        .iter()
        .flat_map(|t| t.grad_norms.iter().copied())
        .fold(0.0, f64::max))
}

/// Upper bound on the smoothness constant of the cross-entropy objective
/// over the given rows: max (||x||^2 + 1) / 2, the softmax Hessian bound
/// with the bias fold-in. Exact for the logistic model; used as a plug-in
/// for the MLP.
pub fn smoothness_bound(data: &Dataset, indices: &[usize]) -> f64 {
    indices
        .iter()
        .map(|&i| {
            let x = data.row(i);
            (x.iter().map(|v| v * v).sum::<f64>() + 1.0) / 2.0
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::mix;
    use rand::Rng;

    fn tiny_dataset(seed: u64, n: usize, f: usize, c: usize) -> Dataset {
        let mut rng = rng_from(seed);
        let features: Vec<f64> = (0..n * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        Dataset::new(features, f, labels, c).unwrap()
    }

    fn logistic_spec(f: usize, c: usize) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::Logistic,
            n_features: f,
            n_classes: c,
            hidden_units: 0,
            init: InitKind::Gaussian { std: 0.5 },
        }
    }

    fn mlp_spec(f: usize, c: usize, h: usize) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::Mlp1,
            n_features: f,
            n_classes: c,
            hidden_units: h,
            init: InitKind::Gaussian { std: 0.5 },
        }
    }

    #[test]
    fn zero_params_give_uniform_rows() {
        let spec = logistic_spec(3, 4);
        let params = ParamVector::zeros(spec.layout());
        let probs = forward(&params, &spec, &[0.3, -0.2, 0.9]).unwrap();
        for p in probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_hand_softmax() {
        // Logistic with known 2x2 weights and one sample, checked against
        // scalar arithmetic done out longhand here.
        let spec = ModelSpec {
            kind: ModelKind::Logistic,
            n_features: 2,
            n_classes: 2,
            hidden_units: 0,
            init: InitKind::Zeros,
        };
        let params =
            ParamVector::new(vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5], spec.layout()).unwrap();
        let x = [1.0, -1.0];
        // z0 = 1*1 + 2*(-1) + 0.5 = -0.5 ; z1 = 3*1 + 4*(-1) - 0.5 = -1.5
        let e0 = (-0.5f64).exp();
        let e1 = (-1.5f64).exp();
        let probs = forward(&params, &spec, &x).unwrap();
        assert!((probs[0] - e0 / (e0 + e1)).abs() < 1e-12);
        assert!((probs[1] - e1 / (e0 + e1)).abs() < 1e-12);
    }

    #[test]
    fn rows_always_sum_to_one() {
        let spec = mlp_spec(4, 5, 6);
        let params = spec.init_params(3);
        let data = tiny_dataset(1, 10, 4, 5);
        let all: Vec<usize> = (0..10).collect();
        let probs = forward(&params, &spec, &feature_rows(&data, &all)).unwrap();
        for row in probs.chunks(5) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    fn feature_rows(data: &Dataset, indices: &[usize]) -> Vec<f64> {
        indices.iter().flat_map(|&i| data.row(i).to_vec()).collect()
    }

    #[test]
    fn zero_params_loss_is_ln_c() {
        let spec = logistic_spec(3, 5);
        let params = ParamVector::zeros(spec.layout());
        let data = tiny_dataset(2, 20, 3, 5);
        let all: Vec<usize> = (0..20).collect();
        let l = loss(&params, &spec, &data, &all).unwrap();
        assert!((l - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_drive_loss_to_zero() {
        let spec = ModelSpec {
            kind: ModelKind::Logistic,
            n_features: 1,
            n_classes: 2,
            hidden_units: 0,
            init: InitKind::Zeros,
        };
        // Huge weight on the true class for x = 1, label 0.
        let params = ParamVector::new(vec![50.0, -50.0, 0.0, 0.0], spec.layout()).unwrap();
        let data = Dataset::new(vec![1.0], 1, vec![0], 2).unwrap();
        let l = loss(&params, &spec, &data, &[0]).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn loss_matches_direct_summation_oracle() {
        let spec = logistic_spec(3, 4);
        let params = spec.init_params(5);
        let data = tiny_dataset(6, 8, 3, 4);
        let all: Vec<usize> = (0..8).collect();
        // Independent arithmetic: recompute per-row softmax NLL from raw ops.
        let mut expected = 0.0;
        for &i in &all {
            let x = data.row(i);
            let w = params.segment("w").unwrap();
            let b = params.segment("b").unwrap();
            let z: Vec<f64> = (0..4)
                .map(|cls| {
                    b[cls]
                        + (0..3).map(|feat| w[cls * 3 + feat] * x[feat]).sum::<f64>()
                })
                .collect();
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            expected += -(z[data.label(i)].exp() / denom).ln();
        }
        expected /= 8.0;
        let got = loss(&params, &spec, &data, &all).unwrap();
        assert!((got - expected).abs() / expected.abs() < 1e-9);
    }

    #[test]
    fn loss_is_order_invariant() {
        let spec = logistic_spec(3, 4);
        let params = spec.init_params(5);
        let data = tiny_dataset(6, 12, 3, 4);
        let forward_order: Vec<usize> = (0..12).collect();
        let reverse_order: Vec<usize> = (0..12).rev().collect();
        let a = loss(&params, &spec, &data, &forward_order).unwrap();
        let b = loss(&params, &spec, &data, &reverse_order).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    /// Central finite differences of `loss_prox` along `n_dirs` random unit
    /// directions; the independent oracle for `gradient`.
    fn finite_diff_check(
        spec: &ModelSpec,
        data: &Dataset,
        batch: &[usize],
        prox_mu: f64,
        seed: u64,
        n_dirs: usize,
    ) {
        let params = spec.init_params(seed);
        let anchor = if prox_mu > 0.0 {
            Some(spec.init_params(seed + 1))
        } else {
            None
        };
        let grad = gradient(&params, spec, data, batch, anchor.as_ref(), prox_mu).unwrap();
        let mut rng = rng_from(mix(seed, 99));
        let eps = 1e-5;
        for _ in 0..n_dirs {
            let mut dir: Vec<f64> = (0..params.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|d| *d /= norm);
            let mut plus = params.clone();
            let mut minus = params.clone();
            for (i, d) in dir.iter().enumerate() {
                plus.values_mut()[i] += eps * d;
                minus.values_mut()[i] -= eps * d;
            }
            let lp = loss_prox(&plus, spec, data, batch, anchor.as_ref(), prox_mu).unwrap();
            let lm = loss_prox(&minus, spec, data, batch, anchor.as_ref(), prox_mu).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            let an: f64 = grad.values().iter().zip(&dir).map(|(g, d)| g * d).sum();
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
            assert!(rel <= 1e-5, "directional fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_logistic() {
        let data = tiny_dataset(7, 10, 4, 3);
        let batch: Vec<usize> = (0..10).collect();
        finite_diff_check(&logistic_spec(4, 3), &data, &batch, 0.0, 11, 40);
    }

    #[test]
    fn gradient_matches_finite_differences_mlp() {
        let data = tiny_dataset(8, 10, 4, 3);
        let batch: Vec<usize> = (0..10).collect();
        finite_diff_check(&mlp_spec(4, 3, 5), &data, &batch, 0.0, 12, 40);
    }

    #[test]
    fn gradient_with_prox_matches_finite_differences() {
        let data = tiny_dataset(9, 10, 4, 3);
        let batch: Vec<usize> = (0..10).collect();
        finite_diff_check(&logistic_spec(4, 3), &data, &batch, 0.95, 13, 40);
        finite_diff_check(&mlp_spec(4, 3, 5), &data, &batch, 0.95, 14, 40);
    }

    #[test]
    fn prox_term_vanishes_at_anchor() {
        let spec = logistic_spec(3, 3);
        let params = spec.init_params(4);
        let data = tiny_dataset(10, 6, 3, 3);
        let batch: Vec<usize> = (0..6).collect();
        let plain = gradient(&params, &spec, &data, &batch, None, 0.0).unwrap();
        let proxed = gradient(&params, &spec, &data, &batch, Some(&params), 0.95).unwrap();
        for (a, b) in plain.values().iter().zip(proxed.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn frozen_learning_rate_is_identity() {
        let spec = logistic_spec(3, 3);
        let params = spec.init_params(4);
        let data = tiny_dataset(10, 6, 3, 3);
        let shard: Vec<usize> = (0..6).collect();
        let cfg = SgdConfig {
            learning_rate: 0.0,
            ..SgdConfig::default()
        };
        let (out, _) = local_update(&params, &spec, &data, &shard, &cfg, 1).unwrap();
        assert_eq!(out, params);
    }

    #[test]
    fn one_full_batch_step_matches_closed_form() {
        let spec = logistic_spec(3, 3);
        let params = spec.init_params(4);
        let data = tiny_dataset(10, 6, 3, 3);
        let shard: Vec<usize> = (0..6).collect();
        let cfg = SgdConfig {
            learning_rate: 0.05,
            momentum: 0.0,
            local_steps: 1,
            full_batch: true,
            ..SgdConfig::default()
        };
        let grad = gradient(&params, &spec, &data, &shard, None, 0.0).unwrap();
        let mut expected = params.clone();
        expected.add_scaled(&grad, -0.05).unwrap();
        let (out, trace) = local_update(&params, &spec, &data, &shard, &cfg, 1).unwrap();
        for (a, b) in out.values().iter().zip(expected.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(trace.grad_norms.len(), 1);
        assert_eq!(trace.step_batches[0], shard);
    }

    #[test]
    fn local_update_is_bit_reproducible() {
        let spec = mlp_spec(4, 3, 5);
        let params = spec.init_params(4);
        let data = tiny_dataset(11, 40, 4, 3);
        let shard: Vec<usize> = (0..40).collect();
        let cfg = SgdConfig {
            learning_rate: 0.01,
            batch_size: 8,
            ..SgdConfig::default()
        };
        let (a, ta) = local_update(&params, &spec, &data, &shard, &cfg, 42).unwrap();
        let (b, tb) = local_update(&params, &spec, &data, &shard, &cfg, 42).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(ta, tb);
    }

    #[test]
    fn epoch_sampling_covers_shard_without_replacement() {
        let spec = logistic_spec(2, 2);
        let params = spec.init_params(4);
        let data = tiny_dataset(12, 16, 2, 2);
        let shard: Vec<usize> = (0..16).collect();
        let cfg = SgdConfig {
            learning_rate: 0.01,
            batch_size: 4,
            local_steps: 4,
            ..SgdConfig::default()
        };
        let (_, trace) = local_update(&params, &spec, &data, &shard, &cfg, 3).unwrap();
        let mut seen: Vec<usize> = trace.step_batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, shard, "one epoch must touch every sample exactly once");
    }

    #[test]
    fn full_batch_descent_below_inverse_smoothness() {
        // Deterministic GD with eta < 1/beta on the convex CE objective must
        // be non-increasing at every step.
        let spec = logistic_spec(4, 3);
        let params = spec.init_params(21);
        let data = tiny_dataset(22, 30, 4, 3);
        let shard: Vec<usize> = (0..30).collect();
        let beta = smoothness_bound(&data, &shard);
        let cfg = SgdConfig {
            learning_rate: 0.9 / beta,
            momentum: 0.0,
            local_steps: 25,
            full_batch: true,
            prox_mu: 0.0,
            ..SgdConfig::default()
        };
        let mut theta = params;
        let mut prev = loss(&theta, &spec, &data, &shard).unwrap();
        let one_step = SgdConfig {
            local_steps: 1,
            ..cfg
        };
        for _ in 0..25 {
            let (next, _) = local_update(&theta, &spec, &data, &shard, &one_step, 0).unwrap();
            let cur = loss(&next, &spec, &data, &shard).unwrap();
            assert!(cur <= prev + 1e-12, "loss increased: {prev} -> {cur}");
            prev = cur;
            theta = next;
        }
    }

    #[test]
    fn u_estimate_is_running_max() {
        let t1 = UpdateTrace {
            grad_norms: vec![0.5, 0.2],
            displacement: 0.0,
            step_batches: vec![],
        };
        assert_eq!(gradient_norm_bound_estimate(&[t1.clone()]).unwrap(), 0.5);
        let zero = UpdateTrace {
            grad_norms: vec![0.0, 0.0],
            displacement: 0.0,
            step_batches: vec![],
        };
        assert_eq!(gradient_norm_bound_estimate(&[zero]).unwrap(), 0.0);
        assert!(gradient_norm_bound_estimate(&[]).is_err());
    }

    #[test]
    fn u_estimate_concatenation_identity() {
        let mut rng = rng_from(17);
        for _ in 0..50 {
            let make = |rng: &mut rand::rngs::StdRng| UpdateTrace {
                grad_norms: (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0.0..3.0)).collect(),
                displacement: 0.0,
                step_batches: vec![],
            };
            let a: Vec<UpdateTrace> = (0..3).map(|_| make(&mut rng)).collect();
            let b: Vec<UpdateTrace> = (0..2).map(|_| make(&mut rng)).collect();
            let joined: Vec<UpdateTrace> = a.iter().chain(b.iter()).cloned().collect();
            let lhs = gradient_norm_bound_estimate(&joined).unwrap();
            let rhs = gradient_norm_bound_estimate(&a)
                .unwrap()
                .max(gradient_norm_bound_estimate(&b).unwrap());
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn empty_shard_is_an_error() {
        let spec = logistic_spec(2, 2);
        let params = spec.init_params(4);
        let data = tiny_dataset(12, 4, 2, 2);
        assert!(loss(&params, &spec, &data, &[]).is_err());
        assert!(gradient(&params, &spec, &data, &[], None, 0.0).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let spec = logistic_spec(2, 2);
        let other = logistic_spec(3, 2);
        let params = other.init_params(4);
        let data = tiny_dataset(12, 4, 2, 2);
        assert!(loss(&params, &spec, &data, &[0]).is_err());
        assert!(forward(&params, &spec, &[0.0, 1.0]).is_err());
    }
}
