//! Compact convolutional classifier for fixed-length multichannel windows.
//!
//! The network mirrors the structure popularized for lightweight EEG/IMU
//! decoding: a temporal convolution whose 1-D kernels are shared across
//! channels, a depthwise spatial convolution that collapses the channel axis,
//! and a separable temporal convolution, each followed by batch
//! normalization, with ELU activations, average pooling, dropout, and a dense
//! softmax head. All convolutions are same-padded along time and bias-free.
//!
//! Training-mode forward passes use batch statistics inside the
//! normalization layers and (optionally) dropout; inference uses the running
//! statistics stored in the model, so a trained [`CnnModel`] is a pure
//! function of its inputs.

mod layers;
mod train;

pub use train::{serialize_training_log, train_cnn, EpochLog, TrainConfig};

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data_model::MovementClass;
use crate::util::derive_seed;
use crate::{Error, Result};

use layers::*;

/// Format tag written as the first line of a serialized model.
pub const CNN_FORMAT: &str = "cnn.v1";

/// Hyperparameters of the compact CNN.
///
/// `separable_filters` defaults to `temporal_filters * depth_multiplier`, and
/// the temporal kernel to half the sample rate (50 taps at 100 Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    /// Input channel count C.
    pub channels: usize,
    /// Input window length T in samples.
    pub time_points: usize,
    /// Temporal filter count F1.
    pub temporal_filters: usize,
    /// Depth multiplier D of the depthwise stage (maps = F1·D).
    pub depth_multiplier: usize,
    /// Output maps F2 of the separable stage.
    pub separable_filters: usize,
    /// Temporal kernel width in samples.
    pub temporal_kernel: usize,
    /// Kernel width of the separable depthwise convolution.
    pub separable_kernel: usize,
    /// First average-pool factor.
    pub pool1: usize,
    /// Second average-pool factor.
    pub pool2: usize,
    /// Dropout rate in [0, 1).
    pub dropout_rate: f64,
    /// Classes the softmax head distinguishes; stored sorted in the model.
    pub classes: Vec<MovementClass>,
    /// Seed for initialization and training-time randomness.
    pub seed: u64,
}

impl CnnConfig {
    /// Default architecture for a given input shape and class set.
    pub fn new(channels: usize, time_points: usize, classes: Vec<MovementClass>) -> Self {
        CnnConfig {
            channels,
            time_points,
            temporal_filters: 8,
            depth_multiplier: 2,
            separable_filters: 16,
            temporal_kernel: 50,
            separable_kernel: 16,
            pool1: 4,
            pool2: 8,
            dropout_rate: 0.25,
            classes,
            seed: 0,
        }
    }

    /// Sets the temporal kernel to half a period's worth of samples,
    /// i.e. `round(sample_rate / 2)`.
    pub fn with_sample_rate(mut self, sample_rate_hz: f64) -> Self {
        self.temporal_kernel = (sample_rate_hz / 2.0).round().max(1.0) as usize;
        self
    }

    /// Time lengths after the two pooling stages.
    pub fn pooled_lens(&self) -> (usize, usize) {
        let t1 = self.time_points / self.pool1;
        (t1, t1 / self.pool2)
    }

    /// Input width of the dense head.
    pub fn flat_dim(&self) -> usize {
        self.separable_filters * self.pooled_lens().1
    }

    fn maps(&self) -> usize {
        self.temporal_filters * self.depth_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("channels", self.channels),
            ("time_points", self.time_points),
            ("temporal_filters", self.temporal_filters),
            ("depth_multiplier", self.depth_multiplier),
            ("separable_filters", self.separable_filters),
            ("temporal_kernel", self.temporal_kernel),
            ("separable_kernel", self.separable_kernel),
            ("pool1", self.pool1),
            ("pool2", self.pool2),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.classes.len() < 2 {
            return Err(Error::InvalidConfig(
                "a classifier needs at least two classes".into(),
            ));
        }
        let mut sorted = self.classes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return Err(Error::InvalidConfig("duplicate class in class list".into()));
        }
        let (t1, t2) = self.pooled_lens();
        if t1 == 0 || t2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "pooling collapses {} time points to zero (got {} after pool1, {} after pool2)",
                self.time_points, t1, t2
            )));
        }
        Ok(())
    }
}

/// A trained (or freshly initialized) compact CNN.
///
/// Beyond the learnable tensors the model carries per-block running
/// normalization statistics and the per-channel input standardization
/// captured from the training set, so inference needs no external state.
#[derive(Debug, Clone)]
pub struct CnnModel {
    cfg: CnnConfig,
    temporal_w: Array2<f64>,
    bn1_gamma: Array1<f64>,
    bn1_beta: Array1<f64>,
    depthwise_w: Array2<f64>,
    bn2_gamma: Array1<f64>,
    bn2_beta: Array1<f64>,
    sep_depth_w: Array2<f64>,
    sep_point_w: Array2<f64>,
    bn3_gamma: Array1<f64>,
    bn3_beta: Array1<f64>,
    dense_w: Array2<f64>,
    dense_b: Array1<f64>,
    bn1_run_mean: Array1<f64>,
    bn1_run_var: Array1<f64>,
    bn2_run_mean: Array1<f64>,
    bn2_run_var: Array1<f64>,
    bn3_run_mean: Array1<f64>,
    bn3_run_var: Array1<f64>,
    input_mean: Array1<f64>,
    input_std: Array1<f64>,
}

/// Gradients of every learnable tensor, in the model's canonical order.
#[derive(Debug, Clone)]
pub struct CnnGrads {
    temporal_w: Array2<f64>,
    bn1_gamma: Array1<f64>,
    bn1_beta: Array1<f64>,
    depthwise_w: Array2<f64>,
    bn2_gamma: Array1<f64>,
    bn2_beta: Array1<f64>,
    sep_depth_w: Array2<f64>,
    sep_point_w: Array2<f64>,
    bn3_gamma: Array1<f64>,
    bn3_beta: Array1<f64>,
    dense_w: Array2<f64>,
    dense_b: Array1<f64>,
}

/// Batch normalization statistics observed on one training batch; feed them
/// to [`CnnModel::update_running_stats`] after each optimizer step.
#[derive(Debug, Clone)]
pub struct BatchStats {
    bn1: (Vec<f64>, Vec<f64>),
    bn2: (Vec<f64>, Vec<f64>),
    bn3: (Vec<f64>, Vec<f64>),
}

/// Builds a deterministically initialized model: weights are drawn from a
/// zero-mean uniform distribution with limit `sqrt(1 / fan_in)`, batch-norm
/// scales start at 1, every bias/shift at 0, running variances at 1, and the
/// input standardization at identity.
pub fn build_cnn(cfg: &CnnConfig) -> Result<CnnModel> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.classes.sort();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "cnn-init"));
    let mut uniform = |shape: (usize, usize), fan_in: usize| {
        let limit = (1.0 / fan_in as f64).sqrt();
        Array2::from_shape_simple_fn(shape, || rng.random_range(-limit..limit))
    };

    let (f1, f2) = (cfg.temporal_filters, cfg.separable_filters);
    let m = cfg.maps();
    let temporal_w = uniform((f1, cfg.temporal_kernel), cfg.temporal_kernel);
    let depthwise_w = uniform((m, cfg.channels), cfg.channels);
    let sep_depth_w = uniform((m, cfg.separable_kernel), cfg.separable_kernel);
    let sep_point_w = uniform((f2, m), m);
    let dense_w = uniform((cfg.classes.len(), cfg.flat_dim()), cfg.flat_dim());
    let n_classes = cfg.classes.len();
    let channels = cfg.channels;

    Ok(CnnModel {
        temporal_w,
        bn1_gamma: Array1::ones(f1),
        bn1_beta: Array1::zeros(f1),
        depthwise_w,
        bn2_gamma: Array1::ones(m),
        bn2_beta: Array1::zeros(m),
        sep_depth_w,
        sep_point_w,
        bn3_gamma: Array1::ones(f2),
        bn3_beta: Array1::zeros(f2),
        dense_w,
        dense_b: Array1::zeros(n_classes),
        bn1_run_mean: Array1::zeros(f1),
        bn1_run_var: Array1::ones(f1),
        bn2_run_mean: Array1::zeros(m),
        bn2_run_var: Array1::ones(m),
        bn3_run_mean: Array1::zeros(f2),
        bn3_run_var: Array1::ones(f2),
        input_mean: Array1::zeros(channels),
        input_std: Array1::ones(channels),
        cfg,
    })
}

impl CnnModel {
    pub fn config(&self) -> &CnnConfig {
        &self.cfg
    }

    /// Classes in softmax-output order (ascending class index).
    pub fn classes(&self) -> &[MovementClass] {
        &self.cfg.classes
    }

    /// Installs per-channel input standardization (std must be positive).
    pub fn set_input_stats(&mut self, mean: &[f64], std: &[f64]) -> Result<()> {
        if mean.len() != self.cfg.channels || std.len() != self.cfg.channels {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.channels,
                got: mean.len().max(std.len()),
            });
        }
        if std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(
                "input standard deviations must be positive and finite".into(),
            ));
        }
        self.input_mean = Array1::from(mean.to_vec());
        self.input_std = Array1::from(std.to_vec());
        Ok(())
    }

    /// Blends one batch's normalization statistics into the running ones:
    /// `running ← (1 − momentum)·running + momentum·batch`.
    pub fn update_running_stats(&mut self, stats: &BatchStats, momentum: f64) {
        let blend = |run: &mut Array1<f64>, batch: &[f64]| {
            for (r, &b) in run.iter_mut().zip(batch) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        };
        blend(&mut self.bn1_run_mean, &stats.bn1.0);
        blend(&mut self.bn1_run_var, &stats.bn1.1);
        blend(&mut self.bn2_run_mean, &stats.bn2.0);
        blend(&mut self.bn2_run_var, &stats.bn2.1);
        blend(&mut self.bn3_run_mean, &stats.bn3.0);
        blend(&mut self.bn3_run_var, &stats.bn3.1);
    }

    /// Learnable tensors in canonical order, flattened. Together with
    /// [`CnnModel::param_slices_mut`] and [`CnnGrads::slices`] this is the
    /// numerical-verification surface: perturb one entry, re-evaluate the
    /// loss, and compare against the analytic gradient.
    pub fn param_slices(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("temporal_w", self.temporal_w.as_slice().unwrap()),
            ("bn1_gamma", self.bn1_gamma.as_slice().unwrap()),
            ("bn1_beta", self.bn1_beta.as_slice().unwrap()),
            ("depthwise_w", self.depthwise_w.as_slice().unwrap()),
            ("bn2_gamma", self.bn2_gamma.as_slice().unwrap()),
            ("bn2_beta", self.bn2_beta.as_slice().unwrap()),
            ("sep_depth_w", self.sep_depth_w.as_slice().unwrap()),
            ("sep_point_w", self.sep_point_w.as_slice().unwrap()),
            ("bn3_gamma", self.bn3_gamma.as_slice().unwrap()),
            ("bn3_beta", self.bn3_beta.as_slice().unwrap()),
            ("dense_w", self.dense_w.as_slice().unwrap()),
            ("dense_b", self.dense_b.as_slice().unwrap()),
        ]
    }

    /// Mutable view of the learnable tensors, same order as
    /// [`CnnModel::param_slices`].
    pub fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("temporal_w", self.temporal_w.as_slice_mut().unwrap()),
            ("bn1_gamma", self.bn1_gamma.as_slice_mut().unwrap()),
            ("bn1_beta", self.bn1_beta.as_slice_mut().unwrap()),
            ("depthwise_w", self.depthwise_w.as_slice_mut().unwrap()),
            ("bn2_gamma", self.bn2_gamma.as_slice_mut().unwrap()),
            ("bn2_beta", self.bn2_beta.as_slice_mut().unwrap()),
            ("sep_depth_w", self.sep_depth_w.as_slice_mut().unwrap()),
            ("sep_point_w", self.sep_point_w.as_slice_mut().unwrap()),
            ("bn3_gamma", self.bn3_gamma.as_slice_mut().unwrap()),
            ("bn3_beta", self.bn3_beta.as_slice_mut().unwrap()),
            ("dense_w", self.dense_w.as_slice_mut().unwrap()),
            ("dense_b", self.dense_b.as_slice_mut().unwrap()),
        ]
    }

    /// Standardizes a batch of raw windows into a (B,C,T) tensor.
    fn standardize(&self, windows: &[&Array2<f64>]) -> Result<Array3<f64>> {
        let (c, t) = (self.cfg.channels, self.cfg.time_points);
        let mut x = Array3::zeros((windows.len(), c, t));
        for (b, w) in windows.iter().enumerate() {
            if w.dim() != (c, t) {
                return Err(Error::DimensionMismatch {
                    expected: c * t,
                    got: w.len(),
                });
            }
            for ci in 0..c {
                let (mu, sd) = (self.input_mean[ci], self.input_std[ci]);
                for ti in 0..t {
                    x[[b, ci, ti]] = (w[[ci, ti]] - mu) / sd;
                }
            }
        }
        Ok(x)
    }

    fn class_indices(&self, labels: &[MovementClass]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.cfg.classes.iter().position(|c| c == l).ok_or_else(|| {
                    Error::InvalidInput(format!("label {l} is not in the model's class list"))
                })
            })
            .collect()
    }

    /// Inference-mode class probabilities for a batch (running-stat batch
    /// norm, no dropout).
    fn forward_eval(&self, windows: &[&Array2<f64>]) -> Result<Array2<f64>> {
        let x = self.standardize(windows)?;
        let h1 = conv_temporal_forward(&x, &self.temporal_w);
        let n1 = bn4_forward_eval(
            &h1,
            &self.bn1_gamma,
            &self.bn1_beta,
            &self.bn1_run_mean,
            &self.bn1_run_var,
        );
        let h2 = depthwise_forward(&n1, &self.depthwise_w, self.cfg.depth_multiplier);
        let n2 = bn3_forward_eval(
            &h2,
            &self.bn2_gamma,
            &self.bn2_beta,
            &self.bn2_run_mean,
            &self.bn2_run_var,
        );
        let p1 = avgpool_forward(&elu_forward(&n2), self.cfg.pool1);
        let h3 = sep_depth_forward(&p1, &self.sep_depth_w);
        let h4 = pointwise_forward(&h3, &self.sep_point_w);
        let n3 = bn3_forward_eval(
            &h4,
            &self.bn3_gamma,
            &self.bn3_beta,
            &self.bn3_run_mean,
            &self.bn3_run_var,
        );
        let p2 = avgpool_forward(&elu_forward(&n3), self.cfg.pool2);
        let flat = flatten(&p2);
        let logits = dense_forward(&flat, &self.dense_w, &self.dense_b);
        Ok(softmax(&logits))
    }
}

fn flatten(x: &Array3<f64>) -> Array2<f64> {
    let (bsz, m, t) = x.dim();
    Array2::from_shape_fn((bsz, m * t), |(b, i)| x[[b, i / t, i % t]])
}

fn unflatten(x: &Array2<f64>, m: usize, t: usize) -> Array3<f64> {
    let bsz = x.nrows();
    Array3::from_shape_fn((bsz, m, t), |(b, mi, ti)| x[[b, mi * t + ti]])
}

/// Mean cross-entropy loss and analytic gradients on one batch, using
/// training-mode batch normalization.
///
/// Dropout is applied only when `dropout_rng` is `Some`; passing `None`
/// (as gradient checks do) makes the loss a deterministic, differentiable
/// function of the parameters. Also returns the batch normalization
/// statistics so the caller can fold them into the running estimates.
pub fn loss_and_gradients(
    model: &CnnModel,
    windows: &[&Array2<f64>],
    labels: &[MovementClass],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, CnnGrads, BatchStats)> {
    if windows.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if windows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: windows.len(),
            got: labels.len(),
        });
    }
    let targets = model.class_indices(labels)?;
    let cfg = &model.cfg;
    let rate = cfg.dropout_rate;

    // Forward, caching every intermediate the backward pass needs.
    let x = model.standardize(windows)?;
    let h1 = conv_temporal_forward(&x, &model.temporal_w);
    let (n1, bn1_cache, bn1_stats) = bn4_forward_train(&h1, &model.bn1_gamma, &model.bn1_beta);
    let h2 = depthwise_forward(&n1, &model.depthwise_w, cfg.depth_multiplier);
    let (n2, bn2_cache, bn2_stats) = bn3_forward_train(&h2, &model.bn2_gamma, &model.bn2_beta);
    let e2 = elu_forward(&n2);
    let p1 = avgpool_forward(&e2, cfg.pool1);
    let (d1, mask1) = dropout_forward(&p1, rate, dropout_rng.as_deref_mut());
    let h3 = sep_depth_forward(&d1, &model.sep_depth_w);
    let h4 = pointwise_forward(&h3, &model.sep_point_w);
    let (n3, bn3_cache, bn3_stats) = bn3_forward_train(&h4, &model.bn3_gamma, &model.bn3_beta);
    let e3 = elu_forward(&n3);
    let p2 = avgpool_forward(&e3, cfg.pool2);
    let (d2, mask2) = dropout_forward(&p2, rate, dropout_rng.as_deref_mut());
    let flat = flatten(&d2);
    let logits = dense_forward(&flat, &model.dense_w, &model.dense_b);
    let probs = softmax(&logits);
    let (loss, dlogits) = cross_entropy(&probs, &targets);

    // Backward.
    let (t1, t2) = cfg.pooled_lens();
    let (dflat, d_dense_w, d_dense_b) = dense_backward(&flat, &model.dense_w, &dlogits);
    let dd2 = unflatten(&dflat, cfg.separable_filters, t2);
    let dp2 = dropout_backward(&dd2, &mask2);
    let de3 = avgpool_backward(&dp2, cfg.pool2, t1);
    let dn3 = elu_backward(&e3, &de3);
    let (dh4, d_bn3_gamma, d_bn3_beta) = bn3_backward(&bn3_cache, &model.bn3_gamma, &dn3);
    let (dh3, d_sep_point_w) = pointwise_backward(&h3, &model.sep_point_w, &dh4);
    let (dd1, d_sep_depth_w) = sep_depth_backward(&d1, &model.sep_depth_w, &dh3);
    let dp1 = dropout_backward(&dd1, &mask1);
    let de2 = avgpool_backward(&dp1, cfg.pool1, cfg.time_points);
    let dn2 = elu_backward(&e2, &de2);
    let (dh2, d_bn2_gamma, d_bn2_beta) = bn3_backward(&bn2_cache, &model.bn2_gamma, &dn2);
    let (dn1, d_depthwise_w) =
        depthwise_backward(&n1, &model.depthwise_w, &dh2, cfg.depth_multiplier);
    let (dh1, d_bn1_gamma, d_bn1_beta) = bn4_backward(&bn1_cache, &model.bn1_gamma, &dn1);
    let d_temporal_w = conv_temporal_backward_w(&x, &dh1, cfg.temporal_kernel);

    Ok((
        loss,
        CnnGrads {
            temporal_w: d_temporal_w,
            bn1_gamma: d_bn1_gamma,
            bn1_beta: d_bn1_beta,
            depthwise_w: d_depthwise_w,
            bn2_gamma: d_bn2_gamma,
            bn2_beta: d_bn2_beta,
            sep_depth_w: d_sep_depth_w,
            sep_point_w: d_sep_point_w,
            bn3_gamma: d_bn3_gamma,
            bn3_beta: d_bn3_beta,
            dense_w: d_dense_w,
            dense_b: d_dense_b,
        },
        BatchStats {
            bn1: bn1_stats,
            bn2: bn2_stats,
            bn3: bn3_stats,
        },
    ))
}

impl CnnGrads {
    /// Gradient tensors flattened, same order as [`CnnModel::param_slices`].
    pub fn slices(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("temporal_w", self.temporal_w.as_slice().unwrap()),
            ("bn1_gamma", self.bn1_gamma.as_slice().unwrap()),
            ("bn1_beta", self.bn1_beta.as_slice().unwrap()),
            ("depthwise_w", self.depthwise_w.as_slice().unwrap()),
            ("bn2_gamma", self.bn2_gamma.as_slice().unwrap()),
            ("bn2_beta", self.bn2_beta.as_slice().unwrap()),
            ("sep_depth_w", self.sep_depth_w.as_slice().unwrap()),
            ("sep_point_w", self.sep_point_w.as_slice().unwrap()),
            ("bn3_gamma", self.bn3_gamma.as_slice().unwrap()),
            ("bn3_beta", self.bn3_beta.as_slice().unwrap()),
            ("dense_w", self.dense_w.as_slice().unwrap()),
            ("dense_b", self.dense_b.as_slice().unwrap()),
        ]
    }
}

/// Class probabilities for one window.
///
/// `train_mode = false` is the deterministic inference path. `train_mode =
/// true` uses batch-of-one normalization statistics and dropout driven by a
/// fixed model-seed-derived stream; it exists for inspecting the training
/// view of the network.
pub fn forward(model: &CnnModel, window: &Array2<f64>, train_mode: bool) -> Result<Vec<f64>> {
    if train_mode {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(model.cfg.seed, "cnn-forward-dropout"));
        train_probs(model, &[window], Some(&mut rng)).map(|p| p.row(0).to_vec())
    } else {
        model.forward_eval(&[window]).map(|p| p.row(0).to_vec())
    }
}

/// Training-mode probabilities (batch statistics, optional dropout).
fn train_probs(
    model: &CnnModel,
    windows: &[&Array2<f64>],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<Array2<f64>> {
    let cfg = &model.cfg;
    let x = model.standardize(windows)?;
    let h1 = conv_temporal_forward(&x, &model.temporal_w);
    let (n1, _, _) = bn4_forward_train(&h1, &model.bn1_gamma, &model.bn1_beta);
    let h2 = depthwise_forward(&n1, &model.depthwise_w, cfg.depth_multiplier);
    let (n2, _, _) = bn3_forward_train(&h2, &model.bn2_gamma, &model.bn2_beta);
    let p1 = avgpool_forward(&elu_forward(&n2), cfg.pool1);
    let (d1, _) = dropout_forward(&p1, cfg.dropout_rate, dropout_rng.as_deref_mut());
    let h3 = sep_depth_forward(&d1, &model.sep_depth_w);
    let h4 = pointwise_forward(&h3, &model.sep_point_w);
    let (n3, _, _) = bn3_forward_train(&h4, &model.bn3_gamma, &model.bn3_beta);
    let p2 = avgpool_forward(&elu_forward(&n3), cfg.pool2);
    let (d2, _) = dropout_forward(&p2, cfg.dropout_rate, dropout_rng.as_deref_mut());
    let flat = flatten(&d2);
    let logits = dense_forward(&flat, &model.dense_w, &model.dense_b);
    Ok(softmax(&logits))
}

/// Predicted class and probability vector for one window (inference mode).
/// Ties resolve to the lowest class index.
pub fn predict_cnn(model: &CnnModel, window: &Array2<f64>) -> Result<(MovementClass, Vec<f64>)> {
    let probs = forward(model, window, false)?;
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok((model.cfg.classes[best], probs))
}

/// Batch accuracy of the inference path.
pub fn cnn_accuracy(
    model: &CnnModel,
    windows: &[&Array2<f64>],
    labels: &[MovementClass],
) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::InvalidInput("empty evaluation set".into()));
    }
    if windows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: windows.len(),
            got: labels.len(),
        });
    }
    let probs = model.forward_eval(windows)?;
    let mut correct = 0usize;
    for (b, &label) in labels.iter().enumerate() {
        let row = probs.row(b);
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        if model.cfg.classes[best] == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

// ---------------------------------------------------------------------------
// Serialization: versioned text format of named tensors with shape headers.
// ---------------------------------------------------------------------------

fn write_tensor2(out: &mut impl Write, name: &str, t: &Array2<f64>) -> Result<()> {
    writeln!(out, "tensor,{name},{},{}", t.nrows(), t.ncols())?;
    for row in t.rows() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "row,{}", vals.join(","))?;
    }
    Ok(())
}

fn write_tensor1(out: &mut impl Write, name: &str, t: &Array1<f64>) -> Result<()> {
    writeln!(out, "tensor,{name},1,{}", t.len())?;
    let vals: Vec<String> = t.iter().map(|v| format!("{v}")).collect();
    writeln!(out, "row,{}", vals.join(","))?;
    Ok(())
}

/// Writes a model in the `cnn.v1` text format.
pub fn serialize_cnn_model(model: &CnnModel, out: &mut impl Write) -> Result<()> {
    let cfg = &model.cfg;
    writeln!(out, "format,{CNN_FORMAT}")?;
    writeln!(out, "channels,{}", cfg.channels)?;
    writeln!(out, "time_points,{}", cfg.time_points)?;
    writeln!(out, "temporal_filters,{}", cfg.temporal_filters)?;
    writeln!(out, "depth_multiplier,{}", cfg.depth_multiplier)?;
    writeln!(out, "separable_filters,{}", cfg.separable_filters)?;
    writeln!(out, "temporal_kernel,{}", cfg.temporal_kernel)?;
    writeln!(out, "separable_kernel,{}", cfg.separable_kernel)?;
    writeln!(out, "pool1,{}", cfg.pool1)?;
    writeln!(out, "pool2,{}", cfg.pool2)?;
    writeln!(out, "dropout_rate,{}", cfg.dropout_rate)?;
    writeln!(out, "seed,{}", cfg.seed)?;
    let tags: Vec<String> = cfg.classes.iter().map(|c| c.to_string()).collect();
    writeln!(out, "classes,{}", tags.join(","))?;
    write_tensor1(out, "input_mean", &model.input_mean)?;
    write_tensor1(out, "input_std", &model.input_std)?;
    write_tensor2(out, "temporal_w", &model.temporal_w)?;
    write_tensor1(out, "bn1_gamma", &model.bn1_gamma)?;
    write_tensor1(out, "bn1_beta", &model.bn1_beta)?;
    write_tensor2(out, "depthwise_w", &model.depthwise_w)?;
    write_tensor1(out, "bn2_gamma", &model.bn2_gamma)?;
    write_tensor1(out, "bn2_beta", &model.bn2_beta)?;
    write_tensor2(out, "sep_depth_w", &model.sep_depth_w)?;
    write_tensor2(out, "sep_point_w", &model.sep_point_w)?;
    write_tensor1(out, "bn3_gamma", &model.bn3_gamma)?;
    write_tensor1(out, "bn3_beta", &model.bn3_beta)?;
    write_tensor2(out, "dense_w", &model.dense_w)?;
    write_tensor1(out, "dense_b", &model.dense_b)?;
    write_tensor1(out, "bn1_run_mean", &model.bn1_run_mean)?;
    write_tensor1(out, "bn1_run_var", &model.bn1_run_var)?;
    write_tensor1(out, "bn2_run_mean", &model.bn2_run_mean)?;
    write_tensor1(out, "bn2_run_var", &model.bn2_run_var)?;
    write_tensor1(out, "bn3_run_mean", &model.bn3_run_mean)?;
    write_tensor1(out, "bn3_run_var", &model.bn3_run_var)?;
    Ok(())
}

struct ModelReader<I: Iterator<Item = std::io::Result<String>>> {
    lines: I,
}

impl<I: Iterator<Item = std::io::Result<String>>> ModelReader<I> {
    fn next_line(&mut self) -> Result<String> {
        match self.lines.next() {
            Some(line) => Ok(line?),
            None => Err(Error::MalformedModel("unexpected end of model file".into())),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let line = self.next_line()?;
        let (k, v) = line
            .split_once(',')
            .ok_or_else(|| Error::MalformedModel(format!("expected `{key},...`, got `{line}`")))?;
        if k != key {
            return Err(Error::MalformedModel(format!(
                "expected key `{key}`, got `{k}`"
            )));
        }
        Ok(v.to_string())
    }

    fn usize_field(&mut self, key: &str) -> Result<usize> {
        let v = self.keyed(key)?;
        v.parse()
            .map_err(|_| Error::MalformedModel(format!("bad {key} value `{v}`")))
    }

    fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let header = self.keyed("tensor")?;
        let mut parts = header.split(',');
        let got_name = parts.next().unwrap_or_default();
        let got_rows: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::MalformedModel(format!("bad tensor header for `{name}`")))?;
        let got_cols: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::MalformedModel(format!("bad tensor header for `{name}`")))?;
        if got_name != name || got_rows != rows || got_cols != cols {
            return Err(Error::MalformedModel(format!(
                "expected tensor `{name}` of shape {rows}x{cols}, got `{got_name}` {got_rows}x{got_cols}"
            )));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = self.keyed("row")?;
            let parsed: Vec<f64> = row
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| {
                    Error::MalformedModel(format!("non-numeric value in tensor `{name}`"))
                })?;
            if parsed.len() != cols {
                return Err(Error::MalformedModel(format!(
                    "tensor `{name}` row has {} values, expected {cols}",
                    parsed.len()
                )));
            }
            if parsed.iter().any(|v| !v.is_finite()) {
                return Err(Error::MalformedModel(format!(
                    "non-finite value in tensor `{name}`"
                )));
            }
            values.extend(parsed);
        }
        Ok(values)
    }

    fn tensor2(&mut self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let values = self.tensor(name, rows, cols)?;
        Ok(Array2::from_shape_vec((rows, cols), values).unwrap())
    }

    fn tensor1(&mut self, name: &str, len: usize) -> Result<Array1<f64>> {
        let values = self.tensor(name, 1, len)?;
        Ok(Array1::from(values))
    }
}

/// Reads a model written by [`serialize_cnn_model`], validating the format
/// tag, every tensor shape, and value finiteness.
pub fn parse_cnn_model(input: impl BufRead) -> Result<CnnModel> {
    let mut r = ModelReader {
        lines: input.lines(),
    };
    let format = r.keyed("format")?;
    if format != CNN_FORMAT {
        return Err(Error::MalformedModel(format!(
            "unsupported model format `{format}`"
        )));
    }
    let channels = r.usize_field("channels")?;
    let time_points = r.usize_field("time_points")?;
    let temporal_filters = r.usize_field("temporal_filters")?;
    let depth_multiplier = r.usize_field("depth_multiplier")?;
    let separable_filters = r.usize_field("separable_filters")?;
    let temporal_kernel = r.usize_field("temporal_kernel")?;
    let separable_kernel = r.usize_field("separable_kernel")?;
    let pool1 = r.usize_field("pool1")?;
    let pool2 = r.usize_field("pool2")?;
    let dropout_rate: f64 = r
        .keyed("dropout_rate")?
        .parse()
        .map_err(|_| Error::MalformedModel("bad dropout_rate".into()))?;
    let seed: u64 = r
        .keyed("seed")?
        .parse()
        .map_err(|_| Error::MalformedModel("bad seed".into()))?;
    let classes: Vec<MovementClass> = r
        .keyed("classes")?
        .split(',')
        .map(|t| {
            t.parse()
                .map_err(|_| Error::MalformedModel(format!("unknown class tag `{t}`")))
        })
        .collect::<Result<_>>()?;
    let cfg = CnnConfig {
        channels,
        time_points,
        temporal_filters,
        depth_multiplier,
        separable_filters,
        temporal_kernel,
        separable_kernel,
        pool1,
        pool2,
        dropout_rate,
        classes,
        seed,
    };
    cfg.validate()
        .map_err(|e| Error::MalformedModel(format!("invalid stored config: {e}")))?;

    let m = cfg.maps();
    let (f1, f2) = (cfg.temporal_filters, cfg.separable_filters);
    let input_mean = r.tensor1("input_mean", channels)?;
    let input_std = r.tensor1("input_std", channels)?;
    if input_std.iter().any(|&s| s <= 0.0) {
        return Err(Error::MalformedModel(
            "input_std entries must be positive".into(),
        ));
    }
    let model = CnnModel {
        temporal_w: r.tensor2("temporal_w", f1, cfg.temporal_kernel)?,
        bn1_gamma: r.tensor1("bn1_gamma", f1)?,
        bn1_beta: r.tensor1("bn1_beta", f1)?,
        depthwise_w: r.tensor2("depthwise_w", m, channels)?,
        bn2_gamma: r.tensor1("bn2_gamma", m)?,
        bn2_beta: r.tensor1("bn2_beta", m)?,
        sep_depth_w: r.tensor2("sep_depth_w", m, cfg.separable_kernel)?,
        sep_point_w: r.tensor2("sep_point_w", f2, m)?,
        bn3_gamma: r.tensor1("bn3_gamma", f2)?,
        bn3_beta: r.tensor1("bn3_beta", f2)?,
        dense_w: r.tensor2("dense_w", cfg.classes.len(), cfg.flat_dim())?,
        dense_b: r.tensor1("dense_b", cfg.classes.len())?,
        bn1_run_mean: r.tensor1("bn1_run_mean", f1)?,
        bn1_run_var: r.tensor1("bn1_run_var", f1)?,
        bn2_run_mean: r.tensor1("bn2_run_mean", m)?,
        bn2_run_var: r.tensor1("bn2_run_var", m)?,
        bn3_run_mean: r.tensor1("bn3_run_mean", f2)?,
        bn3_run_var: r.tensor1("bn3_run_var", f2)?,
        input_mean,
        input_std,
        cfg,
    };
    if model
        .bn1_run_var
        .iter()
        .chain(model.bn2_run_var.iter())
        .chain(model.bn3_run_var.iter())
        .any(|&v| v < 0.0)
    {
        return Err(Error::MalformedModel(
            "running variances must be non-negative".into(),
        ));
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
