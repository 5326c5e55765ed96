//! Minibatch training for the compact CNN: Adam updates, early stopping on
//! validation accuracy, and a per-epoch training log.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cnn::{build_cnn, cnn_accuracy, loss_and_gradients, CnnConfig, CnnGrads, CnnModel};
use crate::data_model::MovementClass;
use crate::util::derive_seed;
use crate::{Error, Result};

/// Momentum used when folding batch statistics into running estimates.
const BN_MOMENTUM: f64 = 0.1;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Adam step size.
    pub learning_rate: f64,
    /// Windows per minibatch.
    pub batch_size: usize,
    /// Maximum epochs.
    pub epochs: usize,
    /// Epochs without validation improvement before stopping early; 0
    /// disables early stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            patience: 15,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch's batches.
    pub train_loss: f64,
    /// Validation accuracy after the epoch.
    pub val_accuracy: f64,
}

/// Renders the log as `epoch,train_loss,val_accuracy` CSV.
pub fn serialize_training_log(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_accuracy\n");
    for e in log {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_accuracy));
    }
    out
}

/// Adam state: first/second moment per parameter tensor, in canonical order.
struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &CnnModel) -> Adam {
        let shapes: Vec<usize> = model.param_slices().iter().map(|(_, s)| s.len()).collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut CnnModel, grads: &CnnGrads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        let grad_slices = grads.slices();
        for (ti, (_, params)) in model.param_slices_mut().into_iter().enumerate() {
            let g = grad_slices[ti].1;
            let (m, v) = (&mut self.m[ti], &mut self.v[ti]);
            for i in 0..params.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                params[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains a model from scratch on `(train_x, train_y)`, evaluating on
/// `(val_x, val_y)` after every epoch.
///
/// Per-channel input standardization is measured on the training windows and
/// stored in the model. Training stops early after `patience` epochs without
/// a strict validation-accuracy improvement, and the returned model is the
/// snapshot with the best validation accuracy (earliest epoch on ties). The
/// shuffle and dropout streams derive from `cfg.seed`, so identical inputs
/// produce identical models.
pub fn train_cnn(
    train_x: &[Array2<f64>],
    train_y: &[MovementClass],
    val_x: &[Array2<f64>],
    val_y: &[MovementClass],
    cfg: &CnnConfig,
    opt: &TrainConfig,
) -> Result<(CnnModel, Vec<EpochLog>)> {
    opt.validate()?;
    if train_x.is_empty() || val_x.is_empty() {
        return Err(Error::InvalidInput(
            "training and validation sets must be non-empty".into(),
        ));
    }
    if train_x.len() != train_y.len() || val_x.len() != val_y.len() {
        return Err(Error::DimensionMismatch {
            expected: train_x.len(),
            got: train_y.len(),
        });
    }

    let mut model = build_cnn(cfg)?;
    let (mean, std) = input_stats(train_x, cfg.channels)?;
    model.set_input_stats(&mean, &std)?;

    let mut adam = Adam::new(&model);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "cnn-shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "cnn-dropout"));

    let val_refs: Vec<&Array2<f64>> = val_x.iter().collect();
    let mut indices: Vec<usize> = (0..train_x.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, CnnModel)> = None;
    let mut stale = 0usize;

    for epoch in 1..=opt.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in indices.chunks(opt.batch_size) {
            let windows: Vec<&Array2<f64>> = chunk.iter().map(|&i| &train_x[i]).collect();
            let labels: Vec<MovementClass> = chunk.iter().map(|&i| train_y[i]).collect();
            let (loss, grads, stats) =
                loss_and_gradients(&model, &windows, &labels, Some(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training loss became non-finite ({loss}) in epoch {epoch}; \
                     lower the learning rate"
                )));
            }
            adam.step(&mut model, &grads, opt.learning_rate);
            model.update_running_stats(&stats, BN_MOMENTUM);
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_x.len() as f64;
        let val_accuracy = cnn_accuracy(&model, &val_refs, val_y)?;
        log.push(EpochLog {
            epoch,
            train_loss,
            val_accuracy,
        });

        let improved = best
            .as_ref()
            .map(|(acc, _)| val_accuracy > *acc)
            .unwrap_or(true);
        if improved {
            best = Some((val_accuracy, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= opt.patience && opt.patience > 0 {
                log::info!(
                    "early stop at epoch {epoch}: no improvement for {stale} epochs"
                );
                break;
            }
        }
    }

    Ok((best.unwrap().1, log))
}

/// Per-channel mean and population standard deviation over every sample of
/// every window; zero-variance channels get standard deviation 1.
fn input_stats(windows: &[Array2<f64>], channels: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut mean = vec![0.0; channels];
    let mut count = 0usize;
    for w in windows {
        if w.nrows() != channels {
            return Err(Error::DimensionMismatch {
                expected: channels,
                got: w.nrows(),
            });
        }
        for c in 0..channels {
            mean[c] += w.row(c).sum();
        }
        count += w.ncols();
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; channels];
    for w in windows {
        for c in 0..channels {
            var[c] += w.row(c).iter().map(|&v| (v - mean[c]) * (v - mean[c])).sum::<f64>();
        }
    }
    let std = var
        .iter()
        .map(|&v| {
            let s = (v / count as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok((mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::serialize_cnn_model;
    use rand::Rng;
    use MovementClass::*;

    fn tiny_cfg() -> CnnConfig {
        CnnConfig {
            channels: 2,
            time_points: 32,
            temporal_filters: 2,
            depth_multiplier: 1,
            separable_filters: 2,
            temporal_kernel: 8,
            separable_kernel: 4,
            pool1: 4,
            pool2: 8,
            dropout_rate: 0.25,
            classes: vec![M1, M2],
            seed: 21,
        }
    }

    /// Two easily separated classes: a positive or negative bump on channel
    /// 0, plus noise on both channels.
    fn two_class_set(n: usize, seed: u64) -> (Vec<Array2<f64>>, Vec<MovementClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let positive = i % 2 == 0;
            let mut w = Array2::from_shape_simple_fn((2, 32), || rng.random_range(-0.2..0.2));
            for t in 8..24 {
                w[[0, t]] += if positive { 1.0 } else { -1.0 };
            }
            xs.push(w);
            ys.push(if positive { M1 } else { M2 });
        }
        (xs, ys)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let cfg = tiny_cfg();
        let (xs, ys) = two_class_set(8, 1);
        let opt = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            epochs: 3,
            patience: 10,
        };
        let (model, log) = train_cnn(&xs, &ys, &xs, &ys, &cfg, &opt).unwrap();
        assert_eq!(log.len(), 3);

        let reference = build_cnn(&cfg).unwrap();
        for ((_, got), (_, want)) in model.param_slices().iter().zip(reference.param_slices()) {
            assert_eq!(*got, want);
        }
    }

    #[test]
    fn plain_gradient_descent_on_a_fixed_batch_descends_monotonically() {
        // Small plain-SGD steps on one fixed batch (no dropout): each loss
        // must be no higher than the previous one, up to 1e-6 slack.
        let mut cfg = tiny_cfg();
        cfg.dropout_rate = 0.0;
        let mut model = build_cnn(&cfg).unwrap();
        let (xs, ys) = two_class_set(6, 3);
        let refs: Vec<&Array2<f64>> = xs.iter().collect();
        let (mean, std) = input_stats(&xs, 2).unwrap();
        model.set_input_stats(&mean, &std).unwrap();

        let lr = 1e-3;
        let mut prev = f64::INFINITY;
        for _ in 0..60 {
            let (loss, grads, _) = loss_and_gradients(&model, &refs, &ys, None).unwrap();
            assert!(
                loss <= prev + 1e-6,
                "loss rose from {prev} to {loss} under small-step descent"
            );
            prev = loss;
            let gs = grads.slices();
            for (ti, (_, params)) in model.param_slices_mut().into_iter().enumerate() {
                for (p, g) in params.iter_mut().zip(gs[ti].1) {
                    *p -= lr * g;
                }
            }
        }
    }

    #[test]
    fn single_window_is_memorized() {
        let mut cfg = tiny_cfg();
        cfg.dropout_rate = 0.0;
        cfg.classes = vec![M1, M2, Rest];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = vec![Array2::from_shape_simple_fn((2, 32), || {
            rng.random_range(-1.0..1.0)
        })];
        let ys = vec![M2];
        let opt = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 1,
            epochs: 500,
            patience: 0,
        };
        let (_, log) = train_cnn(&xs, &ys, &xs, &ys, &cfg, &opt).unwrap();
        let final_loss = log.last().unwrap().train_loss;
        assert!(final_loss < 0.01, "final training loss {final_loss}");
    }

    #[test]
    fn two_class_problem_reaches_95_percent_validation_accuracy() {
        let cfg = tiny_cfg();
        let (train_x, train_y) = two_class_set(40, 10);
        let (val_x, val_y) = two_class_set(20, 11);
        let opt = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 8,
            epochs: 100,
            patience: 100,
        };
        let (model, log) = train_cnn(&train_x, &train_y, &val_x, &val_y, &cfg, &opt).unwrap();
        let best = log
            .iter()
            .map(|e| e.val_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best >= 0.95, "best validation accuracy {best}");
        assert!(log.len() <= 100);

        let val_refs: Vec<&Array2<f64>> = val_x.iter().collect();
        let snapshot_acc = cnn_accuracy(&model, &val_refs, &val_y).unwrap();
        assert!(
            (snapshot_acc - best).abs() < 1e-12,
            "returned snapshot accuracy {snapshot_acc} != best logged {best}"
        );
    }

    #[test]
    fn early_stopping_cuts_the_log_short() {
        let cfg = tiny_cfg();
        let (xs, ys) = two_class_set(12, 6);
        // Validation pairs share a window but disagree on the label, so any
        // deterministic classifier scores exactly 50% — accuracy can never
        // improve after epoch 1.
        let (base, _) = two_class_set(4, 7);
        let val_x: Vec<Array2<f64>> = base.iter().flat_map(|w| [w.clone(), w.clone()]).collect();
        let val_y: Vec<MovementClass> = base.iter().flat_map(|_| [M1, M2]).collect();
        let opt = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            epochs: 50,
            patience: 2,
        };
        let (_, log) = train_cnn(&xs, &ys, &val_x, &val_y, &cfg, &opt).unwrap();
        assert_eq!(log.len(), 3, "epoch 1 sets the best, two stale epochs stop");
        assert!(log.iter().all(|e| (e.val_accuracy - 0.5).abs() < 1e-12));
    }

    #[test]
    fn same_seed_trains_to_identical_bytes() {
        let cfg = tiny_cfg();
        let (train_x, train_y) = two_class_set(16, 8);
        let (val_x, val_y) = two_class_set(8, 9);
        let opt = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            epochs: 5,
            patience: 5,
        };
        let run = || {
            let (model, log) =
                train_cnn(&train_x, &train_y, &val_x, &val_y, &cfg, &opt).unwrap();
            let mut bytes = Vec::new();
            serialize_cnn_model(&model, &mut bytes).unwrap();
            (bytes, serialize_training_log(&log))
        };
        let (b1, l1) = run();
        let (b2, l2) = run();
        assert_eq!(b1, b2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn training_log_serializes_as_csv() {
        let log = vec![
            EpochLog {
                epoch: 1,
                train_loss: 0.5,
                val_accuracy: 0.75,
            },
            EpochLog {
                epoch: 2,
                train_loss: 0.25,
                val_accuracy: 1.0,
            },
        ];
        assert_eq!(
            serialize_training_log(&log),
            "epoch,train_loss,val_accuracy\n1,0.5,0.75\n2,0.25,1\n"
        );
    }

    #[test]
    fn empty_sets_are_rejected() {
        let cfg = tiny_cfg();
        let (xs, ys) = two_class_set(4, 2);
        let err = train_cnn(&[], &[], &xs, &ys, &cfg, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
