//! From-scratch multiclass linear SVM: one-vs-rest soft-margin hyperplanes
//! trained by dual coordinate descent.
//!
//! The bias is folded into the weights as a constant-1 feature, which removes
//! the dual equality constraint and leaves simple box constraints
//! `0 ≤ α_i ≤ C`. Each coordinate step minimizes the one-dimensional dual
//! exactly, so the dual objective never decreases; optimization stops when
//! every projected gradient is below the KKT tolerance.

use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data_model::MovementClass;
use crate::error::{Error, Result};
use crate::features::{apply_scaler, parse_scaler, serialize_scaler, FeatureVector, Scaler};
use crate::util::derive_seed;

// ---------------------------------------------------------------------------
// Config and model
// ---------------------------------------------------------------------------

/// Hyperparameters for dual coordinate descent.
#[derive(Debug, Clone)]
pub struct SvmConfig {
    /// Soft-margin penalty; larger values punish violations harder.
    pub c: f64,
    /// KKT tolerance: training stops when every projected gradient is
    /// smaller than this.
    pub tolerance: f64,
    /// Cap on coordinate epochs (one epoch sweeps every training point);
    /// `None` means 10 × n_samples.
    pub max_passes: Option<usize>,
    /// Seed for the per-epoch visiting order.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            tolerance: 1e-3,
            max_passes: None,
            seed: 0,
        }
    }
}

impl SvmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidConfig(format!("c must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Trained one-vs-rest linear SVM with its attached feature scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Classes in ascending canonical order, one hyperplane each.
    pub classes: Vec<MovementClass>,
    /// Per-class weight vectors, feature dimension each.
    pub weights: Vec<Vec<f64>>,
    /// Per-class biases.
    pub biases: Vec<f64>,
    /// Applied to raw feature vectors before scoring.
    pub scaler: Scaler,
}

/// Solution of one binary subproblem, exposed for optimality checks.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual variables, one per training point, in `[0, C]`.
    pub alpha: Vec<f64>,
    /// Dual objective after each epoch; non-decreasing.
    pub dual_objective_history: Vec<f64>,
    /// Whether the KKT tolerance was reached before the epoch cap.
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// Dual coordinate descent
// ---------------------------------------------------------------------------

/// Solve one soft-margin binary problem (labels ±1) by dual coordinate
/// descent on the bias-augmented formulation.
pub fn solve_binary_dual(
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &SvmConfig,
    seed: u64,
) -> Result<BinarySolution> {
    cfg.validate()?;
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(Error::InvalidInput(format!(
            "need matching non-empty inputs, got {n} points and {} labels",
            y.len()
        )));
    }
    let dim = x[0].len();
    for xi in x {
        if xi.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: xi.len(),
            });
        }
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidInput("labels must be ±1".into()));
    }

    // Diagonal of the Gram matrix for the augmented vectors (x_i, 1):
    // ‖x_i‖² + 1, bounded away from zero.
    let q_diag: Vec<f64> = x
        .iter()
        .map(|xi| xi.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_epochs = cfg.max_passes.unwrap_or(10 * n).max(1);

    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_epochs {
        order.shuffle(&mut rng);
        let mut max_pg = 0.0f64;
        for &i in &order {
            let score: f64 = w.iter().zip(&x[i]).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            let g = y[i] * score - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == cfg.c {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg.abs());
            if pg != 0.0 {
                let new_alpha = (alpha[i] - g / q_diag[i]).clamp(0.0, cfg.c);
                let delta = new_alpha - alpha[i];
                if delta != 0.0 {
                    for (wi, xi) in w.iter_mut().zip(&x[i]) {
                        *wi += delta * y[i] * xi;
                    }
                    b += delta * y[i];
                    alpha[i] = new_alpha;
                }
            }
        }
        let w_norm_sq: f64 =
            w.iter().map(|v| v * v).sum::<f64>() + b * b;
        history.push(alpha.iter().sum::<f64>() - 0.5 * w_norm_sq);
        if max_pg < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(BinarySolution {
        weights: w,
        bias: b,
        alpha,
        dual_objective_history: history,
        converged,
    })
}

// ---------------------------------------------------------------------------
// Multiclass training and prediction
// ---------------------------------------------------------------------------

/// Train a one-vs-rest linear SVM on already-standardized features.
///
/// `scaler` is the transform that standardized them; it travels with the
/// model so prediction can be fed raw vectors. Deterministic given
/// `cfg.seed`.
pub fn train_svm(
    train: &[FeatureVector],
    scaler: &Scaler,
    cfg: &SvmConfig,
) -> Result<SvmModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let dim = scaler.dim();
    let mut classes: Vec<MovementClass> = Vec::new();
    for v in train {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        let label = v
            .label
            .ok_or_else(|| Error::InvalidInput("unlabeled training vector".into()))?;
        if !classes.contains(&label) {
            classes.push(label);
        }
    }
    classes.sort_by_key(|c| c.index());
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {:?}",
            classes
        )));
    }

    let x: Vec<Vec<f64>> = train.iter().map(|v| v.values.clone()).collect();
    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    for &class in &classes {
        let y: Vec<f64> = train
            .iter()
            .map(|v| if v.label == Some(class) { 1.0 } else { -1.0 })
            .collect();
        let seed = derive_seed(cfg.seed, &format!("svm-{class}"));
        let sol = solve_binary_dual(&x, &y, cfg, seed)?;
        weights.push(sol.weights);
        biases.push(sol.bias);
    }
    Ok(SvmModel {
        classes,
        weights,
        biases,
        scaler: scaler.clone(),
    })
}

/// Score a raw feature vector: standardize, then `w_k·x̂ + b_k` per class.
/// The predicted class is the argmax; ties go to the lowest class index.
pub fn predict_svm(model: &SvmModel, v: &FeatureVector) -> Result<(MovementClass, Vec<f64>)> {
    let scaled = apply_scaler(&model.scaler, v)?;
    let scores: Vec<f64> = model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| {
            w.iter()
                .zip(&scaled.values)
                .map(|(wi, xi)| wi * xi)
                .sum::<f64>()
                + b
        })
        .collect();
    // Classes are stored in ascending order; a strict comparison keeps the
    // first (lowest-index) class on ties.
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    Ok((model.classes[best], scores))
}

// ---------------------------------------------------------------------------
// Serialization (versioned CSV)
// ---------------------------------------------------------------------------

const SVM_FORMAT: &str = "svm.v1";

/// Write a model as versioned CSV: format line, dimension, embedded scaler
/// rows, then one `class,<tag>,<b>,<w…>` row per class. Floats use the
/// shortest round-trip form, so equal models serialize to equal bytes.
pub fn serialize_svm_model(model: &SvmModel, mut w: impl Write) -> Result<()> {
    writeln!(w, "format,{SVM_FORMAT}")?;
    writeln!(w, "dim,{}", model.scaler.dim())?;
    let mut scaler_buf = Vec::new();
    serialize_scaler(&model.scaler, &mut scaler_buf)?;
    let scaler_text = String::from_utf8(scaler_buf).expect("scaler CSV is UTF-8");
    for line in scaler_text.lines().skip(1) {
        writeln!(w, "scaler,{line}")?;
    }
    for ((class, weights), bias) in model.classes.iter().zip(&model.weights).zip(&model.biases)
    {
        write!(w, "class,{class},{bias}")?;
        for wi in weights {
            write!(w, ",{wi}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Read a model written by [`serialize_svm_model`].
pub fn parse_svm_model(reader: impl io::Read) -> Result<SvmModel> {
    let mut lines = io::BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or(Error::EmptyStream)?
        .map_err(Error::Io)?;
    if header.trim() != format!("format,{SVM_FORMAT}") {
        return Err(Error::MalformedModel(format!(
            "expected 'format,{SVM_FORMAT}', got {header:?}"
        )));
    }
    let mut dim = None;
    let mut scaler_text = String::from("dim,mean,std\n");
    let mut classes = Vec::new();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (kind, rest) = trimmed
            .split_once(',')
            .ok_or_else(|| Error::MalformedModel(format!("line {line_no}: missing row kind")))?;
        match kind {
            "dim" => {
                dim = Some(rest.parse::<usize>().map_err(|_| {
                    Error::MalformedModel(format!("line {line_no}: bad dim"))
                })?);
            }
            "scaler" => {
                scaler_text.push_str(rest);
                scaler_text.push('\n');
            }
            "class" => {
                let mut fields = rest.split(',');
                let tag = fields
                    .next()
                    .ok_or_else(|| Error::MalformedModel(format!("line {line_no}: no class")))?;
                let class = MovementClass::from_str(tag)?;
                let bias: f64 = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| Error::MalformedModel(format!("line {line_no}: bad bias")))?;
                let mut w_row = Vec::new();
                for f in fields {
                    let v: f64 = f.parse().map_err(|_| {
                        Error::MalformedModel(format!("line {line_no}: bad weight {f:?}"))
                    })?;
                    w_row.push(v);
                }
                classes.push(class);
                weights.push(w_row);
                biases.push(bias);
            }
            other => {
                return Err(Error::MalformedModel(format!(
                    "line {line_no}: unknown row kind {other:?}"
                )));
            }
        }
    }
    let dim = dim.ok_or_else(|| Error::MalformedModel("missing dim row".into()))?;
    let scaler = parse_scaler(scaler_text.as_bytes())?;
    if scaler.dim() != dim {
        return Err(Error::MalformedModel(format!(
            "scaler dim {} does not match declared {dim}",
            scaler.dim()
        )));
    }
    if classes.len() < 2 {
        return Err(Error::MalformedModel("model needs at least 2 classes".into()));
    }
    for w_row in &weights {
        if w_row.len() != dim {
            return Err(Error::MalformedModel(format!(
                "weight row of {} values does not match dim {dim}",
                w_row.len()
            )));
        }
    }
    Ok(SvmModel {
        classes,
        weights,
        biases,
        scaler,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::fit_scaler;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn fv(values: Vec<f64>, label: Option<MovementClass>) -> FeatureVector {
        FeatureVector { values, label }
    }

    /// Gaussian blobs around well-separated 2-D centers, 50 points each.
    fn blobs(seed: u64, sigma: f64) -> Vec<FeatureVector> {
        let centers = [
            (0.0, 0.0, MovementClass::M1),
            (10.0, 0.0, MovementClass::M2),
            (0.0, 10.0, MovementClass::M3),
            (10.0, 10.0, MovementClass::M4),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut out = Vec::new();
        for &(cx, cy, class) in &centers {
            for _ in 0..50 {
                out.push(fv(
                    vec![cx + normal.sample(&mut rng), cy + normal.sample(&mut rng)],
                    Some(class),
                ));
            }
        }
        out
    }

    fn scaled_blobs(seed: u64) -> (Vec<FeatureVector>, Scaler) {
        let raw = blobs(seed, 1.0);
        let scaler = fit_scaler(&raw).unwrap();
        let scaled = raw
            .iter()
            .map(|v| apply_scaler(&scaler, v).unwrap())
            .collect();
        (scaled, scaler)
    }

    #[test]
    fn analytic_two_point_problem_puts_the_boundary_at_zero() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = vec![1.0, -1.0];
        let cfg = SvmConfig {
            c: 100.0,
            ..SvmConfig::default()
        };
        let sol = solve_binary_dual(&x, &y, &cfg, 1).unwrap();
        assert!(sol.converged);
        // Exact optimum: α = 0.5 on both points, w = −1, b = 0.
        let boundary = -sol.bias / sol.weights[0];
        assert!(boundary.abs() <= 0.1, "boundary {boundary} not near 0");
        assert!((sol.weights[0] + 1.0).abs() < 0.05);
        for (xi, yi) in x.iter().zip(&y) {
            let f = sol.weights[0] * xi[0] + sol.bias;
            assert!(yi * f > 0.0, "training point misclassified");
        }
    }

    #[test]
    fn separable_blobs_reach_full_training_accuracy() {
        let (train, scaler) = scaled_blobs(3);
        let model = train_svm(&train, &scaler, &SvmConfig::default()).unwrap();
        // predict_svm expects raw vectors; reconstruct them by unscaling is
        // unnecessary — score the raw blobs directly.
        let raw = blobs(3, 1.0);
        let correct = raw
            .iter()
            .filter(|v| predict_svm(&model, v).unwrap().0 == v.label.unwrap())
            .count();
        assert_eq!(correct, raw.len(), "training accuracy must be 100%");
    }

    #[test]
    fn kkt_conditions_hold_after_training() {
        let (train, _) = scaled_blobs(5);
        let x: Vec<Vec<f64>> = train.iter().map(|v| v.values.clone()).collect();
        let cfg = SvmConfig {
            tolerance: 1e-4,
            ..SvmConfig::default()
        };
        for class in [MovementClass::M1, MovementClass::M3] {
            let y: Vec<f64> = train
                .iter()
                .map(|v| if v.label == Some(class) { 1.0 } else { -1.0 })
                .collect();
            let sol = solve_binary_dual(&x, &y, &cfg, 9).unwrap();
            assert!(sol.converged, "solver must reach its KKT tolerance");
            for i in 0..x.len() {
                let f: f64 = sol
                    .weights
                    .iter()
                    .zip(&x[i])
                    .map(|(w, xi)| w * xi)
                    .sum::<f64>()
                    + sol.bias;
                let margin = y[i] * f;
                let a = sol.alpha[i];
                assert!((0.0..=cfg.c).contains(&a), "alpha out of box");
                if a <= 1e-12 {
                    assert!(margin >= 1.0 - 1e-3, "α=0 point with margin {margin}");
                } else if a >= cfg.c - 1e-12 {
                    assert!(margin <= 1.0 + 1e-3, "α=C point with margin {margin}");
                } else {
                    assert!(
                        (margin - 1.0).abs() <= 1e-3,
                        "free point with margin {margin}"
                    );
                }
            }
        }
    }

    #[test]
    fn dual_objective_never_decreases() {
        let (train, _) = scaled_blobs(11);
        let x: Vec<Vec<f64>> = train.iter().map(|v| v.values.clone()).collect();
        let y: Vec<f64> = train
            .iter()
            .map(|v| if v.label == Some(MovementClass::M2) { 1.0 } else { -1.0 })
            .collect();
        let sol = solve_binary_dual(&x, &y, &SvmConfig::default(), 21).unwrap();
        for pair in sol.dual_objective_history.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-9,
                "dual objective dropped: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn duplicated_dataset_predicts_identically() {
        let (train, scaler) = scaled_blobs(13);
        let mut doubled = train.clone();
        doubled.extend(train.iter().cloned());
        let m1 = train_svm(&train, &scaler, &SvmConfig::default()).unwrap();
        let m2 = train_svm(&doubled, &scaler, &SvmConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let probe = fv(
                vec![rng.random_range(-2.0..12.0), rng.random_range(-2.0..12.0)],
                None,
            );
            assert_eq!(
                predict_svm(&m1, &probe).unwrap().0,
                predict_svm(&m2, &probe).unwrap().0
            );
        }
    }

    #[test]
    fn prediction_is_invariant_to_positive_rescaling() {
        let (train, scaler) = scaled_blobs(17);
        let model = train_svm(&train, &scaler, &SvmConfig::default()).unwrap();
        let mut doubled = model.clone();
        for w in &mut doubled.weights {
            w.iter_mut().for_each(|v| *v *= 2.0);
        }
        doubled.biases.iter_mut().for_each(|v| *v *= 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let probe = fv(
                vec![rng.random_range(-2.0..12.0), rng.random_range(-2.0..12.0)],
                None,
            );
            assert_eq!(
                predict_svm(&model, &probe).unwrap().0,
                predict_svm(&doubled, &probe).unwrap().0
            );
        }
    }

    #[test]
    fn constructed_scores_prefer_class_a_and_break_ties_low() {
        let scaler = Scaler::identity(2);
        let model = SvmModel {
            classes: vec![MovementClass::M1, MovementClass::M2],
            weights: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            biases: vec![1.0, 0.0],
            scaler: scaler.clone(),
        };
        let (class, scores) = predict_svm(&model, &fv(vec![0.0, 0.0], None)).unwrap();
        assert_eq!(class, MovementClass::M1);
        assert_eq!(scores, vec![1.0, 0.0]);

        let tie = SvmModel {
            biases: vec![0.5, 0.5],
            ..model
        };
        let (class, _) = predict_svm(&tie, &fv(vec![0.0, 0.0], None)).unwrap();
        assert_eq!(class, MovementClass::M1, "ties go to the lowest class index");
    }

    #[test]
    fn degenerate_training_sets_are_rejected() {
        let scaler = Scaler::identity(1);
        assert!(train_svm(&[], &scaler, &SvmConfig::default()).is_err());
        let single = vec![
            fv(vec![0.0], Some(MovementClass::M1)),
            fv(vec![1.0], Some(MovementClass::M1)),
        ];
        assert!(train_svm(&single, &scaler, &SvmConfig::default()).is_err());
    }

    #[test]
    fn same_seed_serializes_to_identical_bytes() {
        let (train, scaler) = scaled_blobs(23);
        let cfg = SvmConfig::default();
        let mut a = Vec::new();
        serialize_svm_model(&train_svm(&train, &scaler, &cfg).unwrap(), &mut a).unwrap();
        let mut b = Vec::new();
        serialize_svm_model(&train_svm(&train, &scaler, &cfg).unwrap(), &mut b).unwrap();
        assert_eq!(a, b, "same data + seed must serialize identically");
    }

    #[test]
    fn model_csv_round_trips() {
        let (train, scaler) = scaled_blobs(29);
        let model = train_svm(&train, &scaler, &SvmConfig::default()).unwrap();
        let mut buf = Vec::new();
        serialize_svm_model(&model, &mut buf).unwrap();
        let back = parse_svm_model(&buf[..]).unwrap();
        assert_eq!(back, model);
    }
}
