//! Experiment harness: dataset assembly, deterministic splits, cell
//! evaluation, and result reporting.
//!
//! A *cell* is one (scenario × population × segmentation × classifier)
//! combination. [`build_dataset`] turns sessions into a [`LabeledDataset`]
//! by segmenting each wrist and labeling every candidate segment from the
//! ground-truth overlap; [`split`] partitions the dataset reproducibly;
//! [`run_cell`] trains one classifier on the training part and scores it on
//! the held-out test part; [`ResultsTable`] collects cell accuracies into
//! the human-readable text table and the machine-readable CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cnn::{predict_cnn, train_cnn, CnnConfig, CnnModel, EpochLog, TrainConfig};
use crate::data_model::{
    LabelTrack, MovementClass, Population, Scenario, Session, Wrist, NUM_CHANNELS,
};
use crate::error::{Error, Result};
use crate::features::{apply_scaler, extract_features, fit_scaler, FeatureVector};
use crate::segment::{
    segment_by_rest, sliding_windows, spot_gesture, RestConfig, SpotConfig, WindowConfig,
};
use crate::svm::{predict_svm, train_svm, SvmConfig, SvmModel};
use crate::util::{derive_seed, round_half_away};

// ---------------------------------------------------------------------------
// Cell coordinates
// ---------------------------------------------------------------------------

/// How candidate segments are carved out of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segmentation {
    /// The full extent of each detected (or tiled) action.
    Action,
    /// A fixed margin around the acceleration peak of each action.
    Spotting,
}

impl fmt::Display for Segmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segmentation::Action => "action",
            Segmentation::Spotting => "spotting",
        })
    }
}

impl FromStr for Segmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "action" => Ok(Segmentation::Action),
            "spotting" => Ok(Segmentation::Spotting),
            _ => Err(Error::InvalidConfig(format!("unknown segmentation {s:?}"))),
        }
    }
}

/// Which model family a cell trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Classifier {
    /// Linear one-vs-rest SVM over statistical features.
    Svm,
    /// 1-D convolutional network over the raw window.
    Cnn,
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classifier::Svm => "svm",
            Classifier::Cnn => "cnn",
        })
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(Classifier::Svm),
            "cnn" => Ok(Classifier::Cnn),
            _ => Err(Error::InvalidConfig(format!("unknown classifier {s:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Labeled dataset
// ---------------------------------------------------------------------------

/// One candidate segment with its label and provenance.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    /// Raw samples of the segment, shape (len × 12), canonical channel order.
    pub window: Array2<f64>,
    /// Target class, or [`MovementClass::Null`] in the unconstrained scenario.
    pub label: MovementClass,
    pub subject_id: String,
    pub session_id: String,
    pub wrist: Wrist,
    /// Index of the base segment within its recording's segmentation,
    /// counted before any discards.
    pub segment_index: usize,
}

/// A set of labeled segments drawn from one (scenario × population) corner,
/// segmented one way.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub items: Vec<DatasetItem>,
    pub scenario: Scenario,
    pub segmentation: Segmentation,
    pub population: Population,
    pub sample_rate_hz: f64,
    /// Fixed frame length items are centered into when fed to the CNN.
    pub cnn_time_points: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Distinct labels present, in class order.
    pub fn class_set(&self) -> Vec<MovementClass> {
        let set: BTreeSet<MovementClass> = self.items.iter().map(|it| it.label).collect();
        set.into_iter().collect()
    }
}

/// Segmentation parameters used when assembling a dataset.
#[derive(Debug, Clone, Default)]
pub struct DatasetConfig {
    /// Rest-energy action segmentation (paced scenario).
    pub rest: RestConfig,
    /// Non-overlapping window tiling (unconstrained scenario).
    pub window: WindowConfig,
    /// Peak-anchored narrowing for [`Segmentation::Spotting`].
    pub spot: SpotConfig,
}

/// Least ground-truth overlap, as a fraction of the segment, for a target
/// label to stick.
const TARGET_OVERLAP_MIN: f64 = 0.5;

/// Target label of `[start, end)` under the maximum-overlap rule: the class
/// with the most overlapping labeled samples wins if it is a target class
/// covering at least half the segment; anything else yields `None`.
pub fn target_label(track: &LabelTrack, start: usize, end: usize) -> Option<MovementClass> {
    let (class, count) = *track.overlaps(start, end).first()?;
    let fraction = count as f64 / (end - start) as f64;
    (class.is_target() && fraction >= TARGET_OVERLAP_MIN).then_some(class)
}

/// Segment every wrist of every session and label the segments from the
/// ground truth.
///
/// The paced scenario is carved by rest-energy segmentation, the
/// unconstrained one by non-overlapping windows; [`Segmentation::Spotting`]
/// then narrows each segment around its acceleration peak. A segment is
/// labeled with its maximum-overlap class when that class is a target
/// covering at least half of it; otherwise the segment becomes
/// [`MovementClass::Null`] in the unconstrained scenario and is discarded in
/// the paced one, where off-label stretches are protocol dead time rather
/// than a class. Both wrists contribute independently.
///
/// Recordings are consumed as-is; run drift removal first, since the rest
/// detector reads a biased signal as permanent motion.
pub fn build_dataset(
    sessions: &[&Session],
    scenario: Scenario,
    segmentation: Segmentation,
    cfg: &DatasetConfig,
) -> Result<LabeledDataset> {
    let first = sessions
        .first()
        .ok_or_else(|| Error::InvalidInput("no sessions to build a dataset from".into()))?;
    let sample_rate_hz = first.left.sample_rate_hz;
    let population = first.left.population;

    let mut items = Vec::new();
    for session in sessions {
        if session.scenario() != scenario {
            return Err(Error::InvalidInput(format!(
                "session {} is {} but the dataset is {scenario}",
                session.session_id,
                session.scenario()
            )));
        }
        for rec in [&session.left, &session.right] {
            if rec.population != population {
                return Err(Error::InvalidInput(format!(
                    "mixed populations in one dataset: {} vs {population}",
                    rec.population
                )));
            }
            if rec.sample_rate_hz != sample_rate_hz {
                return Err(Error::InvalidInput(format!(
                    "mixed sample rates in one dataset: {} vs {sample_rate_hz} Hz",
                    rec.sample_rate_hz
                )));
            }
        }
        let wrists = [
            (&session.left, &session.labels_left),
            (&session.right, &session.labels_right),
        ];
        for (rec, track) in wrists {
            let base = match scenario {
                Scenario::L1 => segment_by_rest(rec, &cfg.rest)?,
                Scenario::L2 => sliding_windows(rec, &cfg.window)?,
            };
            for (segment_index, seg) in base.iter().enumerate() {
                let label = match (target_label(track, seg.start(), seg.end()), scenario) {
                    (Some(class), _) => class,
                    (None, Scenario::L2) => MovementClass::Null,
                    (None, Scenario::L1) => continue,
                };
                let (start, end) = match segmentation {
                    Segmentation::Action => (seg.start(), seg.end()),
                    Segmentation::Spotting => {
                        let spot = spot_gesture(rec, seg, &cfg.spot)?;
                        (spot.start(), spot.end())
                    }
                };
                items.push(DatasetItem {
                    window: rec.samples.slice(s![start..end, ..]).to_owned(),
                    label,
                    subject_id: rec.subject_id.clone(),
                    session_id: session.session_id.clone(),
                    wrist: rec.wrist,
                    segment_index,
                });
            }
        }
    }
    if items.is_empty() {
        return Err(Error::InvalidInput(
            "no labeled segments survived dataset assembly".into(),
        ));
    }

    let as_samples = |seconds: f64| (seconds * sample_rate_hz).round() as usize;
    let cnn_time_points = match segmentation {
        Segmentation::Action => as_samples(cfg.window.window_s),
        Segmentation::Spotting => {
            as_samples(cfg.spot.margin_before_s) + as_samples(cfg.spot.margin_after_s) + 1
        }
    };
    Ok(LabeledDataset {
        items,
        scenario,
        segmentation,
        population,
        sample_rate_hz,
        cnn_time_points,
    })
}

/// Center a variable-length window in a fixed (12 × `time_points`) frame.
///
/// Longer windows are cropped symmetrically around their middle, shorter
/// ones zero-padded on both sides; the output is channel-major, ready for
/// the CNN.
pub fn center_window(window: &Array2<f64>, time_points: usize) -> Result<Array2<f64>> {
    if window.ncols() != NUM_CHANNELS {
        return Err(Error::DimensionMismatch {
            expected: NUM_CHANNELS,
            got: window.ncols(),
        });
    }
    if time_points == 0 {
        return Err(Error::InvalidConfig(
            "cannot center a window into zero time points".into(),
        ));
    }
    let len = window.nrows();
    let mut out = Array2::zeros((NUM_CHANNELS, time_points));
    if len >= time_points {
        let start = (len - time_points) / 2;
        for c in 0..NUM_CHANNELS {
            for j in 0..time_points {
                out[[c, j]] = window[[start + j, c]];
            }
        }
    } else {
        let offset = (time_points - len) / 2;
        for c in 0..NUM_CHANNELS {
            for (j, row) in window.rows().into_iter().enumerate() {
                out[[c, offset + j]] = row[c];
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// What a split keeps together as one assignable unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitUnit {
    /// Each item is assigned on its own, stratified per class.
    Segment,
    /// All items of one (subject, session) pair move together.
    Session,
}

/// A reproducible train/validation/test partition.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    /// Fraction of items for training.
    pub train: f64,
    /// Fraction for validation; 0 leaves validation empty.
    pub val: f64,
    /// Fraction for the held-out test part; must be positive.
    pub test: f64,
    /// Seed of the assignment shuffle.
    pub seed: u64,
    pub unit: SplitUnit,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            val: 0.0,
            test: 0.2,
            seed: 0,
            unit: SplitUnit::Segment,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "split ratio {name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        if self.test <= 0.0 {
            return Err(Error::InvalidConfig(
                "test ratio must be positive; evaluation needs held-out items".into(),
            ));
        }
        Ok(())
    }
}

/// Unit counts per part for a group of `n` units: validation and test get
/// the floors of their shares, training keeps every remainder. A group too
/// small to honor the ratios still sends one unit to test when it can;
/// otherwise everything lands in train and a warning is logged.
fn allocate(n: usize, spec: &SplitSpec, what: &str) -> (usize, usize, usize) {
    let mut n_val = (spec.val * n as f64).floor() as usize;
    let mut n_test = (spec.test * n as f64).floor() as usize;
    if n_test == 0 {
        if n >= 2 {
            log::warn!(
                "{what}: {n} unit(s) cannot honor test ratio {}; forcing one into test",
                spec.test
            );
            n_test = 1;
            n_val = n_val.min(n - 1);
        } else {
            log::warn!("{what}: a single unit cannot be split; assigning it to train");
        }
    }
    (n - n_val - n_test, n_val, n_test)
}

/// Part index (0 = train, 1 = val, 2 = test) of shuffled position `i`.
fn part_of(i: usize, n_val: usize, n_test: usize) -> usize {
    if i < n_test {
        2
    } else if i < n_test + n_val {
        1
    } else {
        0
    }
}

fn subset(ds: &LabeledDataset, indices: &[usize]) -> LabeledDataset {
    LabeledDataset {
        items: indices.iter().map(|&i| ds.items[i].clone()).collect(),
        scenario: ds.scenario,
        segmentation: ds.segmentation,
        population: ds.population,
        sample_rate_hz: ds.sample_rate_hz,
        cnn_time_points: ds.cnn_time_points,
    }
}

/// Partition a dataset into (train, validation, test).
///
/// With [`SplitUnit::Segment`] each class is shuffled and divided by the
/// ratios independently, so class proportions carry over; floor remainders
/// go to train. With [`SplitUnit::Session`] whole (subject, session) groups
/// are assigned, so no session leaks across parts. The same seed always
/// reproduces the same partition; an empty test part is an error.
pub fn split(
    ds: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    if ds.items.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "split"));
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    match spec.unit {
        SplitUnit::Segment => {
            let mut by_class: BTreeMap<MovementClass, Vec<usize>> = BTreeMap::new();
            for (i, item) in ds.items.iter().enumerate() {
                by_class.entry(item.label).or_default().push(i);
            }
            for (class, mut indices) in by_class {
                indices.shuffle(&mut rng);
                let (_, n_val, n_test) = allocate(indices.len(), spec, &format!("class {class}"));
                for (pos, index) in indices.into_iter().enumerate() {
                    parts[part_of(pos, n_val, n_test)].push(index);
                }
            }
        }
        SplitUnit::Session => {
            let mut by_session: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
            for (i, item) in ds.items.iter().enumerate() {
                by_session
                    .entry((item.subject_id.clone(), item.session_id.clone()))
                    .or_default()
                    .push(i);
            }
            let mut keys: Vec<(String, String)> = by_session.keys().cloned().collect();
            keys.shuffle(&mut rng);
            let (_, n_val, n_test) = allocate(keys.len(), spec, "session groups");
            for (pos, key) in keys.iter().enumerate() {
                parts[part_of(pos, n_val, n_test)].extend(by_session[key].iter().copied());
            }
        }
    }
    if parts[2].is_empty() {
        return Err(Error::InvalidInput(
            "test part came out empty; add items or raise the test ratio".into(),
        ));
    }
    // Class-ordered insertion would otherwise leak into batch order; sorting
    // restores recording order within each part.
    for part in &mut parts {
        part.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok((subset(ds, &train), subset(ds, &val), subset(ds, &test)))
}

// ---------------------------------------------------------------------------
// Confusion matrix
// ---------------------------------------------------------------------------

/// Counts of (true class → predicted class) over a test part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<MovementClass>,
    /// `counts[i][j]`: items of true class `i` predicted as class `j`.
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    /// Empty matrix over the given classes (sorted, duplicates rejected).
    pub fn new(mut classes: Vec<MovementClass>) -> Result<ConfusionMatrix> {
        if classes.is_empty() {
            return Err(Error::InvalidInput(
                "a confusion matrix needs at least one class".into(),
            ));
        }
        classes.sort();
        let before = classes.len();
        classes.dedup();
        if classes.len() != before {
            return Err(Error::InvalidInput(
                "duplicate classes in confusion matrix".into(),
            ));
        }
        let n = classes.len();
        Ok(ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
        })
    }

    fn index_of(&self, class: MovementClass) -> Result<usize> {
        self.classes
            .binary_search(&class)
            .map_err(|_| Error::InvalidInput(format!("class {class} is not part of this matrix")))
    }

    /// Count one (truth, prediction) pair.
    pub fn record(&mut self, truth: MovementClass, predicted: MovementClass) -> Result<()> {
        let t = self.index_of(truth)?;
        let p = self.index_of(predicted)?;
        self.counts[t][p] += 1;
        Ok(())
    }

    pub fn classes(&self) -> &[MovementClass] {
        &self.classes
    }

    pub fn count(&self, truth: MovementClass, predicted: MovementClass) -> usize {
        match (self.index_of(truth), self.index_of(predicted)) {
            (Ok(t), Ok(p)) => self.counts[t][p],
            _ => 0,
        }
    }

    /// Items of each true class, in class order.
    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    /// All recorded pairs.
    pub fn total(&self) -> usize {
        self.row_sums().iter().sum()
    }

    /// Correctly classified pairs (the diagonal).
    pub fn trace(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Fraction of correct predictions; 0 when nothing was recorded.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// CSV rendering: one row per true class, one column per prediction.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for c in &self.classes {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(&c.to_string());
            for n in row {
                out.push_str(&format!(",{n}"));
            }
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Cell evaluation
// ---------------------------------------------------------------------------

/// Classifier hyperparameters shared by every cell of one run.
///
/// `cnn` is a template: its `channels`, `time_points`, and `classes` are
/// replaced per dataset, the remaining architecture fields are used as-is.
#[derive(Debug, Clone)]
pub struct CellConfig {
    pub svm: SvmConfig,
    pub cnn: CnnConfig,
    pub cnn_train: TrainConfig,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            svm: SvmConfig::default(),
            cnn: CnnConfig::new(NUM_CHANNELS, 1, Vec::new()),
            cnn_train: TrainConfig::default(),
        }
    }
}

/// The trained model of one cell.
#[derive(Debug, Clone)]
pub enum ModelArtifact {
    Svm(SvmModel),
    Cnn(Box<CnnModel>),
}

/// Outcome of one evaluated cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    /// Test accuracy, `confusion.accuracy()`.
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// Held-out items the accuracy was measured on.
    pub n_test: usize,
    pub model: ModelArtifact,
    /// Per-epoch training curve; present for the CNN only.
    pub training_log: Option<Vec<EpochLog>>,
}

/// Split a dataset, train `classifier` on the training part, and score it on
/// the held-out test part.
///
/// The SVM folds any validation items into training — the margin optimizer
/// has no epoch-level knobs to tune on held-out data — while the CNN
/// requires a non-empty validation part for early stopping.
pub fn run_cell(
    ds: &LabeledDataset,
    classifier: Classifier,
    split_spec: &SplitSpec,
    cfg: &CellConfig,
) -> Result<CellOutcome> {
    let (train, val, test) = split(ds, split_spec)?;
    let classes = ds.class_set();
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two classes to evaluate, dataset has {}",
            classes.len()
        )));
    }
    let mut confusion = ConfusionMatrix::new(classes.clone())?;
    match classifier {
        Classifier::Svm => {
            let mut features = Vec::with_capacity(train.len() + val.len());
            for item in train.items.iter().chain(&val.items) {
                let mut f = extract_features(item.window.view())?;
                f.label = Some(item.label);
                features.push(f);
            }
            let scaler = fit_scaler(&features)?;
            let scaled: Vec<FeatureVector> = features
                .iter()
                .map(|f| apply_scaler(&scaler, f))
                .collect::<Result<_>>()?;
            let model = train_svm(&scaled, &scaler, &cfg.svm)?;
            for item in &test.items {
                let f = extract_features(item.window.view())?;
                let (predicted, _) = predict_svm(&model, &f)?;
                confusion.record(item.label, predicted)?;
            }
            Ok(CellOutcome {
                accuracy: confusion.accuracy(),
                n_test: test.len(),
                confusion,
                model: ModelArtifact::Svm(model),
                training_log: None,
            })
        }
        Classifier::Cnn => {
            if val.is_empty() {
                return Err(Error::InvalidConfig(
                    "the cnn needs a validation part for early stopping; set val > 0".into(),
                ));
            }
            let cnn_cfg = CnnConfig {
                channels: NUM_CHANNELS,
                time_points: ds.cnn_time_points,
                classes: classes.clone(),
                ..cfg.cnn.clone()
            };
            let frames = |part: &LabeledDataset| -> Result<Vec<Array2<f64>>> {
                part.items
                    .iter()
                    .map(|it| center_window(&it.window, ds.cnn_time_points))
                    .collect()
            };
            let labels =
                |part: &LabeledDataset| -> Vec<MovementClass> { part.items.iter().map(|it| it.label).collect() };
            let (train_x, val_x, test_x) = (frames(&train)?, frames(&val)?, frames(&test)?);
            let (model, log) = train_cnn(
                &train_x,
                &labels(&train),
                &val_x,
                &labels(&val),
                &cnn_cfg,
                &cfg.cnn_train,
            )?;
            for (x, item) in test_x.iter().zip(&test.items) {
                let (predicted, _) = predict_cnn(&model, x)?;
                confusion.record(item.label, predicted)?;
            }
            Ok(CellOutcome {
                accuracy: confusion.accuracy(),
                n_test: test.len(),
                confusion,
                model: ModelArtifact::Cnn(Box::new(model)),
                training_log: Some(log),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

/// Outcome of an exhaustive hyperparameter sweep.
#[derive(Debug, Clone)]
pub struct GridOutcome<T> {
    /// The winning candidate (a clone of `grid[best_index]`).
    pub best: T,
    pub best_index: usize,
    /// Score of every candidate, in grid order.
    pub scores: Vec<f64>,
}

/// Score every candidate and pick the best one.
///
/// Ties go to the earliest candidate in grid order; a scoring error or a
/// non-finite score aborts the sweep.
pub fn grid_search<T: Clone>(
    grid: &[T],
    mut score: impl FnMut(&T) -> Result<f64>,
) -> Result<GridOutcome<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("cannot search an empty grid".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    let mut best_index = 0;
    for (i, candidate) in grid.iter().enumerate() {
        let s = score(candidate)?;
        if !s.is_finite() {
            return Err(Error::Numeric(format!(
                "candidate {i} scored a non-finite value ({s})"
            )));
        }
        scores.push(s);
        if s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(GridOutcome {
        best: grid[best_index].clone(),
        best_index,
        scores,
    })
}

// ---------------------------------------------------------------------------
// Results table and reports
// ---------------------------------------------------------------------------

/// Coordinates of one cell in the results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub scenario: Scenario,
    pub population: Population,
    pub segmentation: Segmentation,
    pub classifier: Classifier,
}

/// Stored result of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    /// Test accuracy in [0, 1].
    pub accuracy: f64,
    pub n_test: usize,
}

/// Accuracies of every evaluated cell, keyed by cell coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    cells: BTreeMap<CellKey, CellResult>,
}

impl ResultsTable {
    pub fn new() -> ResultsTable {
        ResultsTable::default()
    }

    /// Add one cell; duplicates and out-of-range accuracies are rejected.
    pub fn insert(&mut self, key: CellKey, result: CellResult) -> Result<()> {
        if !result.accuracy.is_finite() || !(0.0..=1.0).contains(&result.accuracy) {
            return Err(Error::InvalidInput(format!(
                "cell accuracy must be in [0, 1], got {}",
                result.accuracy
            )));
        }
        if self.cells.contains_key(&key) {
            return Err(Error::InvalidInput(format!(
                "duplicate cell {}/{}/{}/{}",
                key.scenario, key.population, key.segmentation, key.classifier
            )));
        }
        self.cells.insert(key, result);
        Ok(())
    }

    pub fn get(&self, key: &CellKey) -> Option<&CellResult> {
        self.cells.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &CellResult)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Fixed-width text table: one row per scenario, one column per
    /// (population / segmentation / classifier) present, accuracies as
    /// whole percentages (half away from zero), `—` where a combination
    /// was not evaluated.
    pub fn render_text(&self) -> String {
        if self.cells.is_empty() {
            return String::from("(no results)\n");
        }
        let scenarios: BTreeSet<Scenario> = self.cells.keys().map(|k| k.scenario).collect();
        let columns: BTreeSet<(Population, Segmentation, Classifier)> = self
            .cells
            .keys()
            .map(|k| (k.population, k.segmentation, k.classifier))
            .collect();

        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec![String::from("scenario")];
        header.extend(
            columns
                .iter()
                .map(|(p, s, c)| format!("{p}/{s}/{c}")),
        );
        rows.push(header);
        for &scenario in &scenarios {
            let mut row = vec![scenario.to_string()];
            for &(population, segmentation, classifier) in &columns {
                let key = CellKey {
                    scenario,
                    population,
                    segmentation,
                    classifier,
                };
                row.push(match self.cells.get(&key) {
                    Some(r) => format!("{}%", round_half_away(r.accuracy * 100.0)),
                    None => String::from("—"),
                });
            }
            rows.push(row);
        }

        let n_cols = rows[0].len();
        let widths: Vec<usize> = (0..n_cols)
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let mut line = String::new();
            for (j, cell) in row.iter().enumerate() {
                if j > 0 {
                    line.push_str("  ");
                }
                line.push_str(cell);
                let pad = widths[j].saturating_sub(cell.chars().count());
                line.extend(std::iter::repeat(' ').take(pad));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    /// Machine-readable CSV, one row per cell in key order; byte-identical
    /// for equal tables.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,population,segmentation,classifier,accuracy,n_test\n");
        for (key, result) in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                key.scenario,
                key.population,
                key.segmentation,
                key.classifier,
                result.accuracy,
                result.n_test
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
