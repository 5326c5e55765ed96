//! Python bindings for the activity recognition chain.
//!
//! The extension module `wristarc_py` mirrors the stages of the pipeline:
//! synthesize sessions, remove drift, fuse attitude, segment, extract
//! features, assemble labeled datasets, and train/evaluate the two
//! classifiers. Heavy operations release the GIL.
//!
//! Sample windows cross the boundary as plain lists of 12-value rows;
//! classes, wrists, scenarios, and channels cross as their canonical string
//! tags (`"M1"`, `"left"`, `"L1"`, `"acc_x"`, ...).

use std::str::FromStr;

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use wristarc::cnn::{
    parse_cnn_model, predict_cnn, serialize_cnn_model, CnnConfig, CnnModel, TrainConfig,
};
use wristarc::data_model::{
    ChannelId, MovementClass, Population, Recording, Scenario, Segment, Session, Wrist,
    NUM_CHANNELS,
};
use wristarc::derive_seed;
use wristarc::error::{Error, ErrorCategory};
use wristarc::eval::{
    build_dataset, center_window, run_cell, split, CellConfig, Classifier, DatasetConfig,
    LabeledDataset, ModelArtifact, Segmentation, SplitSpec, SplitUnit,
};
use wristarc::features::{extract_features, feature_names};
use wristarc::preprocess::{fuse_attitude, remove_drift_session, DriftConfig, FusionConfig};
use wristarc::segment::{
    segment_by_rest, short_time_energy, sliding_windows, spot_gesture, PeakChannel, RestConfig,
    SpotConfig, WindowConfig,
};
use wristarc::svm::{parse_svm_model, predict_svm, serialize_svm_model, SvmConfig, SvmModel};
use wristarc::synth::{default_models, synth_session, Hemiparesis, PlantedEvent, ProtocolConfig};

// ---------------------------------------------------------------------------
// Error and string conversions
// ---------------------------------------------------------------------------

/// Map a pipeline error onto the closest Python exception: I/O failures to
/// `OSError`, configuration and data problems to `ValueError`, numeric
/// breakdowns to `RuntimeError`.
fn to_py(e: Error) -> PyErr {
    match (&e, e.category()) {
        (Error::Io(_), _) => PyIOError::new_err(e.to_string()),
        (_, ErrorCategory::Numeric) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Parse one of the canonical string tags (wrist, scenario, class, ...).
fn tag<T>(s: &str) -> PyResult<T>
where
    T: FromStr<Err = Error>,
{
    s.parse().map_err(to_py)
}

/// Turn a list of 12-value rows into a sample matrix.
fn rows_to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("window must contain at least one row"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != NUM_CHANNELS {
            return Err(PyValueError::new_err(format!(
                "row {i} has {} values, expected {NUM_CHANNELS}",
                row.len()
            )));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), NUM_CHANNELS), flat)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn array_to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

// ---------------------------------------------------------------------------
// Data types
// ---------------------------------------------------------------------------

/// One 12-channel wrist recording.
#[pyclass(name = "Recording", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyRecording {
    inner: Recording,
}

#[pymethods]
impl PyRecording {
    #[getter]
    fn subject_id(&self) -> &str {
        &self.inner.subject_id
    }

    #[getter]
    fn wrist(&self) -> String {
        self.inner.wrist.to_string()
    }

    #[getter]
    fn scenario(&self) -> String {
        self.inner.scenario.to_string()
    }

    #[getter]
    fn population(&self) -> String {
        self.inner.population.to_string()
    }

    #[getter]
    fn sample_rate_hz(&self) -> f64 {
        self.inner.sample_rate_hz
    }

    #[getter]
    fn start_time_ms(&self) -> f64 {
        self.inner.start_time_ms
    }

    /// Number of samples.
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Recording length in seconds.
    fn duration_s(&self) -> f64 {
        self.inner.len() as f64 / self.inner.sample_rate_hz
    }

    /// One channel by label (`"acc_x"`, ..., `"att_roll"`) as a list.
    fn channel(&self, name: &str) -> PyResult<Vec<f64>> {
        let id: ChannelId = tag(name)?;
        Ok(self.inner.channel(id).to_vec())
    }

    /// All samples as rows of 12 values in canonical channel order.
    fn to_rows(&self) -> Vec<Vec<f64>> {
        array_to_rows(&self.inner.samples)
    }

    fn __repr__(&self) -> String {
        format!(
            "Recording(subject_id='{}', wrist='{}', scenario='{}', samples={}, rate={})",
            self.inner.subject_id,
            self.inner.wrist,
            self.inner.scenario,
            self.inner.len(),
            self.inner.sample_rate_hz,
        )
    }
}

/// A dual-wrist session: two aligned recordings plus their label tracks.
#[pyclass(name = "Session", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySession {
    inner: Session,
}

#[pymethods]
impl PySession {
    #[getter]
    fn session_id(&self) -> &str {
        &self.inner.session_id
    }

    #[getter]
    fn subject_id(&self) -> &str {
        &self.inner.left.subject_id
    }

    #[getter]
    fn scenario(&self) -> String {
        self.inner.scenario().to_string()
    }

    #[getter]
    fn left(&self) -> PyRecording {
        PyRecording {
            inner: self.inner.left.clone(),
        }
    }

    #[getter]
    fn right(&self) -> PyRecording {
        PyRecording {
            inner: self.inner.right.clone(),
        }
    }

    /// Ground-truth intervals of one wrist as (start, end, class) sample
    /// index tuples.
    fn labels(&self, wrist: &str) -> PyResult<Vec<(usize, usize, String)>> {
        let track = match tag::<Wrist>(wrist)? {
            Wrist::Left => &self.inner.labels_left,
            Wrist::Right => &self.inner.labels_right,
        };
        Ok(track
            .intervals()
            .iter()
            .map(|iv| (iv.start_index, iv.end_index, iv.class.to_string()))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Session(session_id='{}', subject_id='{}', scenario='{}', samples={})",
            self.inner.session_id,
            self.inner.left.subject_id,
            self.inner.scenario(),
            self.inner.left.len(),
        )
    }
}

/// Half-open `[start, end)` sample interval, optionally labeled.
#[pyclass(name = "Segment", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct PySegment {
    inner: Segment,
}

#[pymethods]
impl PySegment {
    #[new]
    #[pyo3(signature = (start, end, label=None))]
    fn new(start: usize, end: usize, label: Option<&str>) -> PyResult<PySegment> {
        let label = label.map(tag::<MovementClass>).transpose()?;
        Ok(PySegment {
            inner: Segment::new(start, end, label).map_err(to_py)?,
        })
    }

    #[getter]
    fn start(&self) -> usize {
        self.inner.start()
    }

    #[getter]
    fn end(&self) -> usize {
        self.inner.end()
    }

    #[getter]
    fn label(&self) -> Option<String> {
        self.inner.label.map(|c| c.to_string())
    }

    /// Number of samples covered.
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        match self.inner.label {
            Some(c) => format!(
                "Segment(start={}, end={}, label='{c}')",
                self.inner.start(),
                self.inner.end()
            ),
            None => format!("Segment(start={}, end={})", self.inner.start(), self.inner.end()),
        }
    }
}

/// Ground truth of one synthesized movement.
#[pyclass(name = "PlantedEvent", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPlantedEvent {
    /// Movement class tag, e.g. `"M1"`; exposed as `class_` since `class`
    /// is a Python keyword.
    #[pyo3(get, name = "class_")]
    pub class: String,
    /// Performing wrist slot: `"dominant"`, `"non-dominant"`, or `"both"`.
    #[pyo3(get)]
    pub slot: String,
    /// Sample extent `[start, end)` shared by every performing wrist.
    #[pyo3(get)]
    pub start: usize,
    #[pyo3(get)]
    pub end: usize,
    /// Sample of maximum noise-free acceleration norm within the extent.
    #[pyo3(get)]
    pub peak: usize,
}

#[pymethods]
impl PyPlantedEvent {
    fn __repr__(&self) -> String {
        format!(
            "PlantedEvent(class='{}', slot='{}', start={}, end={}, peak={})",
            self.class, self.slot, self.start, self.end, self.peak
        )
    }
}

impl From<&PlantedEvent> for PyPlantedEvent {
    fn from(e: &PlantedEvent) -> Self {
        PyPlantedEvent {
            class: e.class.to_string(),
            slot: e.slot.to_string(),
            start: e.start_index,
            end: e.end_index,
            peak: e.peak_index,
        }
    }
}

/// Labeled segments from one (scenario × population) corner.
#[pyclass(name = "Dataset", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: LabeledDataset,
}

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn scenario(&self) -> String {
        self.inner.scenario.to_string()
    }

    #[getter]
    fn segmentation(&self) -> String {
        self.inner.segmentation.to_string()
    }

    #[getter]
    fn population(&self) -> String {
        self.inner.population.to_string()
    }

    /// Distinct labels present, in class order.
    fn classes(&self) -> Vec<String> {
        self.inner.class_set().iter().map(|c| c.to_string()).collect()
    }

    /// Per-item labels, in item order.
    fn labels(&self) -> Vec<String> {
        self.inner.items.iter().map(|it| it.label.to_string()).collect()
    }

    /// Raw sample window of item `i`.
    fn window(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        let item = self
            .inner
            .items
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("no item {i}")))?;
        Ok(array_to_rows(&item.window))
    }

    /// Reproducible (train, val, test) partition of the items.
    #[pyo3(signature = (train=0.6, val=0.2, test=0.2, seed=0, unit="segment"))]
    fn split(
        &self,
        train: f64,
        val: f64,
        test: f64,
        seed: u64,
        unit: &str,
    ) -> PyResult<(PyDataset, PyDataset, PyDataset)> {
        let spec = split_spec(train, val, test, seed, unit)?;
        let (a, b, c) = split(&self.inner, &spec).map_err(to_py)?;
        Ok((
            PyDataset { inner: a },
            PyDataset { inner: b },
            PyDataset { inner: c },
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({}/{}/{}, {} items)",
            self.inner.scenario,
            self.inner.segmentation,
            self.inner.population,
            self.inner.len(),
        )
    }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// Trained one-vs-rest linear SVM with its attached feature scaler.
#[pyclass(name = "SvmModel", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySvmModel {
    inner: SvmModel,
}

#[pymethods]
impl PySvmModel {
    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes.iter().map(|c| c.to_string()).collect()
    }

    /// Classify one raw window; returns (class, per-class scores).
    fn predict(&self, window: Vec<Vec<f64>>) -> PyResult<(String, Vec<f64>)> {
        let array = rows_to_array(window)?;
        let features = extract_features(array.view()).map_err(to_py)?;
        let (class, scores) = predict_svm(&self.inner, &features).map_err(to_py)?;
        Ok((class.to_string(), scores))
    }

    /// Serialize to the portable `svm.v1` text format.
    fn serialize(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        serialize_svm_model(&self.inner, &mut buf).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("SvmModel(classes={:?})", self.classes())
    }
}

/// Trained convolutional classifier over raw windows.
#[pyclass(name = "CnnModel", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCnnModel {
    inner: CnnModel,
}

#[pymethods]
impl PyCnnModel {
    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes().iter().map(|c| c.to_string()).collect()
    }

    /// Input window length in samples; shorter and longer windows are
    /// centered into this frame by `predict`.
    #[getter]
    fn time_points(&self) -> usize {
        self.inner.config().time_points
    }

    /// Classify one raw window; returns (class, per-class probabilities).
    fn predict(&self, window: Vec<Vec<f64>>) -> PyResult<(String, Vec<f64>)> {
        let array = rows_to_array(window)?;
        let frame = center_window(&array, self.inner.config().time_points).map_err(to_py)?;
        let (class, probs) = predict_cnn(&self.inner, &frame).map_err(to_py)?;
        Ok((class.to_string(), probs))
    }

    /// Serialize to the portable `cnn.v1` text format.
    fn serialize(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        serialize_cnn_model(&self.inner, &mut buf).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "CnnModel(classes={:?}, time_points={})",
            self.classes(),
            self.inner.config().time_points
        )
    }
}

/// Outcome of one trained and evaluated (dataset × classifier) cell.
#[pyclass(name = "CellOutcome", frozen)]
pub struct PyCellOutcome {
    accuracy: f64,
    n_test: usize,
    classes: Vec<MovementClass>,
    confusion: Vec<Vec<usize>>,
    model: ModelArtifact,
    training_log: Option<Vec<(usize, f64, f64)>>,
}

#[pymethods]
impl PyCellOutcome {
    /// Test accuracy in [0, 1].
    #[getter]
    fn accuracy(&self) -> f64 {
        self.accuracy
    }

    /// Held-out items the accuracy was measured on.
    #[getter]
    fn n_test(&self) -> usize {
        self.n_test
    }

    /// Confusion-matrix classes, in class order.
    #[getter]
    fn classes(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.to_string()).collect()
    }

    /// Confusion counts: `confusion[i][j]` is true class `i` predicted as `j`.
    #[getter]
    fn confusion(&self) -> Vec<Vec<usize>> {
        self.confusion.clone()
    }

    /// The trained model, an `SvmModel` or `CnnModel`.
    #[getter]
    fn model(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        Ok(match &self.model {
            ModelArtifact::Svm(m) => Py::new(py, PySvmModel { inner: m.clone() })?.into_any(),
            ModelArtifact::Cnn(m) => {
                Py::new(py, PyCnnModel { inner: (**m).clone() })?.into_any()
            }
        })
    }

    /// Per-epoch (epoch, train_loss, val_accuracy) curve; CNN only.
    #[getter]
    fn training_log(&self) -> Option<Vec<(usize, f64, f64)>> {
        self.training_log.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "CellOutcome(accuracy={:.4}, n_test={})",
            self.accuracy, self.n_test
        )
    }
}

// ---------------------------------------------------------------------------
// Pipeline functions
// ---------------------------------------------------------------------------

/// The 12 channel labels in canonical column order.
#[pyfunction]
fn channels() -> Vec<&'static str> {
    ChannelId::ALL.iter().map(|c| c.label()).collect()
}

/// Feature column names (`<channel>_<stat>`) over all 12 channels.
#[pyfunction(name = "feature_names")]
fn feature_names_py() -> Vec<String> {
    feature_names(&ChannelId::ALL)
}

/// Generate one dual-wrist session with exact ground truth.
///
/// Returns `(session, events)` where `events` are the planted movements.
#[pyfunction(name = "synth_session")]
#[pyo3(signature = (
    scenario="L1", seed=0, subject_id="S01", session_id=None, rest_s=5.0,
    n_target=4, n_nontarget=8, noise_std=0.05, drift_rate=0.01,
    sample_rate_hz=100.0, population="healthy", dominant="right",
    hemiparesis_wrist="left", hemiparesis_scale=None,
))]
#[allow(clippy::too_many_arguments)]
fn synth_session_py(
    scenario: &str,
    seed: u64,
    subject_id: &str,
    session_id: Option<&str>,
    rest_s: f64,
    n_target: usize,
    n_nontarget: usize,
    noise_std: f64,
    drift_rate: f64,
    sample_rate_hz: f64,
    population: &str,
    dominant: &str,
    hemiparesis_wrist: &str,
    hemiparesis_scale: Option<f64>,
) -> PyResult<(PySession, Vec<PyPlantedEvent>)> {
    let mut cfg = ProtocolConfig::new(tag::<Scenario>(scenario)?, seed);
    cfg.rest_s = rest_s;
    cfg.n_target = n_target;
    cfg.n_nontarget = n_nontarget;
    cfg.noise_std = noise_std;
    cfg.drift_rate = drift_rate;
    cfg.sample_rate_hz = sample_rate_hz;
    cfg.subject_id = subject_id.to_string();
    if let Some(id) = session_id {
        cfg.session_id = id.to_string();
    }
    cfg.population = tag::<Population>(population)?;
    cfg.dominant = tag::<Wrist>(dominant)?;
    cfg.hemiparesis = hemiparesis_scale
        .map(|scale| -> PyResult<Hemiparesis> {
            Ok(Hemiparesis {
                wrist: tag::<Wrist>(hemiparesis_wrist)?,
                amplitude_scale: scale,
            })
        })
        .transpose()?;

    let (session, events) = synth_session(&cfg, &default_models()).map_err(to_py)?;
    Ok((
        PySession { inner: session },
        events.iter().map(PyPlantedEvent::from).collect(),
    ))
}

/// Subtract a centered moving average from the acceleration channels of both
/// wrists.
#[pyfunction]
#[pyo3(signature = (session, highpass_window_s=2.0))]
fn remove_drift(session: &PySession, highpass_window_s: f64) -> PyResult<PySession> {
    let cfg = DriftConfig {
        highpass_window_s,
        ..DriftConfig::default()
    };
    Ok(PySession {
        inner: remove_drift_session(&session.inner, &cfg).map_err(to_py)?,
    })
}

/// Re-estimate the attitude channels of both wrists with the complementary
/// filter.
#[pyfunction(name = "fuse_attitude")]
#[pyo3(signature = (session, correction_gain=0.1, gravity_magnitude=9.81, use_magnetometer=true))]
fn fuse_attitude_py(
    session: &PySession,
    correction_gain: f64,
    gravity_magnitude: f64,
    use_magnetometer: bool,
) -> PyResult<PySession> {
    let cfg = FusionConfig {
        correction_gain,
        gravity_magnitude,
        use_magnetometer,
    };
    let s = &session.inner;
    Ok(PySession {
        inner: Session {
            left: fuse_attitude(&s.left, &cfg).map_err(to_py)?,
            right: fuse_attitude(&s.right, &cfg).map_err(to_py)?,
            labels_left: s.labels_left.clone(),
            labels_right: s.labels_right.clone(),
            session_id: s.session_id.clone(),
        },
    })
}

fn rest_config(
    energy_threshold: f64,
    energy_window_s: f64,
    min_rest_s: f64,
    min_action_s: f64,
) -> RestConfig {
    RestConfig {
        energy_window_s,
        energy_threshold,
        min_rest_s,
        min_action_s,
    }
}

/// Short-time energy of the acceleration norm, one value per sample.
#[pyfunction(name = "short_time_energy")]
#[pyo3(signature = (recording, energy_threshold=0.05, energy_window_s=0.5, min_rest_s=2.0, min_action_s=0.5))]
fn short_time_energy_py(
    recording: &PyRecording,
    energy_threshold: f64,
    energy_window_s: f64,
    min_rest_s: f64,
    min_action_s: f64,
) -> PyResult<Vec<f64>> {
    let cfg = rest_config(energy_threshold, energy_window_s, min_rest_s, min_action_s);
    short_time_energy(&recording.inner, &cfg).map_err(to_py)
}

/// Carve a drift-removed recording into action segments separated by rests.
#[pyfunction(name = "segment_by_rest")]
#[pyo3(signature = (recording, energy_threshold=0.05, energy_window_s=0.5, min_rest_s=2.0, min_action_s=0.5))]
fn segment_by_rest_py(
    recording: &PyRecording,
    energy_threshold: f64,
    energy_window_s: f64,
    min_rest_s: f64,
    min_action_s: f64,
) -> PyResult<Vec<PySegment>> {
    let cfg = rest_config(energy_threshold, energy_window_s, min_rest_s, min_action_s);
    let segs = segment_by_rest(&recording.inner, &cfg).map_err(to_py)?;
    Ok(segs.into_iter().map(|s| PySegment { inner: s }).collect())
}

/// Tile a recording into non-overlapping windows, dropping the remainder.
#[pyfunction(name = "sliding_windows")]
#[pyo3(signature = (recording, window_s=3.0))]
fn sliding_windows_py(recording: &PyRecording, window_s: f64) -> PyResult<Vec<PySegment>> {
    let segs = sliding_windows(&recording.inner, &WindowConfig { window_s }).map_err(to_py)?;
    Ok(segs.into_iter().map(|s| PySegment { inner: s }).collect())
}

fn peak_channel(name: &str) -> PyResult<PeakChannel> {
    if name == "accel_norm" {
        Ok(PeakChannel::AccelNorm)
    } else {
        Ok(PeakChannel::Single(tag::<ChannelId>(name)?))
    }
}

/// Narrow a segment to fixed margins around its peak.
#[pyfunction(name = "spot_gesture")]
#[pyo3(signature = (recording, segment, margin_before_s=0.25, margin_after_s=0.25, peak="accel_norm"))]
fn spot_gesture_py(
    recording: &PyRecording,
    segment: &PySegment,
    margin_before_s: f64,
    margin_after_s: f64,
    peak: &str,
) -> PyResult<PySegment> {
    let cfg = SpotConfig {
        margin_before_s,
        margin_after_s,
        peak_channel: peak_channel(peak)?,
    };
    Ok(PySegment {
        inner: spot_gesture(&recording.inner, &segment.inner, &cfg).map_err(to_py)?,
    })
}

/// Target label of `[start, end)` on one wrist under the maximum-overlap
/// rule, or `None`.
#[pyfunction(name = "target_label")]
fn target_label_py(
    session: &PySession,
    wrist: &str,
    start: usize,
    end: usize,
) -> PyResult<Option<String>> {
    let track = match tag::<Wrist>(wrist)? {
        Wrist::Left => &session.inner.labels_left,
        Wrist::Right => &session.inner.labels_right,
    };
    Ok(wristarc::eval::target_label(track, start, end).map(|c| c.to_string()))
}

/// (mean, min, max, std) per channel over `[start, end)`, or the whole
/// recording when no bounds are given.
#[pyfunction(name = "extract_features")]
#[pyo3(signature = (recording, start=None, end=None))]
fn extract_features_py(
    recording: &PyRecording,
    start: Option<usize>,
    end: Option<usize>,
) -> PyResult<Vec<f64>> {
    let rec = &recording.inner;
    let seg = Segment::new(start.unwrap_or(0), end.unwrap_or(rec.len()), None).map_err(to_py)?;
    let window = wristarc::data_model::slice(rec, &seg).map_err(to_py)?;
    Ok(extract_features(window).map_err(to_py)?.values)
}

fn dataset_config(
    energy_threshold: f64,
    energy_window_s: f64,
    min_rest_s: f64,
    min_action_s: f64,
    window_s: f64,
    margin_before_s: f64,
    margin_after_s: f64,
    peak: &str,
) -> PyResult<DatasetConfig> {
    Ok(DatasetConfig {
        rest: rest_config(energy_threshold, energy_window_s, min_rest_s, min_action_s),
        window: WindowConfig { window_s },
        spot: SpotConfig {
            margin_before_s,
            margin_after_s,
            peak_channel: peak_channel(peak)?,
        },
    })
}

/// Segment and label every wrist of every session into one dataset.
///
/// Sessions must share one scenario; the paced scenario is carved by rest
/// segmentation, the unconstrained one by non-overlapping windows. Run
/// `remove_drift` first.
#[pyfunction(name = "build_dataset")]
#[pyo3(signature = (
    sessions, segmentation="action", energy_threshold=0.05, energy_window_s=0.5,
    min_rest_s=2.0, min_action_s=0.5, window_s=3.0, margin_before_s=0.25,
    margin_after_s=0.25, peak="accel_norm",
))]
#[allow(clippy::too_many_arguments)]
fn build_dataset_py(
    py: Python<'_>,
    sessions: Vec<Py<PySession>>,
    segmentation: &str,
    energy_threshold: f64,
    energy_window_s: f64,
    min_rest_s: f64,
    min_action_s: f64,
    window_s: f64,
    margin_before_s: f64,
    margin_after_s: f64,
    peak: &str,
) -> PyResult<PyDataset> {
    if sessions.is_empty() {
        return Err(PyValueError::new_err("no sessions to build a dataset from"));
    }
    let segmentation: Segmentation = tag(segmentation)?;
    let cfg = dataset_config(
        energy_threshold,
        energy_window_s,
        min_rest_s,
        min_action_s,
        window_s,
        margin_before_s,
        margin_after_s,
        peak,
    )?;
    let refs: Vec<&Session> = sessions.iter().map(|s| &s.get().inner).collect();
    let scenario = refs[0].scenario();
    let ds = py
        .detach(|| build_dataset(&refs, scenario, segmentation, &cfg))
        .map_err(to_py)?;
    Ok(PyDataset { inner: ds })
}

fn split_spec(train: f64, val: f64, test: f64, seed: u64, unit: &str) -> PyResult<SplitSpec> {
    let unit = match unit {
        "segment" => SplitUnit::Segment,
        "session" => SplitUnit::Session,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown split unit {other:?}, expected 'segment' or 'session'"
            )))
        }
    };
    Ok(SplitSpec {
        train,
        val,
        test,
        seed,
        unit,
    })
}

/// Split a dataset, train one classifier, and score it on the held-out part.
///
/// `seed` drives the split, the SVM epoch order, and the CNN initialization
/// through stable per-stage sub-seeds, so equal inputs give equal outcomes.
#[pyfunction(name = "run_cell")]
#[pyo3(signature = (
    dataset, classifier="svm", seed=0, train=0.6, val=0.2, test=0.2,
    unit="segment", svm_c=1.0, svm_tolerance=1e-3, temporal_filters=8,
    depth_multiplier=2, separable_filters=16, temporal_kernel=50,
    separable_kernel=16, pool1=4, pool2=8, dropout_rate=0.25,
    learning_rate=1e-3, batch_size=32, epochs=100, patience=15,
))]
#[allow(clippy::too_many_arguments)]
fn run_cell_py(
    py: Python<'_>,
    dataset: &PyDataset,
    classifier: &str,
    seed: u64,
    train: f64,
    val: f64,
    test: f64,
    unit: &str,
    svm_c: f64,
    svm_tolerance: f64,
    temporal_filters: usize,
    depth_multiplier: usize,
    separable_filters: usize,
    temporal_kernel: usize,
    separable_kernel: usize,
    pool1: usize,
    pool2: usize,
    dropout_rate: f64,
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    patience: usize,
) -> PyResult<PyCellOutcome> {
    let classifier: Classifier = tag(classifier)?;
    let spec = split_spec(train, val, test, derive_seed(seed, "split"), unit)?;
    let cfg = CellConfig {
        svm: SvmConfig {
            c: svm_c,
            tolerance: svm_tolerance,
            max_passes: None,
            seed: derive_seed(seed, "svm"),
        },
        cnn: CnnConfig {
            temporal_filters,
            depth_multiplier,
            separable_filters,
            temporal_kernel,
            separable_kernel,
            pool1,
            pool2,
            dropout_rate,
            seed: derive_seed(seed, "cnn"),
            ..CnnConfig::new(NUM_CHANNELS, 1, Vec::new())
        },
        cnn_train: TrainConfig {
            learning_rate,
            batch_size,
            epochs,
            patience,
        },
    };
    let outcome = py
        .detach(|| run_cell(&dataset.inner, classifier, &spec, &cfg))
        .map_err(to_py)?;
    let classes = outcome.confusion.classes().to_vec();
    let confusion = classes
        .iter()
        .map(|&t| classes.iter().map(|&p| outcome.confusion.count(t, p)).collect())
        .collect();
    Ok(PyCellOutcome {
        accuracy: outcome.accuracy,
        n_test: outcome.n_test,
        classes,
        confusion,
        model: outcome.model,
        training_log: outcome
            .training_log
            .map(|log| log.iter().map(|e| (e.epoch, e.train_loss, e.val_accuracy)).collect()),
    })
}

/// Read an `svm.v1` model back from its text form.
#[pyfunction(name = "parse_svm_model")]
fn parse_svm_model_py(text: &str) -> PyResult<PySvmModel> {
    Ok(PySvmModel {
        inner: parse_svm_model(text.as_bytes()).map_err(to_py)?,
    })
}

/// Read a `cnn.v1` model back from its text form.
#[pyfunction(name = "parse_cnn_model")]
fn parse_cnn_model_py(text: &str) -> PyResult<PyCnnModel> {
    Ok(PyCnnModel {
        inner: parse_cnn_model(text.as_bytes()).map_err(to_py)?,
    })
}

// ---------------------------------------------------------------------------
// Module
// ---------------------------------------------------------------------------

/// The native `wristarc_py` extension module.
#[pymodule]
fn wristarc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRecording>()?;
    m.add_class::<PySession>()?;
    m.add_class::<PySegment>()?;
    m.add_class::<PyPlantedEvent>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PySvmModel>()?;
    m.add_class::<PyCnnModel>()?;
    m.add_class::<PyCellOutcome>()?;

    m.add_function(wrap_pyfunction!(channels, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names_py, m)?)?;
    m.add_function(wrap_pyfunction!(synth_session_py, m)?)?;
    m.add_function(wrap_pyfunction!(remove_drift, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_attitude_py, m)?)?;
    m.add_function(wrap_pyfunction!(short_time_energy_py, m)?)?;
    m.add_function(wrap_pyfunction!(segment_by_rest_py, m)?)?;
    m.add_function(wrap_pyfunction!(sliding_windows_py, m)?)?;
    m.add_function(wrap_pyfunction!(spot_gesture_py, m)?)?;
    m.add_function(wrap_pyfunction!(target_label_py, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features_py, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset_py, m)?)?;
    m.add_function(wrap_pyfunction!(run_cell_py, m)?)?;
    m.add_function(wrap_pyfunction!(parse_svm_model_py, m)?)?;
    m.add_function(wrap_pyfunction!(parse_cnn_model_py, m)?)?;

    m.add("NUM_CHANNELS", NUM_CHANNELS)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
