//! Synthetic dual-wrist session generator with exact ground truth.
//!
//! Movements are smooth minimum-jerk-style acceleration pulses along
//! per-class canonical directions; non-target movements are longer,
//! multi-lobed templates. Sessions follow the two protocols: the constrained
//! scenario interleaves each target movement over the dominant, non-dominant,
//! and both-hands slots with fixed rests in between, while the unconstrained
//! scenario shuffles target and non-target events. Every planted pulse is
//! recorded as a [`PlantedEvent`] (class, wrist slot, extent, peak sample),
//! making the generator the oracle for segmentation, spotting, and
//! classification tests.
//!
//! Determinism contract: the pulse sequence (classes, order, durations,
//! amplitudes) depends only on `ProtocolConfig::seed`, while measurement
//! noise depends on `ProtocolConfig::noise_seed`. Corpus generation reuses
//! one protocol seed per session index across subjects, so with zero style
//! jitter all subjects perform identical pulses and differ only in noise.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data_model::{
    serialize_labels, serialize_meta, serialize_recording, ChannelId, LabelInterval, LabelTrack,
    MovementClass, Population, Recording, RecordingMeta, Scenario, Session, Wrist, NUM_CHANNELS,
};
use crate::util::derive_seed;
use crate::{Error, Result};

/// Constant magnetic field written to the magnetometer channels (arbitrary
/// units; the fusion stage only uses its direction).
pub const MAG_FIELD: [f64; 3] = [0.4, 0.0, -0.3];

/// Peak attitude excursion of a movement pulse, radians.
const ATT_AMPLITUDE: f64 = 0.3;

/// Minimum-jerk-style bell: zero value and slope at both ends, unit peak at
/// the midpoint. `p(τ) = 16 τ² (1−τ)²`.
pub fn bell(tau: f64) -> f64 {
    16.0 * tau * tau * (1.0 - tau) * (1.0 - tau)
}

/// Derivative of [`bell`] with respect to τ.
fn bell_dot(tau: f64) -> f64 {
    32.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau)
}

// ---------------------------------------------------------------------------
// Movement models
// ---------------------------------------------------------------------------

/// Signal template for one movement class.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementModel {
    pub class: MovementClass,
    /// Draw range for the pulse duration, seconds (min, max).
    pub duration_s: (f64, f64),
    /// Draw range for the peak acceleration magnitude, m/s² (min, max).
    pub peak_accel: (f64, f64),
    /// Unit direction of the acceleration pulse in sensor axes.
    pub direction: Vector3<f64>,
    /// Number of bell lobes (1 for targets, more for non-targets); lobe
    /// signs alternate.
    pub lobes: usize,
}

impl MovementModel {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        if !ok_range(self.duration_s) {
            return Err(Error::InvalidConfig(format!(
                "bad duration range {:?} for {}",
                self.duration_s, self.class
            )));
        }
        if !ok_range(self.peak_accel) {
            return Err(Error::InvalidConfig(format!(
                "bad peak range {:?} for {}",
                self.peak_accel, self.class
            )));
        }
        if (self.direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "direction for {} is not unit-norm",
                self.class
            )));
        }
        if self.lobes == 0 {
            return Err(Error::InvalidConfig("lobes must be positive".into()));
        }
        Ok(())
    }
}

/// Canonical direction of a target class: the four targets point along
/// orthogonal-ish axes so their feature statistics separate by construction.
fn target_direction(class: MovementClass) -> Vector3<f64> {
    use MovementClass::*;
    let s3 = 3.0_f64.sqrt().recip();
    match class {
        M1 => Vector3::new(1.0, 0.0, 0.0),
        M2 => Vector3::new(0.0, 1.0, 0.0),
        M3 => Vector3::new(0.0, 0.0, 1.0),
        M4 => Vector3::new(s3, s3, s3),
        _ => unreachable!("not a target class"),
    }
}

/// Deterministic, pairwise-distinct direction for the j-th non-target class
/// (0-based), via a golden-angle spiral on the sphere.
fn non_target_direction(j: usize) -> Vector3<f64> {
    let n = 19.0;
    let z = 1.0 - 2.0 * (j as f64 + 0.5) / n;
    let r = (1.0 - z * z).sqrt();
    let phi = j as f64 * 2.399_963_229_728_653;
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

/// The default template set: one model per target class (single-lobe, short)
/// and per non-target class (multi-lobe, longer).
pub fn default_models() -> Vec<MovementModel> {
    let mut models = Vec::new();
    for &class in MovementClass::TARGETS.iter() {
        models.push(MovementModel {
            class,
            duration_s: (1.2, 2.0),
            peak_accel: (2.0, 3.0),
            direction: target_direction(class),
            lobes: 1,
        });
    }
    for (j, &class) in MovementClass::ALL
        .iter()
        .filter(|c| !c.is_target() && c.kind() == crate::data_model::ClassKind::NonTarget)
        .enumerate()
    {
        models.push(MovementModel {
            class,
            duration_s: (2.2, 3.4),
            peak_accel: (1.5, 2.5),
            direction: non_target_direction(j),
            lobes: 2 + j % 3,
        });
    }
    models
}

/// Per-subject style variation applied to a model set: duration and
/// amplitude ranges scale by up to ±`duration_frac`/±`amplitude_frac`, and
/// directions rotate by up to `direction_deg` degrees about a random axis.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterConfig {
    pub direction_deg: f64,
    pub duration_frac: f64,
    pub amplitude_frac: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        JitterConfig {
            direction_deg: 10.0,
            duration_frac: 0.1,
            amplitude_frac: 0.1,
        }
    }
}

impl JitterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=90.0).contains(&self.direction_deg)
            || !(0.0..1.0).contains(&self.duration_frac)
            || !(0.0..1.0).contains(&self.amplitude_frac)
        {
            return Err(Error::InvalidConfig(format!(
                "jitter out of range: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Returns a jittered copy of `models`; zero jitter returns them unchanged.
pub fn jitter_models(
    models: &[MovementModel],
    jitter: &JitterConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<MovementModel>> {
    jitter.validate()?;
    models
        .iter()
        .map(|m| {
            let scale = |(lo, hi): (f64, f64), frac: f64, rng: &mut ChaCha8Rng| {
                let s = 1.0 + rng.random_range(-1.0..1.0) * frac;
                (lo * s, hi * s)
            };
            let duration_s = scale(m.duration_s, jitter.duration_frac, rng);
            let peak_accel = scale(m.peak_accel, jitter.amplitude_frac, rng);
            let direction = if jitter.direction_deg > 0.0 {
                let axis = Unit::new_normalize(Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ));
                let angle = rng.random_range(0.0..jitter.direction_deg).to_radians();
                UnitQuaternion::from_axis_angle(&axis, angle) * m.direction
            } else {
                m.direction
            };
            let out = MovementModel {
                class: m.class,
                duration_s,
                peak_accel,
                direction,
                lobes: m.lobes,
            };
            out.validate()?;
            Ok(out)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Protocol configuration
// ---------------------------------------------------------------------------

/// Which wrist(s) perform a planted movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Dominant,
    NonDominant,
    Both,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slot::Dominant => "dominant",
            Slot::NonDominant => "non-dominant",
            Slot::Both => "both",
        })
    }
}

/// Amplitude scaling of one wrist, the minimal hemiparesis stand-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hemiparesis {
    pub wrist: Wrist,
    /// Multiplies pulse amplitudes on the affected wrist; in (0, 1].
    pub amplitude_scale: f64,
}

/// Session-level generation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub scenario: Scenario,
    /// Rest between consecutive movements, seconds.
    pub rest_s: f64,
    /// Unconstrained scenario: number of target events.
    pub n_target: usize,
    /// Unconstrained scenario: number of non-target events.
    pub n_nontarget: usize,
    /// Gaussian noise on the acceleration channels, m/s².
    pub noise_std: f64,
    /// Linear drift rate on the acceleration channels, m/s³.
    pub drift_rate: f64,
    /// Drives the pulse sequence (classes, order, durations, amplitudes).
    pub seed: u64,
    /// Drives measurement noise only.
    pub noise_seed: u64,
    pub sample_rate_hz: f64,
    pub subject_id: String,
    pub session_id: String,
    pub population: Population,
    pub dominant: Wrist,
    pub hemiparesis: Option<Hemiparesis>,
}

impl ProtocolConfig {
    /// Defaults: 5 s rests, 4 target + 8 non-target events in the
    /// unconstrained scenario, 0.05 m/s² noise, 0.01 m/s³ drift, 100 Hz.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        ProtocolConfig {
            scenario,
            rest_s: 5.0,
            n_target: 4,
            n_nontarget: 8,
            noise_std: 0.05,
            drift_rate: 0.01,
            seed,
            noise_seed: seed,
            sample_rate_hz: 100.0,
            subject_id: "S01".into(),
            session_id: match scenario {
                Scenario::L1 => "L1-1".into(),
                Scenario::L2 => "L2-1".into(),
            },
            population: Population::Healthy,
            dominant: Wrist::Right,
            hemiparesis: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rest_s < 0.0 || !self.rest_s.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "rest_s must be non-negative, got {}",
                self.rest_s
            )));
        }
        if self.noise_std < 0.0 || self.drift_rate < 0.0 {
            return Err(Error::InvalidConfig(
                "noise_std and drift_rate must be non-negative".into(),
            ));
        }
        if self.sample_rate_hz <= 0.0 || !self.sample_rate_hz.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if let Some(h) = &self.hemiparesis {
            if !(h.amplitude_scale > 0.0 && h.amplitude_scale <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "hemiparesis amplitude_scale must lie in (0, 1], got {}",
                    h.amplitude_scale
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth for one planted movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedEvent {
    pub class: MovementClass,
    pub slot: Slot,
    /// Sample extent [start, end) shared by every wrist performing the event.
    pub start_index: usize,
    pub end_index: usize,
    /// Sample of maximum acceleration-norm within the extent (noise-free).
    pub peak_index: usize,
}

// ---------------------------------------------------------------------------
// Session synthesis
// ---------------------------------------------------------------------------

struct WristBuffer {
    samples: Vec<[f64; NUM_CHANNELS]>,
    labels: Vec<LabelInterval>,
}

impl WristBuffer {
    fn new() -> WristBuffer {
        WristBuffer {
            samples: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn extend_rest(&mut self, n: usize) {
        let mut frame = [0.0; NUM_CHANNELS];
        frame[ChannelId::MagX.index()] = MAG_FIELD[0];
        frame[ChannelId::MagY.index()] = MAG_FIELD[1];
        frame[ChannelId::MagZ.index()] = MAG_FIELD[2];
        self.samples.resize(self.samples.len() + n, frame);
    }

    /// Writes one pulse over `n` freshly appended samples and returns the
    /// in-pulse index of the acceleration-norm maximum.
    fn write_pulse(&mut self, model: &MovementModel, amplitude: f64, duration_s: f64, n: usize) {
        let start = self.samples.len();
        self.extend_rest(n);
        let d = model.direction;
        for i in 0..n {
            let tau = i as f64 / (n - 1) as f64;
            let (env, env_dot) = lobed_envelope(tau, model.lobes);
            let a = amplitude * env;
            let frame = &mut self.samples[start + i];
            frame[ChannelId::AccX.index()] += a * d.x;
            frame[ChannelId::AccY.index()] += a * d.y;
            frame[ChannelId::AccZ.index()] += a * d.z;
            // Small-angle attitude excursion follows the same bell; gyro is
            // its analytic time derivative.
            let att = ATT_AMPLITUDE * env;
            let rate = ATT_AMPLITUDE * env_dot / duration_s;
            frame[ChannelId::AttYaw.index()] += att * d.z;
            frame[ChannelId::AttPitch.index()] += att * d.x;
            frame[ChannelId::AttRoll.index()] += att * d.y;
            frame[ChannelId::GyrZ.index()] += rate * d.z;
            frame[ChannelId::GyrY.index()] += rate * d.x;
            frame[ChannelId::GyrX.index()] += rate * d.y;
        }
        self.labels.push(LabelInterval {
            start_index: start,
            end_index: start + n,
            class: model.class,
        });
    }

    fn finish(
        self,
        cfg: &ProtocolConfig,
        wrist: Wrist,
        noise_rng: &mut ChaCha8Rng,
    ) -> Result<(Recording, LabelTrack)> {
        let t = self.samples.len();
        let mut samples = Array2::zeros((t, NUM_CHANNELS));
        for (i, frame) in self.samples.iter().enumerate() {
            for (c, &v) in frame.iter().enumerate() {
                samples[[i, c]] = v;
            }
        }
        // Drift then noise on the acceleration channels only.
        let dt = 1.0 / cfg.sample_rate_hz;
        if cfg.drift_rate > 0.0 {
            for i in 0..t {
                let drift = cfg.drift_rate * (i as f64 * dt);
                for ch in ChannelId::ACCELERATION {
                    samples[[i, ch.index()]] += drift;
                }
            }
        }
        if cfg.noise_std > 0.0 {
            let normal = Normal::new(0.0, cfg.noise_std)
                .map_err(|e| Error::InvalidConfig(format!("noise_std: {e}")))?;
            for i in 0..t {
                for ch in ChannelId::ACCELERATION {
                    samples[[i, ch.index()]] += normal.sample(noise_rng);
                }
            }
        }
        let meta = RecordingMeta {
            subject_id: cfg.subject_id.clone(),
            wrist,
            scenario: cfg.scenario,
            population: cfg.population,
            sample_rate_hz: cfg.sample_rate_hz,
        };
        let recording = Recording::new(samples, &meta, 0.0)?;
        Ok((recording, LabelTrack::new(self.labels)?))
    }
}

/// Multi-lobe envelope value and τ-derivative: `lobes` bells in sequence
/// with alternating signs; a single lobe is the plain bell.
fn lobed_envelope(tau: f64, lobes: usize) -> (f64, f64) {
    if lobes <= 1 {
        return (bell(tau), bell_dot(tau));
    }
    let l = lobes as f64;
    let idx = ((tau * l) as usize).min(lobes - 1);
    let local = tau * l - idx as f64;
    let sign = if idx % 2 == 0 { 1.0 } else { -1.0 };
    (sign * bell(local), sign * bell_dot(local) * l)
}

/// Generates one dual-wrist session plus its planted ground truth.
///
/// The constrained scenario emits, for each target class in order, a
/// dominant-wrist pulse, a non-dominant pulse, and a simultaneous
/// both-wrists pulse, each preceded and followed by `rest_s` of rest — 12
/// planted target events with 4 target classes. The unconstrained scenario
/// shuffles `n_target` target pulses (classes cycling M1..M4) with
/// `n_nontarget` non-target movements, all on the dominant wrist.
pub fn synth_session(
    cfg: &ProtocolConfig,
    models: &[MovementModel],
) -> Result<(Session, Vec<PlantedEvent>)> {
    cfg.validate()?;
    for m in models {
        m.validate()?;
    }
    let model_of = |class: MovementClass| -> Result<&MovementModel> {
        models
            .iter()
            .find(|m| m.class == class)
            .ok_or_else(|| Error::InvalidConfig(format!("no movement model for class {class}")))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "protocol"));

    // Event plan: (class, slot) in session order.
    let plan: Vec<(MovementClass, Slot)> = match cfg.scenario {
        Scenario::L1 => MovementClass::TARGETS
            .iter()
            .flat_map(|&c| {
                [
                    (c, Slot::Dominant),
                    (c, Slot::NonDominant),
                    (c, Slot::Both),
                ]
            })
            .collect(),
        Scenario::L2 => {
            let non_targets: Vec<MovementClass> = MovementClass::ALL
                .iter()
                .copied()
                .filter(|c| c.kind() == crate::data_model::ClassKind::NonTarget)
                .collect();
            let mut plan: Vec<(MovementClass, Slot)> = (0..cfg.n_target)
                .map(|i| {
                    (
                        MovementClass::TARGETS[i % MovementClass::TARGETS.len()],
                        Slot::Dominant,
                    )
                })
                .collect();
            for _ in 0..cfg.n_nontarget {
                let class = non_targets[rng.random_range(0..non_targets.len())];
                plan.push((class, Slot::Dominant));
            }
            use rand::seq::SliceRandom;
            plan.shuffle(&mut rng);
            plan
        }
    };

    let rate = cfg.sample_rate_hz;
    let rest_n = (cfg.rest_s * rate).round() as usize;
    let mut left = WristBuffer::new();
    let mut right = WristBuffer::new();
    let mut events = Vec::with_capacity(plan.len());

    let scale_for = |wrist: Wrist| -> f64 {
        match &cfg.hemiparesis {
            Some(h) if h.wrist == wrist => h.amplitude_scale,
            _ => 1.0,
        }
    };

    for (class, slot) in plan {
        left.extend_rest(rest_n);
        right.extend_rest(rest_n);

        let model = model_of(class)?;
        let duration_s = rng.random_range(model.duration_s.0..=model.duration_s.1);
        let amplitude = rng.random_range(model.peak_accel.0..=model.peak_accel.1);
        // An odd sample count puts one sample exactly on the envelope peak,
        // so the planted maximum and its index are exact.
        let mut n = ((duration_s * rate).round() as usize).max(3);
        if n % 2 == 0 {
            n += 1;
        }

        let start = left.samples.len();
        let wrists: &[Wrist] = match (slot, cfg.dominant) {
            (Slot::Dominant, d) => match d {
                Wrist::Left => &[Wrist::Left],
                Wrist::Right => &[Wrist::Right],
            },
            (Slot::NonDominant, d) => match d {
                Wrist::Left => &[Wrist::Right],
                Wrist::Right => &[Wrist::Left],
            },
            (Slot::Both, _) => &[Wrist::Left, Wrist::Right],
        };
        for &w in wrists {
            let buf = if w == Wrist::Left { &mut left } else { &mut right };
            buf.write_pulse(model, amplitude * scale_for(w), duration_s, n);
        }
        // Keep the idle wrist in lockstep.
        if !wrists.contains(&Wrist::Left) {
            left.extend_rest(n);
        }
        if !wrists.contains(&Wrist::Right) {
            right.extend_rest(n);
        }

        // Acceleration-norm argmax over the pulse grid (earliest on ties).
        // For single-lobe targets this is exactly the center sample.
        let mut peak_in_pulse = 0;
        let mut peak_val = f64::NEG_INFINITY;
        for i in 0..n {
            let tau = i as f64 / (n - 1) as f64;
            let v = lobed_envelope(tau, model.lobes).0.abs();
            if v > peak_val {
                peak_val = v;
                peak_in_pulse = i;
            }
        }
        events.push(PlantedEvent {
            class,
            slot,
            start_index: start,
            end_index: start + n,
            peak_index: start + peak_in_pulse,
        });
    }
    left.extend_rest(rest_n);
    right.extend_rest(rest_n);

    let mut noise_left = ChaCha8Rng::seed_from_u64(derive_seed(cfg.noise_seed, "noise-left"));
    let mut noise_right = ChaCha8Rng::seed_from_u64(derive_seed(cfg.noise_seed, "noise-right"));
    let (left, labels_left) = left.finish(cfg, Wrist::Left, &mut noise_left)?;
    let (right, labels_right) = right.finish(cfg, Wrist::Right, &mut noise_right)?;

    Ok((
        Session {
            left,
            right,
            labels_left,
            labels_right,
            session_id: cfg.session_id.clone(),
        },
        events,
    ))
}

// ---------------------------------------------------------------------------
// Corpus synthesis
// ---------------------------------------------------------------------------

/// Template for a whole corpus: per-subject session counts, style jitter,
/// and the protocol settings shared by every session.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTemplate {
    pub protocol: ProtocolConfig,
    pub jitter: JitterConfig,
    /// Constrained sessions per subject.
    pub n_l1_sessions: usize,
    /// Unconstrained sessions per subject.
    pub n_l2_sessions: usize,
}

impl Default for CorpusTemplate {
    fn default() -> Self {
        CorpusTemplate {
            protocol: ProtocolConfig::new(Scenario::L1, 0),
            jitter: JitterConfig::default(),
            n_l1_sessions: 2,
            n_l2_sessions: 3,
        }
    }
}

/// One generated subject: their jittered style and all their sessions.
#[derive(Debug, Clone)]
pub struct SynthSubject {
    pub subject_id: String,
    pub models: Vec<MovementModel>,
    pub sessions: Vec<SynthSession>,
}

/// One generated session with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthSession {
    pub session: Session,
    pub events: Vec<PlantedEvent>,
    /// Protocol seed the session was generated from (manifest bookkeeping).
    pub seed: u64,
}

/// Generates `n_subjects` subjects, each with `n_l1_sessions` constrained
/// and `n_l2_sessions` unconstrained sessions.
///
/// Subject ids are `H01…` (healthy) or `P01…` (patients). The protocol
/// stream for a given session index is shared across subjects; each
/// subject's style jitter and noise streams derive from their own sub-seed.
pub fn synth_corpus(n_subjects: usize, template: &CorpusTemplate) -> Result<Vec<SynthSubject>> {
    if n_subjects == 0 {
        return Err(Error::InvalidConfig("n_subjects must be ≥ 1".into()));
    }
    template.protocol.validate()?;
    template.jitter.validate()?;
    let base = default_models();
    let prefix = match template.protocol.population {
        Population::Healthy => "H",
        Population::Patient => "P",
    };

    let mut subjects = Vec::with_capacity(n_subjects);
    for s in 0..n_subjects {
        let subject_id = format!("{prefix}{:02}", s + 1);
        let subject_seed = derive_seed(template.protocol.seed, &format!("subject-{subject_id}"));
        let mut style_rng = ChaCha8Rng::seed_from_u64(derive_seed(subject_seed, "style"));
        let models = jitter_models(&base, &template.jitter, &mut style_rng)?;

        let mut sessions = Vec::new();
        let mut session_specs = Vec::new();
        for i in 0..template.n_l1_sessions {
            session_specs.push((Scenario::L1, format!("L1-{}", i + 1)));
        }
        for i in 0..template.n_l2_sessions {
            session_specs.push((Scenario::L2, format!("L2-{}", i + 1)));
        }
        for (scenario, session_id) in session_specs {
            let mut cfg = template.protocol.clone();
            cfg.scenario = scenario;
            cfg.session_id = session_id.clone();
            cfg.subject_id = subject_id.clone();
            // Shared across subjects: the protocol (what is performed when).
            cfg.seed = derive_seed(template.protocol.seed, &format!("session-{session_id}"));
            // Subject-specific: the measurement noise.
            cfg.noise_seed = derive_seed(subject_seed, &session_id);
            let (session, events) = synth_session(&cfg, &models)?;
            sessions.push(SynthSession {
                session,
                events,
                seed: cfg.seed,
            });
        }
        subjects.push(SynthSubject {
            subject_id,
            models,
            sessions,
        });
    }
    Ok(subjects)
}

/// Header of the corpus manifest CSV.
pub const MANIFEST_HEADER: &str =
    "subject_id,session_id,scenario,population,wrist,seed,data,meta,labels";

/// Writes every recording, metadata, and label file of a corpus into `dir`
/// plus a `manifest.csv` listing them; returns the manifest rows.
pub fn write_corpus(subjects: &[SynthSubject], dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    for subject in subjects {
        for s in &subject.sessions {
            let session = &s.session;
            for (rec, track, wrist) in [
                (&session.left, &session.labels_left, Wrist::Left),
                (&session.right, &session.labels_right, Wrist::Right),
            ] {
                let stem = format!("{}_{}_{wrist}", subject.subject_id, session.session_id);
                let data = format!("{stem}.csv");
                let meta = format!("{stem}.meta");
                let labels = format!("{stem}.labels.csv");

                let mut f = BufWriter::new(fs::File::create(dir.join(&data))?);
                serialize_recording(rec, &mut f)?;
                let mut f = BufWriter::new(fs::File::create(dir.join(&meta))?);
                serialize_meta(&rec.meta(), &mut f)?;
                let mut f = BufWriter::new(fs::File::create(dir.join(&labels))?);
                serialize_labels(track, rec.sample_rate_hz, &mut f)?;

                rows.push(format!(
                    "{},{},{},{},{wrist},{},{data},{meta},{labels}",
                    subject.subject_id,
                    session.session_id,
                    session.scenario(),
                    rec.population,
                    s.seed,
                ));
            }
        }
    }
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for row in &rows {
        manifest.push_str(row);
        manifest.push('\n');
    }
    fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
