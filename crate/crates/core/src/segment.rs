//! Candidate segment production: rest-based action segmentation for the
//! constrained scenario, non-overlapping sliding windows for the
//! unconstrained one, and peak-anchored gesture spotting.
//!
//! All three strategies return [`Segment`]s into the recording they were
//! given; none of them label segments (labeling against ground truth is the
//! evaluation harness's job).

use crate::data_model::{ChannelId, Recording, Segment};
use crate::error::{Error, Result};
use crate::util::{argmax_earliest, moving_mean};

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

/// Configuration for rest detection / action segmentation.
#[derive(Debug, Clone)]
pub struct RestConfig {
    /// Width of the short-time-energy window, seconds.
    pub energy_window_s: f64,
    /// Energy below this is a rest candidate, (m/s²)².
    pub energy_threshold: f64,
    /// Minimum sustained sub-threshold run to count as rest, seconds.
    pub min_rest_s: f64,
    /// Minimum action run worth keeping, seconds.
    pub min_action_s: f64,
}

impl Default for RestConfig {
    fn default() -> Self {
        RestConfig {
            energy_window_s: 0.5,
            energy_threshold: 0.05,
            min_rest_s: 2.0,
            min_action_s: 0.5,
        }
    }
}

impl RestConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("energy_window_s", self.energy_window_s),
            ("energy_threshold", self.energy_threshold),
            ("min_rest_s", self.min_rest_s),
            ("min_action_s", self.min_action_s),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        // The protocol rests are 5 s; demanding more than that would erase
        // every legitimate rest gap.
        if self.min_rest_s > 5.0 {
            return Err(Error::InvalidConfig(format!(
                "min_rest_s must be ≤ 5.0 (protocol rest duration), got {}",
                self.min_rest_s
            )));
        }
        Ok(())
    }
}

/// Configuration for non-overlapping sliding windows.
#[derive(Debug, Clone)]
pub struct WindowConfig {
    /// Window length, seconds.
    pub window_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { window_s: 3.0 }
    }
}

/// Scalar series a gesture peak is searched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakChannel {
    /// Euclidean norm of the three acceleration channels (orientation-free).
    AccelNorm,
    /// One raw channel.
    Single(ChannelId),
}

/// Configuration for peak-anchored gesture spotting.
#[derive(Debug, Clone)]
pub struct SpotConfig {
    /// Kept signal before the peak, seconds.
    pub margin_before_s: f64,
    /// Kept signal after the peak, seconds.
    pub margin_after_s: f64,
    /// Series whose maximum anchors the spot.
    pub peak_channel: PeakChannel,
}

impl Default for SpotConfig {
    fn default() -> Self {
        SpotConfig {
            margin_before_s: 0.25,
            margin_after_s: 0.25,
            peak_channel: PeakChannel::AccelNorm,
        }
    }
}

impl SpotConfig {
    fn validate(&self) -> Result<()> {
        if self.margin_before_s < 0.0 || self.margin_after_s < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "spot margins must be ≥ 0, got {} / {}",
                self.margin_before_s, self.margin_after_s
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Squared acceleration norm per sample.
fn squared_accel_norm(rec: &Recording) -> Vec<f64> {
    let ax = rec.channel(ChannelId::AccX);
    let ay = rec.channel(ChannelId::AccY);
    let az = rec.channel(ChannelId::AccZ);
    (0..rec.len())
        .map(|i| ax[i] * ax[i] + ay[i] * ay[i] + az[i] * az[i])
        .collect()
}

/// Per-sample peak series for spotting.
fn peak_series(rec: &Recording, cfg: &SpotConfig) -> Vec<f64> {
    match cfg.peak_channel {
        PeakChannel::AccelNorm => squared_accel_norm(rec)
            .into_iter()
            .map(f64::sqrt)
            .collect(),
        PeakChannel::Single(ch) => rec.channel(ch).to_vec(),
    }
}

/// Short-time energy: mean of the squared acceleration norm over a centered
/// window of `round(energy_window_s × sample_rate)` samples.
///
/// Expects a drift-removed recording (otherwise a constant bias would read as
/// permanent motion). Edge windows are truncated. A window of `w` samples
/// turns a unit impulse into a plateau of height `1/w` spanning `w` samples.
pub fn short_time_energy(rec: &Recording, cfg: &RestConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let w = ((cfg.energy_window_s * rec.sample_rate_hz).round() as usize).max(1);
    let left = (w - 1) / 2;
    let right = w - 1 - left;
    Ok(moving_mean(&squared_accel_norm(rec), left, right))
}

/// Split a recording into action segments separated by sustained rest.
///
/// Samples whose short-time energy stays below `energy_threshold` for at
/// least `min_rest_s` contiguous seconds are rest; maximal non-rest runs of
/// at least `min_action_s` become segments, in temporal order.
pub fn segment_by_rest(rec: &Recording, cfg: &RestConfig) -> Result<Vec<Segment>> {
    let energy = short_time_energy(rec, cfg)?;
    let min_rest = ((cfg.min_rest_s * rec.sample_rate_hz).round() as usize).max(1);
    let min_action = ((cfg.min_action_s * rec.sample_rate_hz).round() as usize).max(1);

    // Confirmed rest = sub-threshold runs long enough to be deliberate.
    let mut is_rest = vec![false; rec.len()];
    let mut run_start = None;
    for i in 0..=rec.len() {
        let below = i < rec.len() && energy[i] < cfg.energy_threshold;
        match (run_start, below) {
            (None, true) => run_start = Some(i),
            (Some(s), false) => {
                if i - s >= min_rest {
                    is_rest[s..i].iter_mut().for_each(|r| *r = true);
                }
                run_start = None;
            }
            _ => {}
        }
    }

    // Complement runs of sufficient duration become segments.
    let mut segments = Vec::new();
    let mut action_start = None;
    for i in 0..=rec.len() {
        let active = i < rec.len() && !is_rest[i];
        match (action_start, active) {
            (None, true) => action_start = Some(i),
            (Some(s), false) => {
                if i - s >= min_action {
                    segments.push(Segment::new(s, i, None)?);
                }
                action_start = None;
            }
            _ => {}
        }
    }
    Ok(segments)
}

/// Tile a recording with consecutive non-overlapping windows of exactly
/// `round(window_s × sample_rate)` samples, dropping the trailing remainder.
pub fn sliding_windows(rec: &Recording, cfg: &WindowConfig) -> Result<Vec<Segment>> {
    if !(cfg.window_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "window_s must be positive, got {}",
            cfg.window_s
        )));
    }
    let w = (cfg.window_s * rec.sample_rate_hz).round() as usize;
    if w < 1 {
        return Err(Error::InvalidConfig(format!(
            "window of {} s is shorter than one sample at {} Hz",
            cfg.window_s, rec.sample_rate_hz
        )));
    }
    (0..rec.len() / w)
        .map(|k| Segment::new(k * w, (k + 1) * w, None))
        .collect()
}

/// Narrow a segment to the region around its acceleration peak.
///
/// The anchor is the earliest global maximum of the peak series within the
/// segment; the result is `[max(start, p − before), min(end, p + after + 1))`
/// with the margins converted to samples, so it always contains the peak and
/// never leaves the input segment. The input's label is carried over.
pub fn spot_gesture(rec: &Recording, seg: &Segment, cfg: &SpotConfig) -> Result<Segment> {
    cfg.validate()?;
    if seg.end() > rec.len() {
        return Err(Error::SegmentOutOfRange {
            start: seg.start(),
            end: seg.end(),
            len: rec.len(),
        });
    }
    let series = peak_series(rec, cfg);
    let window = &series[seg.start()..seg.end()];
    let p = seg.start()
        + argmax_earliest(window).expect("segments are non-empty by construction");
    let before = (cfg.margin_before_s * rec.sample_rate_hz).round() as usize;
    let after = (cfg.margin_after_s * rec.sample_rate_hz).round() as usize;
    let start = seg.start().max(p.saturating_sub(before));
    let end = seg.end().min(p + after + 1);
    Segment::new(start, end, seg.label)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
