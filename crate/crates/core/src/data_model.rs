//! Core domain types, the on-disk recording/label formats, and
//! ingestion/alignment of dual-wrist sessions.
//!
//! A [`Recording`] is a uniform-rate multichannel time series (12 channels,
//! nominally 100 Hz) from one wrist. A [`LabelTrack`] is an ordered list of
//! non-overlapping labeled sample-index intervals. A [`Session`] pairs the
//! left- and right-wrist recordings of one sitting after start-time
//! alignment. [`Segment`] is the half-open index interval handed to the
//! classifiers.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, s};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Movement classes
// ---------------------------------------------------------------------------

/// One of the four target movements, the 19 non-target daily-life movements,
/// explicit rest, or the catch-all null class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[rustfmt::skip]
pub enum MovementClass {
    M1, M2, M3, M4,
    R1, R2, R3, R4, R5, R6, R7, R8, R9, R10,
    R11, R12, R13, R14, R15, R16, R17, R18, R19,
    Rest,
    Null,
}

/// Coarse category of a movement class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassKind {
    /// One of the four key movements M1–M4.
    Target,
    /// One of the 19 daily-life movements R1–R19.
    NonTarget,
    /// Explicit rest.
    Rest,
    /// Anything that is none of the above.
    Null,
}

impl MovementClass {
    /// Every class in canonical order: M1–M4, R1–R19, Rest, Null.
    #[rustfmt::skip]
    pub const ALL: [MovementClass; 25] = [
        MovementClass::M1, MovementClass::M2, MovementClass::M3, MovementClass::M4,
        MovementClass::R1, MovementClass::R2, MovementClass::R3, MovementClass::R4,
        MovementClass::R5, MovementClass::R6, MovementClass::R7, MovementClass::R8,
        MovementClass::R9, MovementClass::R10, MovementClass::R11, MovementClass::R12,
        MovementClass::R13, MovementClass::R14, MovementClass::R15, MovementClass::R16,
        MovementClass::R17, MovementClass::R18, MovementClass::R19,
        MovementClass::Rest, MovementClass::Null,
    ];

    /// The four target movements.
    pub const TARGETS: [MovementClass; 4] = [
        MovementClass::M1,
        MovementClass::M2,
        MovementClass::M3,
        MovementClass::M4,
    ];

    /// Total category of this class; every tag is exactly one kind.
    pub fn kind(self) -> ClassKind {
        use MovementClass::*;
        match self {
            M1 | M2 | M3 | M4 => ClassKind::Target,
            Rest => ClassKind::Rest,
            Null => ClassKind::Null,
            _ => ClassKind::NonTarget,
        }
    }

    /// True for M1–M4.
    pub fn is_target(self) -> bool {
        self.kind() == ClassKind::Target
    }

    /// Stable ordinal in [`MovementClass::ALL`] order (used for argmax ties).
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }
}

impl fmt::Display for MovementClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use MovementClass::*;
        let tag = match self {
            M1 => "M1",
            M2 => "M2",
            M3 => "M3",
            M4 => "M4",
            R1 => "R1",
            R2 => "R2",
            R3 => "R3",
            R4 => "R4",
            R5 => "R5",
            R6 => "R6",
            R7 => "R7",
            R8 => "R8",
            R9 => "R9",
            R10 => "R10",
            R11 => "R11",
            R12 => "R12",
            R13 => "R13",
            R14 => "R14",
            R15 => "R15",
            R16 => "R16",
            R17 => "R17",
            R18 => "R18",
            R19 => "R19",
            Rest => "Rest",
            Null => "Null",
        };
        f.write_str(tag)
    }
}

impl FromStr for MovementClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MovementClass::ALL
            .iter()
            .copied()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| Error::UnknownClass {
                tag: s.to_string(),
                line: 0,
            })
    }
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

/// Sensor family of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sensor {
    /// User + gravity (or linear, after fusion) acceleration, m/s².
    Acceleration,
    /// Unbiased gyroscope rotation rate, rad/s.
    RotationRate,
    /// Calibrated magnetic field, µT.
    Magnetometer,
    /// Orientation as intrinsic Z-Y-X Euler angles, rad.
    Attitude,
}

/// One of the 12 recorded channels, in the fixed canonical order:
/// acceleration x/y/z, rotation rate x/y/z, magnetometer x/y/z,
/// attitude yaw/pitch/roll.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[rustfmt::skip]
pub enum ChannelId {
    AccX, AccY, AccZ,
    GyrX, GyrY, GyrZ,
    MagX, MagY, MagZ,
    AttYaw, AttPitch, AttRoll,
}

/// Number of channels in a recording.
pub const NUM_CHANNELS: usize = 12;

impl ChannelId {
    /// Every channel in canonical column order.
    #[rustfmt::skip]
    pub const ALL: [ChannelId; NUM_CHANNELS] = [
        ChannelId::AccX, ChannelId::AccY, ChannelId::AccZ,
        ChannelId::GyrX, ChannelId::GyrY, ChannelId::GyrZ,
        ChannelId::MagX, ChannelId::MagY, ChannelId::MagZ,
        ChannelId::AttYaw, ChannelId::AttPitch, ChannelId::AttRoll,
    ];

    /// The three acceleration channels.
    pub const ACCELERATION: [ChannelId; 3] =
        [ChannelId::AccX, ChannelId::AccY, ChannelId::AccZ];

    /// Column index in the sample matrix.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Sensor family.
    pub fn sensor(self) -> Sensor {
        match self.index() / 3 {
            0 => Sensor::Acceleration,
            1 => Sensor::RotationRate,
            2 => Sensor::Magnetometer,
            _ => Sensor::Attitude,
        }
    }

    /// CSV column label, e.g. `acc_x` or `att_yaw`.
    pub fn label(self) -> &'static str {
        use ChannelId::*;
        match self {
            AccX => "acc_x",
            AccY => "acc_y",
            AccZ => "acc_z",
            GyrX => "gyr_x",
            GyrY => "gyr_y",
            GyrZ => "gyr_z",
            MagX => "mag_x",
            MagY => "mag_y",
            MagZ => "mag_z",
            AttYaw => "att_yaw",
            AttPitch => "att_pitch",
            AttRoll => "att_roll",
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ChannelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelId::ALL
            .iter()
            .copied()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown channel {s:?}")))
    }
}

// ---------------------------------------------------------------------------
// Metadata enums
// ---------------------------------------------------------------------------

/// Which wrist a recording came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wrist {
    Left,
    Right,
}

impl fmt::Display for Wrist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Wrist::Left => "left",
            Wrist::Right => "right",
        })
    }
}

impl FromStr for Wrist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Wrist::Left),
            "right" => Ok(Wrist::Right),
            _ => Err(Error::InvalidConfig(format!("unknown wrist {s:?}"))),
        }
    }
}

/// Recording scenario: constrained (L1) or unconstrained (L2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    L1,
    L2,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::L1 => "L1",
            Scenario::L2 => "L2",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L1" => Ok(Scenario::L1),
            "L2" => Ok(Scenario::L2),
            _ => Err(Error::InvalidConfig(format!("unknown scenario {s:?}"))),
        }
    }
}

/// Subject population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Population {
    Healthy,
    Patient,
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Population::Healthy => "healthy",
            Population::Patient => "patient",
        })
    }
}

impl FromStr for Population {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "healthy" => Ok(Population::Healthy),
            "patient" => Ok(Population::Patient),
            _ => Err(Error::InvalidConfig(format!("unknown population {s:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Recording
// ---------------------------------------------------------------------------

/// Sidecar metadata accompanying a recording CSV (`key=value` file).
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub subject_id: String,
    pub wrist: Wrist,
    pub scenario: Scenario,
    pub population: Population,
    pub sample_rate_hz: f64,
}

/// A uniform-rate 12-channel time series from one wrist.
///
/// Sample timestamps are implicit: `t_i = start_time_ms + i * 1000 / sample_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    /// Sample matrix, shape (T_samples × 12), canonical channel order.
    pub samples: Array2<f64>,
    /// Sampling rate in Hz; strictly positive.
    pub sample_rate_hz: f64,
    /// Timestamp of the first sample, epoch milliseconds.
    pub start_time_ms: f64,
    pub wrist: Wrist,
    pub subject_id: String,
    pub scenario: Scenario,
    pub population: Population,
}

impl Recording {
    /// Build a recording, validating the basic invariants.
    pub fn new(
        samples: Array2<f64>,
        meta: &RecordingMeta,
        start_time_ms: f64,
    ) -> Result<Recording> {
        if meta.sample_rate_hz <= 0.0 || !meta.sample_rate_hz.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {}",
                meta.sample_rate_hz
            )));
        }
        if samples.nrows() == 0 {
            return Err(Error::EmptyStream);
        }
        if samples.ncols() != NUM_CHANNELS {
            return Err(Error::DimensionMismatch {
                expected: NUM_CHANNELS,
                got: samples.ncols(),
            });
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                line: 0,
                value: bad.to_string(),
            });
        }
        Ok(Recording {
            samples,
            sample_rate_hz: meta.sample_rate_hz,
            start_time_ms,
            wrist: meta.wrist,
            subject_id: meta.subject_id.clone(),
            scenario: meta.scenario,
            population: meta.population,
        })
    }

    /// Number of samples (rows).
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    /// True when the recording holds no samples (never, for a valid one).
    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    /// Sample period in milliseconds.
    pub fn period_ms(&self) -> f64 {
        1000.0 / self.sample_rate_hz
    }

    /// One channel as a column view.
    pub fn channel(&self, id: ChannelId) -> ArrayView1<'_, f64> {
        self.samples.column(id.index())
    }

    /// Sidecar metadata for this recording.
    pub fn meta(&self) -> RecordingMeta {
        RecordingMeta {
            subject_id: self.subject_id.clone(),
            wrist: self.wrist,
            scenario: self.scenario,
            population: self.population,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

// ---------------------------------------------------------------------------
// Labels and segments
// ---------------------------------------------------------------------------

/// One labeled half-open interval of sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelInterval {
    pub start_index: usize,
    /// Exclusive.
    pub end_index: usize,
    pub class: MovementClass,
}

/// Ordered, non-overlapping labeled intervals over one recording.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelTrack {
    intervals: Vec<LabelInterval>,
}

impl LabelTrack {
    /// Build from intervals, sorting, validating non-overlap, and merging
    /// touching intervals of the same class.
    pub fn new(mut intervals: Vec<LabelInterval>) -> Result<LabelTrack> {
        for iv in &intervals {
            if iv.start_index >= iv.end_index {
                return Err(Error::EmptyInterval {
                    start: iv.start_index,
                    end: iv.end_index,
                });
            }
        }
        intervals.sort_by_key(|iv| (iv.start_index, iv.end_index));
        let mut merged: Vec<LabelInterval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(prev) if iv.start_index < prev.end_index => {
                    return Err(Error::OverlappingIntervals {
                        a_start: prev.start_index,
                        a_end: prev.end_index,
                        b_start: iv.start_index,
                        b_end: iv.end_index,
                    });
                }
                Some(prev)
                    if iv.start_index == prev.end_index && iv.class == prev.class =>
                {
                    prev.end_index = iv.end_index;
                }
                _ => merged.push(iv),
            }
        }
        Ok(LabelTrack { intervals: merged })
    }

    /// The intervals in temporal order.
    pub fn intervals(&self) -> &[LabelInterval] {
        &self.intervals
    }

    /// Shift every interval left by `shift` samples and clip to `[0, len)`,
    /// dropping intervals that become empty. Used by session alignment.
    pub fn shift_and_clip(&self, shift: usize, len: usize) -> LabelTrack {
        let intervals = self
            .intervals
            .iter()
            .filter_map(|iv| {
                let start = iv.start_index.saturating_sub(shift);
                let end = iv.end_index.saturating_sub(shift).min(len);
                (start < end).then_some(LabelInterval {
                    start_index: start,
                    end_index: end,
                    class: iv.class,
                })
            })
            .collect();
        // Shifting preserves order and non-overlap, so this cannot fail.
        LabelTrack { intervals }
    }

    /// Overlap in samples between `[start, end)` and each class present,
    /// returned as (class, overlap) with the largest overlap first; ties
    /// break toward the lower class index.
    pub fn overlaps(&self, start: usize, end: usize) -> Vec<(MovementClass, usize)> {
        let mut per_class: Vec<(MovementClass, usize)> = Vec::new();
        for iv in &self.intervals {
            let lo = iv.start_index.max(start);
            let hi = iv.end_index.min(end);
            if lo >= hi {
                continue;
            }
            let n = hi - lo;
            match per_class.iter_mut().find(|(c, _)| *c == iv.class) {
                Some((_, acc)) => *acc += n,
                None => per_class.push((iv.class, n)),
            }
        }
        per_class.sort_by_key(|&(c, n)| (std::cmp::Reverse(n), c.index()));
        per_class
    }
}

/// Half-open sample-index interval into a recording, optionally labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    start_index: usize,
    end_index: usize,
    pub label: Option<MovementClass>,
}

impl Segment {
    /// Build a segment; rejects empty intervals (`start >= end`).
    pub fn new(start_index: usize, end_index: usize, label: Option<MovementClass>) -> Result<Segment> {
        if start_index >= end_index {
            return Err(Error::EmptyInterval {
                start: start_index,
                end: end_index,
            });
        }
        Ok(Segment {
            start_index,
            end_index,
            label,
        })
    }

    pub fn start(&self) -> usize {
        self.start_index
    }

    /// Exclusive end index.
    pub fn end(&self) -> usize {
        self.end_index
    }

    /// Number of samples covered.
    pub fn len(&self) -> usize {
        self.end_index - self.start_index
    }

    /// Always false: construction rejects empty intervals.
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A dual-wrist sitting: both recordings aligned to a common start.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub left: Recording,
    pub right: Recording,
    pub labels_left: LabelTrack,
    pub labels_right: LabelTrack,
    pub session_id: String,
}

impl Session {
    /// Scenario shared by both recordings.
    pub fn scenario(&self) -> Scenario {
        self.left.scenario
    }
}

// ---------------------------------------------------------------------------
// Recording CSV format
// ---------------------------------------------------------------------------

/// Expected recording CSV header.
pub const RECORDING_HEADER: &str =
    "t_ms,acc_x,acc_y,acc_z,gyr_x,gyr_y,gyr_z,mag_x,mag_y,mag_z,att_yaw,att_pitch,att_roll";

/// Largest tolerated timestamp gap, as a multiple of the sample period.
const MAX_GAP_PERIODS: f64 = 1.5;

fn parse_float(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.trim().parse().map_err(|_| Error::NonFiniteValue {
        line,
        value: token.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFiniteValue {
            line,
            value: token.to_string(),
        });
    }
    Ok(v)
}

/// Parse a recording CSV stream (header + one row per sample).
///
/// Rejects malformed rows, non-finite values, non-monotone timestamps, and
/// gaps larger than 1.5 sample periods. The first row's `t_ms` becomes the
/// recording's start time.
pub fn parse_recording(reader: impl io::Read, meta: &RecordingMeta) -> Result<Recording> {
    if meta.sample_rate_hz <= 0.0 || !meta.sample_rate_hz.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "sample rate must be positive, got {}",
            meta.sample_rate_hz
        )));
    }
    let period_ms = 1000.0 / meta.sample_rate_hz;
    let max_gap_ms = MAX_GAP_PERIODS * period_ms;

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    {
        let headers = csv.headers().map_err(csv_io_error)?;
        if headers.len() == 0 || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(Error::EmptyStream);
        }
        let expected: Vec<&str> = RECORDING_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::InvalidInput(format!(
                "recording header mismatch: expected {RECORDING_HEADER:?}"
            )));
        }
    }

    let mut rows: Vec<f64> = Vec::new();
    let mut start_time_ms = 0.0;
    let mut prev_t = f64::NEG_INFINITY;
    let mut n_rows = 0usize;
    for record in csv.records() {
        let record = record.map_err(csv_io_error)?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(n_rows + 2);
        if record.len() != 1 + NUM_CHANNELS {
            return Err(Error::MalformedRow {
                line,
                expected: 1 + NUM_CHANNELS,
                got: record.len(),
            });
        }
        let t = parse_float(&record[0], line)?;
        if n_rows == 0 {
            start_time_ms = t;
        } else {
            let gap = t - prev_t;
            if gap <= 0.0 {
                return Err(Error::NonMonotoneTimestamp { line });
            }
            if gap > max_gap_ms {
                return Err(Error::TimestampGap {
                    line,
                    gap_ms: gap,
                    max_ms: max_gap_ms,
                });
            }
        }
        prev_t = t;
        for i in 0..NUM_CHANNELS {
            rows.push(parse_float(&record[i + 1], line)?);
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::EmptyStream);
    }
    let samples = Array2::from_shape_vec((n_rows, NUM_CHANNELS), rows)
        .expect("row-major sample buffer matches its own counts");
    Recording::new(samples, meta, start_time_ms)
}

fn csv_io_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv error: {other:?}")),
    }
}

/// Write a recording in the canonical CSV format (6 decimal places, LF).
pub fn serialize_recording(rec: &Recording, mut w: impl Write) -> Result<()> {
    writeln!(w, "{RECORDING_HEADER}")?;
    let period = rec.period_ms();
    for (i, row) in rec.samples.rows().into_iter().enumerate() {
        let t = rec.start_time_ms + i as f64 * period;
        write!(w, "{t:.6}")?;
        for v in row {
            write!(w, ",{v:.6}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parse a `key=value` metadata sidecar.
///
/// Requires exactly the keys `subject_id`, `wrist`, `scenario`, `population`,
/// `sample_rate_hz`; blank lines and `#` comments are ignored; unknown keys
/// are rejected.
pub fn parse_meta(reader: impl io::Read) -> Result<RecordingMeta> {
    let mut subject_id = None;
    let mut wrist = None;
    let mut scenario = None;
    let mut population = None;
    let mut sample_rate_hz = None;
    for (idx, line) in io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("metadata line {line_no}: expected key=value"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "subject_id" => subject_id = Some(value.to_string()),
            "wrist" => wrist = Some(value.parse()?),
            "scenario" => scenario = Some(value.parse()?),
            "population" => population = Some(value.parse()?),
            "sample_rate_hz" => {
                let v = parse_float(value, line_no)?;
                sample_rate_hz = Some(v);
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "metadata line {line_no}: unknown key {other:?}"
                )));
            }
        }
    }
    let missing = |k: &str| Error::InvalidInput(format!("metadata missing key {k:?}"));
    Ok(RecordingMeta {
        subject_id: subject_id.ok_or_else(|| missing("subject_id"))?,
        wrist: wrist.ok_or_else(|| missing("wrist"))?,
        scenario: scenario.ok_or_else(|| missing("scenario"))?,
        population: population.ok_or_else(|| missing("population"))?,
        sample_rate_hz: sample_rate_hz.ok_or_else(|| missing("sample_rate_hz"))?,
    })
}

/// Write a metadata sidecar in canonical key order.
pub fn serialize_meta(meta: &RecordingMeta, mut w: impl Write) -> Result<()> {
    writeln!(w, "subject_id={}", meta.subject_id)?;
    writeln!(w, "wrist={}", meta.wrist)?;
    writeln!(w, "scenario={}", meta.scenario)?;
    writeln!(w, "population={}", meta.population)?;
    writeln!(w, "sample_rate_hz={}", meta.sample_rate_hz)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Label CSV format
// ---------------------------------------------------------------------------

/// Label CSV header (`start_ms,end_ms,class`).
pub const LABEL_HEADER: &str = "start_ms,end_ms,class";

/// Convert a millisecond timestamp to a sample index, rounding to the nearest
/// sample with ties toward the earlier one.
pub fn ms_to_index(t_ms: f64, sample_rate_hz: f64) -> usize {
    let x = t_ms * sample_rate_hz / 1000.0;
    let idx = (x - 0.5).ceil();
    idx.max(0.0) as usize
}

/// Parse a label CSV stream into a sorted, merged [`LabelTrack`].
///
/// Timestamps are milliseconds relative to the recording start; the header
/// line is optional. Adjacent same-class intervals that touch are merged.
pub fn parse_labels(reader: impl io::Read, sample_rate_hz: f64) -> Result<LabelTrack> {
    if sample_rate_hz <= 0.0 || !sample_rate_hz.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let mut intervals = Vec::new();
    for (idx, line) in io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || (line_no == 1 && trimmed == LABEL_HEADER) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::MalformedRow {
                line: line_no,
                expected: 3,
                got: fields.len(),
            });
        }
        let start_ms = parse_float(fields[0], line_no)?;
        let end_ms = parse_float(fields[1], line_no)?;
        if end_ms <= start_ms {
            return Err(Error::EmptyInterval {
                start: start_ms as usize,
                end: end_ms as usize,
            });
        }
        let class: MovementClass = fields[2].trim().parse().map_err(|e| match e {
            Error::UnknownClass { tag, .. } => Error::UnknownClass { tag, line: line_no },
            other => other,
        })?;
        let start_index = ms_to_index(start_ms, sample_rate_hz);
        let end_index = ms_to_index(end_ms, sample_rate_hz);
        if end_index <= start_index {
            return Err(Error::EmptyInterval {
                start: start_index,
                end: end_index,
            });
        }
        intervals.push(LabelInterval {
            start_index,
            end_index,
            class,
        });
    }
    LabelTrack::new(intervals)
}

/// Write a label track as CSV (millisecond timestamps, with header).
pub fn serialize_labels(
    track: &LabelTrack,
    sample_rate_hz: f64,
    mut w: impl Write,
) -> Result<()> {
    writeln!(w, "{LABEL_HEADER}")?;
    let period = 1000.0 / sample_rate_hz;
    for iv in track.intervals() {
        writeln!(
            w,
            "{:.3},{:.3},{}",
            iv.start_index as f64 * period,
            iv.end_index as f64 * period,
            iv.class
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Session alignment and slicing
// ---------------------------------------------------------------------------

/// Largest tolerated start-time skew between the two wrists, milliseconds.
const MAX_SKEW_MS: f64 = 1000.0;

/// Align a dual-wrist pair to a common start and duration.
///
/// The earlier-starting recording loses `floor(skew / period)` leading
/// samples so both starts agree within one sample period; that side's labels
/// shift left by the same count. Both recordings (and labels) are then
/// trimmed to the shorter common length.
pub fn align_session(
    left: Recording,
    right: Recording,
    labels_left: LabelTrack,
    labels_right: LabelTrack,
    session_id: impl Into<String>,
) -> Result<Session> {
    if left.wrist != Wrist::Left || right.wrist != Wrist::Right {
        return Err(Error::MetadataMismatch(format!(
            "expected left+right wrists, got {} and {}",
            left.wrist, right.wrist
        )));
    }
    if left.subject_id != right.subject_id {
        return Err(Error::MetadataMismatch(format!(
            "subject mismatch: {:?} vs {:?}",
            left.subject_id, right.subject_id
        )));
    }
    if left.scenario != right.scenario {
        return Err(Error::MetadataMismatch(format!(
            "scenario mismatch: {} vs {}",
            left.scenario, right.scenario
        )));
    }
    if left.sample_rate_hz != right.sample_rate_hz {
        return Err(Error::MetadataMismatch(format!(
            "sample rate mismatch: {} vs {}",
            left.sample_rate_hz, right.sample_rate_hz
        )));
    }
    let skew_ms = (left.start_time_ms - right.start_time_ms).abs();
    if skew_ms >= MAX_SKEW_MS {
        return Err(Error::UnsynchronizedPair { skew_ms });
    }
    let period = left.period_ms();
    let trim = (skew_ms / period).floor() as usize;

    let (mut left, mut right) = (left, right);
    let (mut labels_left, mut labels_right) = (labels_left, labels_right);
    if trim > 0 {
        if left.start_time_ms < right.start_time_ms {
            trim_front(&mut left, trim)?;
            labels_left = labels_left.shift_and_clip(trim, left.len());
        } else {
            trim_front(&mut right, trim)?;
            labels_right = labels_right.shift_and_clip(trim, right.len());
        }
    }
    let common = left.len().min(right.len());
    if common == 0 {
        return Err(Error::EmptyStream);
    }
    trim_back(&mut left, common);
    trim_back(&mut right, common);
    labels_left = labels_left.shift_and_clip(0, common);
    labels_right = labels_right.shift_and_clip(0, common);

    Ok(Session {
        left,
        right,
        labels_left,
        labels_right,
        session_id: session_id.into(),
    })
}

fn trim_front(rec: &mut Recording, n: usize) -> Result<()> {
    if n >= rec.len() {
        return Err(Error::EmptyStream);
    }
    rec.samples = rec.samples.slice(s![n.., ..]).to_owned();
    rec.start_time_ms += n as f64 * rec.period_ms();
    Ok(())
}

fn trim_back(rec: &mut Recording, keep: usize) {
    if keep < rec.len() {
        rec.samples = rec.samples.slice(s![..keep, ..]).to_owned();
    }
}

/// View the rows of a recording covered by a segment.
pub fn slice<'a>(rec: &'a Recording, seg: &Segment) -> Result<ArrayView2<'a, f64>> {
    if seg.end() > rec.len() {
        return Err(Error::SegmentOutOfRange {
            start: seg.start(),
            end: seg.end(),
            len: rec.len(),
        });
    }
    Ok(rec.samples.slice(s![seg.start()..seg.end(), ..]))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
