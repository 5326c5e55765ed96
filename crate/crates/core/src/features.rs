//! Statistical feature extraction and feature standardization.
//!
//! Each segment becomes a fixed-length vector of four statistics — mean,
//! minimum, maximum, population standard deviation — per channel, in
//! canonical channel order (4·K values for K channels; 48 for the full 12).
//! A [`Scaler`] fitted on training features standardizes each dimension for
//! the SVM path.

use std::io::{self, BufRead, Write};
use std::str::FromStr;

use ndarray::ArrayView2;

use crate::data_model::{ChannelId, MovementClass};
use crate::error::{Error, Result};

/// Statistics extracted per channel, in output order.
pub const STAT_NAMES: [&str; 4] = ["mean", "min", "max", "std"];

/// Number of statistics per channel.
pub const STATS_PER_CHANNEL: usize = STAT_NAMES.len();

// ---------------------------------------------------------------------------
// FeatureVector
// ---------------------------------------------------------------------------

/// Fixed-length statistical summary of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// 4·K values: (mean, min, max, std) per channel, channels in input order.
    pub values: Vec<f64>,
    pub label: Option<MovementClass>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Extract (mean, min, max, population std) per channel from a window of
/// shape (len × K).
///
/// The standard deviation divides by `len` (population form), so it is
/// defined even for single-sample windows.
pub fn extract_features(window: ArrayView2<'_, f64>) -> Result<FeatureVector> {
    let (len, k) = (window.nrows(), window.ncols());
    if len == 0 || k == 0 {
        return Err(Error::InvalidInput(format!(
            "feature window must be non-empty, got {len}×{k}"
        )));
    }
    let mut values = Vec::with_capacity(STATS_PER_CHANNEL * k);
    for col in window.columns() {
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in col {
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        let mean = sum / len as f64;
        let mut sq_dev = 0.0;
        for &v in col {
            let d = v - mean;
            sq_dev += d * d;
        }
        let std = (sq_dev / len as f64).sqrt();
        values.extend_from_slice(&[mean, min, max, std]);
    }
    Ok(FeatureVector {
        values,
        label: None,
    })
}

/// Column names for a feature CSV: `<channel>_<stat>` per dimension.
pub fn feature_names(channels: &[ChannelId]) -> Vec<String> {
    channels
        .iter()
        .flat_map(|ch| STAT_NAMES.iter().map(move |s| format!("{ch}_{s}")))
        .collect()
}

// ---------------------------------------------------------------------------
// Scaler
// ---------------------------------------------------------------------------

/// Per-dimension standardization parameters learned from a training set.
///
/// Dimensions whose training variance is zero carry no information; they are
/// flagged and mapped to 0 instead of dividing by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    mean: Vec<f64>,
    /// Strictly positive; 1.0 placeholder on zero-variance dimensions.
    std: Vec<f64>,
    zero_variance: Vec<bool>,
}

impl Scaler {
    /// Identity scaler (mean 0, std 1): `apply_scaler` becomes a no-op.
    pub fn identity(dim: usize) -> Scaler {
        Scaler {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            zero_variance: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Which dimensions had zero training variance.
    pub fn zero_variance(&self) -> &[bool] {
        &self.zero_variance
    }
}

/// Learn per-dimension mean and population std from training features.
pub fn fit_scaler(train: &[FeatureVector]) -> Result<Scaler> {
    if train.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "scaler needs at least 2 vectors, got {}",
            train.len()
        )));
    }
    let dim = train[0].dim();
    for v in train {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
    }
    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in train {
        for (m, &x) in mean.iter_mut().zip(&v.values) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for v in train {
        for ((s, &m), &x) in var.iter_mut().zip(&mean).zip(&v.values) {
            let d = x - m;
            *s += d * d;
        }
    }
    let mut std = Vec::with_capacity(dim);
    let mut zero_variance = Vec::with_capacity(dim);
    for s in var {
        let sd = (s / n).sqrt();
        if sd > 0.0 {
            std.push(sd);
            zero_variance.push(false);
        } else {
            std.push(1.0);
            zero_variance.push(true);
        }
    }
    Ok(Scaler {
        mean,
        std,
        zero_variance,
    })
}

/// Standardize one vector: `(v − mean) / std` per dimension, with
/// zero-variance dimensions mapped to 0. The label is preserved.
pub fn apply_scaler(scaler: &Scaler, v: &FeatureVector) -> Result<FeatureVector> {
    if v.dim() != scaler.dim() {
        return Err(Error::DimensionMismatch {
            expected: scaler.dim(),
            got: v.dim(),
        });
    }
    let values = v
        .values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if scaler.zero_variance[i] {
                0.0
            } else {
                (x - scaler.mean[i]) / scaler.std[i]
            }
        })
        .collect();
    Ok(FeatureVector {
        values,
        label: v.label,
    })
}

// ---------------------------------------------------------------------------
// CSV formats
// ---------------------------------------------------------------------------

/// Write features as CSV: one header naming each `<channel>_<stat>` dimension
/// plus a trailing `label` column (empty when unlabeled). Values use the
/// shortest round-trip decimal form, so parsing back is bit-exact.
pub fn serialize_features(
    features: &[FeatureVector],
    channels: &[ChannelId],
    mut w: impl Write,
) -> Result<()> {
    let names = feature_names(channels);
    writeln!(w, "{},label", names.join(","))?;
    for v in features {
        if v.dim() != names.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: v.dim(),
            });
        }
        for x in &v.values {
            write!(w, "{x},")?;
        }
        match v.label {
            Some(c) => writeln!(w, "{c}")?,
            None => writeln!(w)?,
        }
    }
    Ok(())
}

/// Read a feature CSV written by [`serialize_features`].
pub fn parse_features(reader: impl io::Read) -> Result<Vec<FeatureVector>> {
    let mut lines = io::BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::EmptyStream),
    };
    let dim = header.split(',').count().saturating_sub(1);
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::MalformedRow {
                line: line_no,
                expected: dim + 1,
                got: fields.len(),
            });
        }
        let mut values = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            let v: f64 = f.trim().parse().map_err(|_| Error::NonFiniteValue {
                line: line_no,
                value: f.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    line: line_no,
                    value: f.to_string(),
                });
            }
            values.push(v);
        }
        let tag = fields[dim].trim();
        let label = if tag.is_empty() {
            None
        } else {
            Some(MovementClass::from_str(tag).map_err(|e| match e {
                Error::UnknownClass { tag, .. } => Error::UnknownClass { tag, line: line_no },
                other => other,
            })?)
        };
        out.push(FeatureVector { values, label });
    }
    Ok(out)
}

/// Write a scaler as `dim,mean,std` rows; zero-variance dimensions are
/// written with std 0 to mark them.
pub fn serialize_scaler(scaler: &Scaler, mut w: impl Write) -> Result<()> {
    writeln!(w, "dim,mean,std")?;
    for i in 0..scaler.dim() {
        let std = if scaler.zero_variance[i] { 0.0 } else { scaler.std[i] };
        writeln!(w, "{i},{},{std}", scaler.mean[i])?;
    }
    Ok(())
}

/// Read a scaler written by [`serialize_scaler`].
pub fn parse_scaler(reader: impl io::Read) -> Result<Scaler> {
    let mut mean = Vec::new();
    let mut std = Vec::new();
    let mut zero_variance = Vec::new();
    for (idx, line) in io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || (line_no == 1 && trimmed == "dim,mean,std") {
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
        let dim: usize = fields[0].trim().parse().map_err(|_| {
            Error::MalformedModel(format!("scaler line {line_no}: bad dim index"))
        })?;
        if dim != mean.len() {
            return Err(Error::MalformedModel(format!(
                "scaler line {line_no}: dims out of order"
            )));
        }
        let m: f64 = fields[1].trim().parse().map_err(|_| Error::NonFiniteValue {
            line: line_no,
            value: fields[1].to_string(),
        })?;
        let s: f64 = fields[2].trim().parse().map_err(|_| Error::NonFiniteValue {
            line: line_no,
            value: fields[2].to_string(),
        })?;
        if !m.is_finite() || !s.is_finite() || s < 0.0 {
            return Err(Error::MalformedModel(format!(
                "scaler line {line_no}: invalid mean/std"
            )));
        }
        mean.push(m);
        if s == 0.0 {
            std.push(1.0);
            zero_variance.push(true);
        } else {
            std.push(s);
            zero_variance.push(false);
        }
    }
    if mean.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(Scaler {
        mean,
        std,
        zero_variance,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
