//! Small internal helpers shared across modules.

/// Mean over the truncated window `[i - left, i + right]` for every index.
///
/// Indices outside the slice are dropped from the average rather than padded,
/// so edge windows shrink.
pub(crate) fn moving_mean(x: &[f64], left: usize, right: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(left);
        let hi = (i + right + 1).min(n);
        let sum: f64 = x[lo..hi].iter().sum();
        out.push(sum / (hi - lo) as f64);
    }
    out
}

/// Index of the maximum value; ties resolve to the earliest index.
///
/// Returns `None` for an empty slice. NaN entries never win.
pub(crate) fn argmax_earliest(x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in x.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            None => best = Some((i, v)),
            Some((_, bv)) if v > bv => best = Some((i, v)),
            _ => {}
        }
    }
    best.map(|(i, _)| i)
}

/// Derive a child seed from a parent seed and a string tag.
///
/// Stable across platforms and releases: a fixed FNV-1a hash of the tag is
/// mixed with the parent through a splitmix64 finalizer. Used to fan one
/// user-facing seed out to independent per-stage and per-subject streams.
pub fn derive_seed(parent: u64, tag: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(parent ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Round half away from zero to the nearest integer.
pub(crate) fn round_half_away(x: f64) -> i64 {
    if x >= 0.0 {
        (x + 0.5).floor() as i64
    } else {
        (x - 0.5).ceil() as i64
    }
}
