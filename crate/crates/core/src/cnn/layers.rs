//! Layer primitives for the compact CNN: plain-loop forward and analytic
//! backward passes over `ndarray` tensors.
//!
//! Shapes use (batch, maps, time) order; the temporal convolution keeps the
//! channel axis, producing (batch, filters, channels, time). Convolutions are
//! zero-padded "same" along time with the kernel split `left = (K−1)/2`,
//! `right = K−1−left`.

use ndarray::{s, Array1, Array2, Array3, Array4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Numerical floor inside batch-norm standard deviations.
pub(crate) const BN_EPS: f64 = 1e-5;

fn same_pad_left(k: usize) -> usize {
    (k - 1) / 2
}

// ---------------------------------------------------------------------------
// Temporal convolution: one shared 1-D kernel per filter, applied to every
// channel. (B,C,T) × (F1,K) → (B,F1,C,T), no bias.
// ---------------------------------------------------------------------------

pub(crate) fn conv_temporal_forward(x: &Array3<f64>, w: &Array2<f64>) -> Array4<f64> {
    let (bsz, c, t) = x.dim();
    let (f1, k) = w.dim();
    let left = same_pad_left(k);
    let mut out = Array4::zeros((bsz, f1, c, t));
    for b in 0..bsz {
        for ch in 0..c {
            let row = x.slice(s![b, ch, ..]);
            let row = row.as_slice().unwrap();
            for f in 0..f1 {
                let ker = w.row(f);
                let ker = ker.as_slice().unwrap();
                let mut o = out.slice_mut(s![b, f, ch, ..]);
                let o = o.as_slice_mut().unwrap();
                for (ti, oi) in o.iter_mut().enumerate() {
                    let k_lo = left.saturating_sub(ti);
                    let k_hi = k.min(t + left - ti);
                    let mut acc = 0.0;
                    for ki in k_lo..k_hi {
                        acc += ker[ki] * row[ti + ki - left];
                    }
                    *oi = acc;
                }
            }
        }
    }
    out
}

/// Gradient of the temporal convolution with respect to its kernel only (the
/// raw input needs no gradient).
pub(crate) fn conv_temporal_backward_w(
    x: &Array3<f64>,
    dy: &Array4<f64>,
    k: usize,
) -> Array2<f64> {
    let (bsz, c, t) = x.dim();
    let f1 = dy.dim().1;
    let left = same_pad_left(k);
    let mut dw = Array2::zeros((f1, k));
    for b in 0..bsz {
        for ch in 0..c {
            let row = x.slice(s![b, ch, ..]);
            let row = row.as_slice().unwrap();
            for f in 0..f1 {
                let g = dy.slice(s![b, f, ch, ..]);
                let g = g.as_slice().unwrap();
                let mut dker = dw.row_mut(f);
                let dker = dker.as_slice_mut().unwrap();
                for (ti, &gi) in g.iter().enumerate() {
                    let k_lo = left.saturating_sub(ti);
                    let k_hi = k.min(t + left - ti);
                    for ki in k_lo..k_hi {
                        dker[ki] += gi * row[ti + ki - left];
                    }
                }
            }
        }
    }
    dw
}

// ---------------------------------------------------------------------------
// Depthwise spatial convolution: collapses the channel axis.
// (B,F1,C,T) × (F1·D,C) → (B,F1·D,T), map m = f·D + j reads filter f.
// ---------------------------------------------------------------------------

pub(crate) fn depthwise_forward(
    x: &Array4<f64>,
    w: &Array2<f64>,
    depth_multiplier: usize,
) -> Array3<f64> {
    let (bsz, _f1, c, t) = x.dim();
    let m = w.nrows();
    let mut out = Array3::zeros((bsz, m, t));
    for b in 0..bsz {
        for mi in 0..m {
            let f = mi / depth_multiplier;
            let mut o = out.slice_mut(s![b, mi, ..]);
            let o = o.as_slice_mut().unwrap();
            for ch in 0..c {
                let wc = w[[mi, ch]];
                let row = x.slice(s![b, f, ch, ..]);
                let row = row.as_slice().unwrap();
                for (oi, &xi) in o.iter_mut().zip(row) {
                    *oi += wc * xi;
                }
            }
        }
    }
    out
}

pub(crate) fn depthwise_backward(
    x: &Array4<f64>,
    w: &Array2<f64>,
    dy: &Array3<f64>,
    depth_multiplier: usize,
) -> (Array4<f64>, Array2<f64>) {
    let (bsz, f1, c, t) = x.dim();
    let m = w.nrows();
    let mut dx = Array4::zeros((bsz, f1, c, t));
    let mut dw = Array2::zeros((m, c));
    for b in 0..bsz {
        for mi in 0..m {
            let f = mi / depth_multiplier;
            let g = dy.slice(s![b, mi, ..]);
            let g = g.as_slice().unwrap();
            for ch in 0..c {
                let row = x.slice(s![b, f, ch, ..]);
                let row = row.as_slice().unwrap();
                let mut acc = 0.0;
                for (&gi, &xi) in g.iter().zip(row) {
                    acc += gi * xi;
                }
                dw[[mi, ch]] += acc;
                let wc = w[[mi, ch]];
                let mut dxr = dx.slice_mut(s![b, f, ch, ..]);
                let dxr = dxr.as_slice_mut().unwrap();
                for (di, &gi) in dxr.iter_mut().zip(g) {
                    *di += wc * gi;
                }
            }
        }
    }
    (dx, dw)
}

// ---------------------------------------------------------------------------
// Separable convolution, depthwise half: per-map same-padded temporal kernel.
// (B,M,T) × (M,K2) → (B,M,T).
// ---------------------------------------------------------------------------

pub(crate) fn sep_depth_forward(x: &Array3<f64>, w: &Array2<f64>) -> Array3<f64> {
    let (bsz, m, t) = x.dim();
    let k = w.ncols();
    let left = same_pad_left(k);
    let mut out = Array3::zeros((bsz, m, t));
    for b in 0..bsz {
        for mi in 0..m {
            let row = x.slice(s![b, mi, ..]);
            let row = row.as_slice().unwrap();
            let ker = w.row(mi);
            let ker = ker.as_slice().unwrap();
            let mut o = out.slice_mut(s![b, mi, ..]);
            let o = o.as_slice_mut().unwrap();
            for (ti, oi) in o.iter_mut().enumerate() {
                let k_lo = left.saturating_sub(ti);
                let k_hi = k.min(t + left - ti);
                let mut acc = 0.0;
                for ki in k_lo..k_hi {
                    acc += ker[ki] * row[ti + ki - left];
                }
                *oi = acc;
            }
        }
    }
    out
}

pub(crate) fn sep_depth_backward(
    x: &Array3<f64>,
    w: &Array2<f64>,
    dy: &Array3<f64>,
) -> (Array3<f64>, Array2<f64>) {
    let (bsz, m, t) = x.dim();
    let k = w.ncols();
    let left = same_pad_left(k);
    let mut dx = Array3::zeros((bsz, m, t));
    let mut dw = Array2::zeros((m, k));
    for b in 0..bsz {
        for mi in 0..m {
            let row = x.slice(s![b, mi, ..]);
            let row = row.as_slice().unwrap();
            let ker = w.row(mi);
            let ker = ker.as_slice().unwrap();
            let g = dy.slice(s![b, mi, ..]);
            let g = g.as_slice().unwrap();
            let mut dker = dw.row_mut(mi);
            let dker = dker.as_slice_mut().unwrap();
            let mut dxr = dx.slice_mut(s![b, mi, ..]);
            let dxr = dxr.as_slice_mut().unwrap();
            for (ti, &gi) in g.iter().enumerate() {
                let k_lo = left.saturating_sub(ti);
                let k_hi = k.min(t + left - ti);
                for ki in k_lo..k_hi {
                    dker[ki] += gi * row[ti + ki - left];
                    dxr[ti + ki - left] += gi * ker[ki];
                }
            }
        }
    }
    (dx, dw)
}

// ---------------------------------------------------------------------------
// Separable convolution, pointwise half: 1×1 mixing across maps.
// (B,M,T) × (F2,M) → (B,F2,T).
// ---------------------------------------------------------------------------

pub(crate) fn pointwise_forward(x: &Array3<f64>, w: &Array2<f64>) -> Array3<f64> {
    let (bsz, m, t) = x.dim();
    let f2 = w.nrows();
    let mut out = Array3::zeros((bsz, f2, t));
    for b in 0..bsz {
        for fo in 0..f2 {
            let mut o = out.slice_mut(s![b, fo, ..]);
            let o = o.as_slice_mut().unwrap();
            for mi in 0..m {
                let wv = w[[fo, mi]];
                let row = x.slice(s![b, mi, ..]);
                let row = row.as_slice().unwrap();
                for (oi, &xi) in o.iter_mut().zip(row) {
                    *oi += wv * xi;
                }
            }
        }
    }
    out
}

pub(crate) fn pointwise_backward(
    x: &Array3<f64>,
    w: &Array2<f64>,
    dy: &Array3<f64>,
) -> (Array3<f64>, Array2<f64>) {
    let (bsz, m, t) = x.dim();
    let f2 = w.nrows();
    let mut dx = Array3::zeros((bsz, m, t));
    let mut dw = Array2::zeros((f2, m));
    for b in 0..bsz {
        for fo in 0..f2 {
            let g = dy.slice(s![b, fo, ..]);
            let g = g.as_slice().unwrap();
            for mi in 0..m {
                let row = x.slice(s![b, mi, ..]);
                let row = row.as_slice().unwrap();
                let mut acc = 0.0;
                for (&gi, &xi) in g.iter().zip(row) {
                    acc += gi * xi;
                }
                dw[[fo, mi]] += acc;
                let wv = w[[fo, mi]];
                let mut dxr = dx.slice_mut(s![b, mi, ..]);
                let dxr = dxr.as_slice_mut().unwrap();
                for (di, &gi) in dxr.iter_mut().zip(g) {
                    *di += wv * gi;
                }
            }
        }
    }
    (dx, dw)
}

// ---------------------------------------------------------------------------
// Batch normalization. Statistics are taken per map: over (batch, channels,
// time) for the 4-D variant and (batch, time) for the 3-D one.
// ---------------------------------------------------------------------------

pub(crate) struct BnCache3 {
    xhat: Array3<f64>,
    inv_sigma: Vec<f64>,
}

pub(crate) struct BnCache4 {
    xhat: Array4<f64>,
    inv_sigma: Vec<f64>,
}

/// Per-map mean/variance of a (B,M,T) tensor.
pub(crate) fn bn3_stats(x: &Array3<f64>) -> (Vec<f64>, Vec<f64>) {
    let (bsz, m, t) = x.dim();
    let n = (bsz * t) as f64;
    let mut mean = vec![0.0; m];
    let mut var = vec![0.0; m];
    for b in 0..bsz {
        for mi in 0..m {
            let row = x.slice(s![b, mi, ..]);
            mean[mi] += row.as_slice().unwrap().iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    for b in 0..bsz {
        for mi in 0..m {
            let mu = mean[mi];
            let row = x.slice(s![b, mi, ..]);
            var[mi] += row
                .as_slice()
                .unwrap()
                .iter()
                .map(|&v| (v - mu) * (v - mu))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

pub(crate) fn bn3_forward_train(
    x: &Array3<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> (Array3<f64>, BnCache3, (Vec<f64>, Vec<f64>)) {
    let (mean, var) = bn3_stats(x);
    let inv_sigma: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let (bsz, m, t) = x.dim();
    let mut xhat = Array3::zeros((bsz, m, t));
    let mut y = Array3::zeros((bsz, m, t));
    for b in 0..bsz {
        for mi in 0..m {
            let (mu, is) = (mean[mi], inv_sigma[mi]);
            let (g, be) = (gamma[mi], beta[mi]);
            for ti in 0..t {
                let h = (x[[b, mi, ti]] - mu) * is;
                xhat[[b, mi, ti]] = h;
                y[[b, mi, ti]] = g * h + be;
            }
        }
    }
    (y, BnCache3 { xhat, inv_sigma }, (mean, var))
}

pub(crate) fn bn3_forward_eval(
    x: &Array3<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
    run_mean: &Array1<f64>,
    run_var: &Array1<f64>,
) -> Array3<f64> {
    let (bsz, m, t) = x.dim();
    let mut y = Array3::zeros((bsz, m, t));
    for b in 0..bsz {
        for mi in 0..m {
            let is = 1.0 / (run_var[mi] + BN_EPS).sqrt();
            for ti in 0..t {
                y[[b, mi, ti]] =
                    gamma[mi] * (x[[b, mi, ti]] - run_mean[mi]) * is + beta[mi];
            }
        }
    }
    y
}

pub(crate) fn bn3_backward(
    cache: &BnCache3,
    gamma: &Array1<f64>,
    dy: &Array3<f64>,
) -> (Array3<f64>, Array1<f64>, Array1<f64>) {
    let (bsz, m, t) = dy.dim();
    let n = (bsz * t) as f64;
    let mut dgamma = Array1::zeros(m);
    let mut dbeta = Array1::zeros(m);
    for b in 0..bsz {
        for mi in 0..m {
            for ti in 0..t {
                dgamma[mi] += dy[[b, mi, ti]] * cache.xhat[[b, mi, ti]];
                dbeta[mi] += dy[[b, mi, ti]];
            }
        }
    }
    let mut dx = Array3::zeros((bsz, m, t));
    for b in 0..bsz {
        for mi in 0..m {
            let scale = gamma[mi] * cache.inv_sigma[mi];
            let mean_dy = dbeta[mi] / n;
            let mean_dyxhat = dgamma[mi] / n;
            for ti in 0..t {
                dx[[b, mi, ti]] = scale
                    * (dy[[b, mi, ti]] - mean_dy - cache.xhat[[b, mi, ti]] * mean_dyxhat);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Per-filter mean/variance of a (B,F1,C,T) tensor.
pub(crate) fn bn4_stats(x: &Array4<f64>) -> (Vec<f64>, Vec<f64>) {
    let (bsz, f1, c, t) = x.dim();
    let n = (bsz * c * t) as f64;
    let mut mean = vec![0.0; f1];
    let mut var = vec![0.0; f1];
    for b in 0..bsz {
        for f in 0..f1 {
            let slab = x.slice(s![b, f, .., ..]);
            mean[f] += slab.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    for b in 0..bsz {
        for f in 0..f1 {
            let mu = mean[f];
            let slab = x.slice(s![b, f, .., ..]);
            var[f] += slab.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

pub(crate) fn bn4_forward_train(
    x: &Array4<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> (Array4<f64>, BnCache4, (Vec<f64>, Vec<f64>)) {
    let (mean, var) = bn4_stats(x);
    let inv_sigma: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let (bsz, f1, c, t) = x.dim();
    let mut xhat = Array4::zeros((bsz, f1, c, t));
    let mut y = Array4::zeros((bsz, f1, c, t));
    for b in 0..bsz {
        for f in 0..f1 {
            let (mu, is) = (mean[f], inv_sigma[f]);
            let (g, be) = (gamma[f], beta[f]);
            for ch in 0..c {
                for ti in 0..t {
                    let h = (x[[b, f, ch, ti]] - mu) * is;
                    xhat[[b, f, ch, ti]] = h;
                    y[[b, f, ch, ti]] = g * h + be;
                }
            }
        }
    }
    (y, BnCache4 { xhat, inv_sigma }, (mean, var))
}

pub(crate) fn bn4_forward_eval(
    x: &Array4<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
    run_mean: &Array1<f64>,
    run_var: &Array1<f64>,
) -> Array4<f64> {
    let (bsz, f1, c, t) = x.dim();
    let mut y = Array4::zeros((bsz, f1, c, t));
    for b in 0..bsz {
        for f in 0..f1 {
            let is = 1.0 / (run_var[f] + BN_EPS).sqrt();
            for ch in 0..c {
                for ti in 0..t {
                    y[[b, f, ch, ti]] =
                        gamma[f] * (x[[b, f, ch, ti]] - run_mean[f]) * is + beta[f];
                }
            }
        }
    }
    y
}

pub(crate) fn bn4_backward(
    cache: &BnCache4,
    gamma: &Array1<f64>,
    dy: &Array4<f64>,
) -> (Array4<f64>, Array1<f64>, Array1<f64>) {
    let (bsz, f1, c, t) = dy.dim();
    let n = (bsz * c * t) as f64;
    let mut dgamma = Array1::zeros(f1);
    let mut dbeta = Array1::zeros(f1);
    for b in 0..bsz {
        for f in 0..f1 {
            for ch in 0..c {
                for ti in 0..t {
                    dgamma[f] += dy[[b, f, ch, ti]] * cache.xhat[[b, f, ch, ti]];
                    dbeta[f] += dy[[b, f, ch, ti]];
                }
            }
        }
    }
    let mut dx = Array4::zeros((bsz, f1, c, t));
    for b in 0..bsz {
        for f in 0..f1 {
            let scale = gamma[f] * cache.inv_sigma[f];
            let mean_dy = dbeta[f] / n;
            let mean_dyxhat = dgamma[f] / n;
            for ch in 0..c {
                for ti in 0..t {
                    dx[[b, f, ch, ti]] = scale
                        * (dy[[b, f, ch, ti]]
                            - mean_dy
                            - cache.xhat[[b, f, ch, ti]] * mean_dyxhat);
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// ELU, average pooling, dropout, dense, softmax
// ---------------------------------------------------------------------------

pub(crate) fn elu_forward(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| if v > 0.0 { v } else { v.exp() - 1.0 })
}

/// Backward through ELU given the forward *output* `y` (ELU is invertible
/// enough for that: y > 0 ⇔ x > 0 and dy/dx = y + 1 on the negative side).
pub(crate) fn elu_backward(y: &Array3<f64>, dy: &Array3<f64>) -> Array3<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &yv| {
        if yv <= 0.0 {
            *d *= yv + 1.0;
        }
    });
    dx
}

/// Non-overlapping average pooling along time; the trailing remainder is
/// dropped, mirroring the sliding-window rule.
pub(crate) fn avgpool_forward(x: &Array3<f64>, pool: usize) -> Array3<f64> {
    let (bsz, m, t) = x.dim();
    let t_out = t / pool;
    let mut out = Array3::zeros((bsz, m, t_out));
    for b in 0..bsz {
        for mi in 0..m {
            for j in 0..t_out {
                let mut acc = 0.0;
                for i in 0..pool {
                    acc += x[[b, mi, j * pool + i]];
                }
                out[[b, mi, j]] = acc / pool as f64;
            }
        }
    }
    out
}

pub(crate) fn avgpool_backward(dy: &Array3<f64>, pool: usize, t_in: usize) -> Array3<f64> {
    let (bsz, m, t_out) = dy.dim();
    let mut dx = Array3::zeros((bsz, m, t_in));
    let inv = 1.0 / pool as f64;
    for b in 0..bsz {
        for mi in 0..m {
            for j in 0..t_out {
                let g = dy[[b, mi, j]] * inv;
                for i in 0..pool {
                    dx[[b, mi, j * pool + i]] = g;
                }
            }
        }
    }
    dx
}

/// Inverted dropout: kept elements are scaled by 1/(1−rate) so eval needs no
/// rescaling. `None` rng (or rate 0) disables dropout and returns no mask.
pub(crate) fn dropout_forward(
    x: &Array3<f64>,
    rate: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> (Array3<f64>, Option<Array3<f64>>) {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            let mask = Array3::from_shape_simple_fn(x.dim(), || {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    1.0 / keep
                }
            });
            (x * &mask, Some(mask))
        }
        _ => (x.clone(), None),
    }
}

pub(crate) fn dropout_backward(dy: &Array3<f64>, mask: &Option<Array3<f64>>) -> Array3<f64> {
    match mask {
        Some(m) => dy * m,
        None => dy.clone(),
    }
}

/// Fully connected layer: (B,N) × (K,N) + (K) → (B,K).
pub(crate) fn dense_forward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    bias: &Array1<f64>,
) -> Array2<f64> {
    let (bsz, n) = x.dim();
    let k = w.nrows();
    let mut out = Array2::zeros((bsz, k));
    for b in 0..bsz {
        let xr = x.row(b);
        let xr = xr.as_slice().unwrap();
        for ko in 0..k {
            let wr = w.row(ko);
            let wr = wr.as_slice().unwrap();
            let mut acc = bias[ko];
            for i in 0..n {
                acc += wr[i] * xr[i];
            }
            out[[b, ko]] = acc;
        }
    }
    out
}

pub(crate) fn dense_backward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let (bsz, n) = x.dim();
    let k = w.nrows();
    let mut dx = Array2::zeros((bsz, n));
    let mut dw = Array2::zeros((k, n));
    let mut db = Array1::zeros(k);
    for b in 0..bsz {
        let xr = x.row(b);
        let xr = xr.as_slice().unwrap();
        for ko in 0..k {
            let g = dy[[b, ko]];
            db[ko] += g;
            let wr = w.row(ko);
            let wr = wr.as_slice().unwrap();
            let mut dwr = dw.row_mut(ko);
            let dwr = dwr.as_slice_mut().unwrap();
            let mut dxr = dx.row_mut(b);
            let dxr = dxr.as_slice_mut().unwrap();
            for i in 0..n {
                dwr[i] += g * xr[i];
                dxr[i] += g * wr[i];
            }
        }
    }
    (dx, dw, db)
}

/// Numerically stable softmax over the last axis.
pub(crate) fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

/// Mean cross-entropy with the log argument clamped at 1e−12 (the gradient
/// uses the standard unclamped form `p − onehot`).
pub(crate) fn cross_entropy(
    probs: &Array2<f64>,
    labels: &[usize],
) -> (f64, Array2<f64>) {
    let bsz = probs.nrows();
    let mut loss = 0.0;
    let mut dlogits = probs.clone();
    for (b, &y) in labels.iter().enumerate() {
        loss -= probs[[b, y]].max(1e-12).ln();
        dlogits[[b, y]] -= 1.0;
    }
    loss /= bsz as f64;
    dlogits.mapv_inplace(|v| v / bsz as f64);
    (loss, dlogits)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
