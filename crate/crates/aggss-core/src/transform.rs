//! Rotation-expanded training and aggregated inference.
//!
//! The mechanism treats each rotated copy of an image as its own class: a
//! batch of `B` images over `K` classes becomes `B*M` rows over `K*M`
//! classes, with the `M` variants of item `i` interleaved at rows
//! `i*M .. i*M+M-1` and labels remapped to `class*M + rotation`. At test
//! time the matching per-rotation logits are averaged back down to `K`
//! real classes.

use crate::error::{Error, Result};
use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};

/// The ordered set of `M` lossless image transforms.
///
/// `M` in {1, 2, 4} uses the first `M` rotations of the sequence
/// 0deg, 90deg, 180deg, 270deg. `M = 8` composes the four rotations with a
/// horizontal flip; every transform is an exact pixel permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformSet {
    m: usize,
}

pub const SUPPORTED_M: [usize; 4] = [1, 2, 4, 8];

impl TransformSet {
    pub fn new(m: usize) -> Result<Self> {
        if !SUPPORTED_M.contains(&m) {
            return Err(Error::InvalidArgument(format!(
                "transform count must be one of {SUPPORTED_M:?}, got {m}"
            )));
        }
        Ok(Self { m })
    }

    pub fn count(&self) -> usize {
        self.m
    }

    /// Whether any member of the set is a genuine rotation (requires square
    /// inputs).
    pub fn uses_rotations(&self) -> bool {
        self.m > 1
    }

    /// Applies transform `r` to a single CHW image.
    pub fn apply(&self, img: ArrayView3<'_, f32>, r: usize) -> Result<Array3<f32>> {
        if r >= self.m {
            return Err(Error::InvalidArgument(format!(
                "transform index {r} out of range for M={}",
                self.m
            )));
        }
        let quarter_turns = r % 4;
        let flip = r >= 4;
        let rotated = rot90(img, quarter_turns)?;
        Ok(if flip { hflip(rotated.view()) } else { rotated })
    }
}

/// Rotates a CHW image counter-clockwise by `k` quarter turns without
/// interpolation. `k > 0` requires a square image.
pub fn rot90(img: ArrayView3<'_, f32>, k: usize) -> Result<Array3<f32>> {
    let (c, h, w) = img.dim();
    let k = k % 4;
    if k == 0 {
        return Ok(img.to_owned());
    }
    if h != w {
        return Err(Error::Shape(format!(
            "rotation by {}deg needs a square image, got {h}x{w}",
            k * 90
        )));
    }
    let n = h;
    let mut out = Array3::<f32>::zeros((c, n, n));
    for ch in 0..c {
        let src = img.index_axis(Axis(0), ch);
        let mut dst = out.index_axis_mut(Axis(0), ch);
        match k {
            1 => {
                for i in 0..n {
                    for j in 0..n {
                        dst[[i, j]] = src[[j, n - 1 - i]];
                    }
                }
            }
            2 => {
                for i in 0..n {
                    for j in 0..n {
                        dst[[i, j]] = src[[n - 1 - i, n - 1 - j]];
                    }
                }
            }
            3 => {
                for i in 0..n {
                    for j in 0..n {
                        dst[[i, j]] = src[[n - 1 - j, i]];
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(out)
}

/// Mirrors a CHW image along the horizontal axis (left-right).
pub fn hflip(img: ArrayView3<'_, f32>) -> Array3<f32> {
    let (c, h, w) = img.dim();
    let mut out = Array3::<f32>::zeros((c, h, w));
    for ch in 0..c {
        let src = img.index_axis(Axis(0), ch);
        let mut dst = out.index_axis_mut(Axis(0), ch);
        for i in 0..h {
            for j in 0..w {
                dst[[i, j]] = src[[i, w - 1 - j]];
            }
        }
    }
    out
}

/// A rotation-expanded batch: `B*M` images with labels in `[0, K*M)`.
///
/// Row layout is interleaved: the `M` variants of source item `i` occupy
/// rows `i*M .. i*M+M-1` in transform order, and
/// `labels[i*M + r] = source_label[i]*M + r`.
#[derive(Debug, Clone)]
pub struct ExpandedBatch {
    pub images: Array4<f32>,
    pub labels: Vec<u32>,
    pub m: usize,
    pub source_len: usize,
    pub num_source_classes: usize,
}

impl ExpandedBatch {
    pub fn rows(&self) -> usize {
        self.source_len * self.m
    }

    pub fn expanded_classes(&self) -> usize {
        self.num_source_classes * self.m
    }
}

/// Maps a real class and a rotation index to the expanded label
/// `class_index*M + rotation_index`, a bijection [0,K) x [0,M) -> [0,K*M).
pub fn remap_label(class_index: usize, rotation_index: usize, m: usize) -> Result<usize> {
    if !SUPPORTED_M.contains(&m) {
        return Err(Error::InvalidArgument(format!(
            "transform count must be one of {SUPPORTED_M:?}, got {m}"
        )));
    }
    if rotation_index >= m {
        return Err(Error::InvalidArgument(format!(
            "rotation index {rotation_index} out of range for M={m}"
        )));
    }
    Ok(class_index * m + rotation_index)
}

/// Expands a batch of `B` images with labels in `[0, num_classes)` into the
/// interleaved `B*M` layout. Row `i*M` keeps the original pixels bit-exactly.
pub fn expand_batch(
    images: &Array4<f32>,
    labels: &[u32],
    num_classes: usize,
    ts: &TransformSet,
) -> Result<ExpandedBatch> {
    let (b, c, h, w) = images.dim();
    if b != labels.len() {
        return Err(Error::Shape(format!(
            "batch has {b} images but {} labels",
            labels.len()
        )));
    }
    if ts.uses_rotations() && h != w {
        return Err(Error::Shape(format!(
            "rotational transforms need square images, got {h}x{w}"
        )));
    }
    for &y in labels {
        if (y as usize) >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
    }
    let m = ts.count();
    let mut out = Array4::<f32>::zeros((b * m, c, h, w));
    let mut out_labels = vec![0u32; b * m];
    for i in 0..b {
        let src = images.index_axis(Axis(0), i);
        for r in 0..m {
            let row = i * m + r;
            out.index_axis_mut(Axis(0), row).assign(&ts.apply(src, r)?);
            out_labels[row] = labels[i] * m as u32 + r as u32;
        }
    }
    Ok(ExpandedBatch {
        images: out,
        labels: out_labels,
        m,
        source_len: b,
        num_source_classes: num_classes,
    })
}

/// Softmax cross-entropy over the full `K*M` output width, averaged over the
/// `B*M` expanded rows.
pub fn aggss_loss(expanded: &ExpandedBatch, raw_logits: &ArrayView2<'_, f32>) -> Result<f32> {
    aggss_loss_with_grad(expanded, raw_logits).map(|(loss, _)| loss)
}

/// Same as [`aggss_loss`] but also returns d(loss)/d(raw_logits).
pub fn aggss_loss_with_grad(
    expanded: &ExpandedBatch,
    raw_logits: &ArrayView2<'_, f32>,
) -> Result<(f32, Array2<f32>)> {
    let rows = expanded.rows();
    let width = expanded.expanded_classes();
    if raw_logits.dim() != (rows, width) {
        return Err(Error::Shape(format!(
            "expected logits ({rows}, {width}), got {:?}",
            raw_logits.dim()
        )));
    }
    let mut grad = Array2::<f32>::zeros((rows, width));
    let mut total = 0f64;
    let inv_n = 1.0 / rows as f64;
    for (n, logit_row) in raw_logits.outer_iter().enumerate() {
        let y = expanded.labels[n] as usize;
        let row = logit_row.as_slice().expect("contiguous logits row");
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0f64;
        for &v in row {
            sum += ((v as f64) - max).exp();
        }
        let log_z = max + sum.ln();
        total += (log_z - row[y] as f64) * inv_n;
        let mut grad_row = grad.index_axis_mut(Axis(0), n);
        for (j, &v) in row.iter().enumerate() {
            let p = ((v as f64) - log_z).exp();
            grad_row[j] = (p * inv_n) as f32;
        }
        grad_row[y] -= inv_n as f32;
    }
    Ok((total as f32, grad))
}

/// Per-class logits recovered from an expanded batch's raw outputs.
#[derive(Debug, Clone)]
pub struct AggregatedLogits {
    pub values: Array2<f32>,
}

impl AggregatedLogits {
    /// Predicted real class per source item.
    pub fn predictions(&self) -> Vec<usize> {
        self.values
            .outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect()
    }
}

/// Collapses raw logits of shape `(B*M, K*M)` down to `(B, K)` by averaging
/// the matching diagonal entries: `values[b][c] = mean_r raw[b*M+r][c*M+r]`.
pub fn aggregate_inference(raw_logits: &ArrayView2<'_, f32>, m: usize) -> Result<AggregatedLogits> {
    let (rows, width) = raw_logits.dim();
    if m == 0 || rows % m != 0 {
        return Err(Error::Shape(format!(
            "row count {rows} is not divisible by M={m}"
        )));
    }
    if width % m != 0 {
        return Err(Error::Shape(format!(
            "logit width {width} is not divisible by M={m}"
        )));
    }
    let b = rows / m;
    let k = width / m;
    let mut values = Array2::<f32>::zeros((b, k));
    let inv_m = 1.0 / m as f32;
    for i in 0..b {
        for c in 0..k {
            let mut acc = 0f32;
            for r in 0..m {
                acc += raw_logits[[i * m + r, c * m + r]];
            }
            values[[i, c]] = acc * inv_m;
        }
    }
    Ok(AggregatedLogits { values })
}
