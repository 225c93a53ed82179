//! Elementwise activations and the categorical cross-entropy loss.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clipped to `[CLIP_EPS, 1 - CLIP_EPS]` before the log.
pub const CLIP_EPS: f64 = 1e-12;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Softmax along the last axis, with max subtraction.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let width = match x.shape().last() {
        Some(&w) if w > 0 => w,
        _ => return Err(Error::InvalidShape("softmax needs a non-empty last axis".into())),
    };
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(width) {
        softmax_in_place(row);
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `-log(pred[target])` for a one-hot target.
pub fn cross_entropy(pred: &[f64], target: usize, n_classes: usize) -> Result<f64> {
    if pred.len() != n_classes {
        return Err(Error::InvalidShape(format!(
            "prediction has {} entries for {} classes",
            pred.len(),
            n_classes
        )));
    }
    if target >= n_classes {
        return Err(Error::IndexOutOfRange {
            index: target,
            bound: n_classes,
        });
    }
    let p = pred[target].clamp(CLIP_EPS, 1.0 - CLIP_EPS);
    Ok(-p.ln())
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
