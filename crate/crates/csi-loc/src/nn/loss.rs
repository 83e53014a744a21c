//! Training losses with analytic gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::Tensor;

/// Below this distance the mean-distance gradient takes its zero subgradient.
pub const MDE_SUBGRADIENT_EPS: f64 = 1e-12;

/// Mean distance error over a batch of predicted coordinates.
///
/// `loss = (1/B) * sum_b ||pred_b - label_b||`, gradient
/// `(pred_b - label_b) / (B * ||pred_b - label_b||)`, zero where the distance
/// is below [`MDE_SUBGRADIENT_EPS`].
pub fn mde_loss<S: Scalar>(predictions: &Tensor<S>, labels: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    if predictions.shape != labels.shape || predictions.shape.len() != 2 {
        return Err(Error::shape(format!(
            "mde expects matching [batch, dim] shapes, got {:?} and {:?}",
            predictions.shape, labels.shape
        )));
    }
    let batch = predictions.batch();
    if batch == 0 {
        return Err(Error::shape("mde on an empty batch"));
    }
    let dim = predictions.sample_len();
    let eps = S::from_f64_lossy(MDE_SUBGRADIENT_EPS);
    let b_scale = S::from_f64_lossy(batch as f64);
    let mut loss = S::zero();
    let mut grad = Tensor::zeros(predictions.shape.clone());
    for b in 0..batch {
        let p = &predictions.values[b * dim..(b + 1) * dim];
        let l = &labels.values[b * dim..(b + 1) * dim];
        let mut norm2 = S::zero();
        for (pi, li) in p.iter().zip(l.iter()) {
            let d = *pi - *li;
            norm2 += d * d;
        }
        let norm = norm2.sqrt();
        loss += norm / b_scale;
        if norm >= eps {
            let scale = (b_scale * norm).recip();
            for (k, (pi, li)) in p.iter().zip(l.iter()).enumerate() {
                grad.values[b * dim + k] = (*pi - *li) * scale;
            }
        }
    }
    Ok((loss, grad))
}

/// Softmax cross-entropy over logits.
///
/// `loss = -(1/B) * sum_b log softmax(logits_b)[class_b]`, gradient
/// `(softmax - onehot) / B`.
pub fn cross_entropy_loss<S: Scalar>(logits: &Tensor<S>, classes: &[usize]) -> Result<(S, Tensor<S>)> {
    if logits.shape.len() != 2 {
        return Err(Error::shape(format!(
            "cross entropy expects [batch, classes], got {:?}",
            logits.shape
        )));
    }
    let batch = logits.batch();
    let k = logits.sample_len();
    if k < 2 {
        return Err(Error::shape("cross entropy needs at least 2 classes"));
    }
    if classes.len() != batch || batch == 0 {
        return Err(Error::shape(format!(
            "{} class labels for batch {batch}",
            classes.len()
        )));
    }
    if let Some(&bad) = classes.iter().find(|&&c| c >= k) {
        return Err(Error::domain(format!("class index {bad} out of range 0..{k}")));
    }
    let b_scale = S::from_f64_lossy(batch as f64);
    let mut loss = S::zero();
    let mut grad = Tensor::zeros(logits.shape.clone());
    for b in 0..batch {
        let row = &logits.values[b * k..(b + 1) * k];
        let max = row.iter().fold(S::neg_infinity(), |m, &v| if v > m { v } else { m });
        let mut sum = S::zero();
        for &v in row.iter() {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln() + max;
        loss -= (row[classes[b]] - log_sum) / b_scale;
        for i in 0..k {
            let softmax = (row[i] - log_sum).exp();
            let onehot = if i == classes[b] { S::one() } else { S::zero() };
            grad.values[b * k + i] = (softmax - onehot) / b_scale;
        }
    }
    Ok((loss, grad))
}
