use super::tensor::Tensor2D;
use crate::error::{Error, Result};

/// Root mean squared error over a batch and its gradient with respect to
/// the predictions. At exactly zero loss the gradient is taken to be zero.
pub fn rmse_loss(preds: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if preds.len() != targets.len() {
        return Err(Error::DataIntegrity(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("RMSE over an empty batch".into()));
    }
    let n = preds.len() as f64;
    let mse = preds
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / n;
    let loss = mse.sqrt();
    let grad = if loss == 0.0 {
        vec![0.0; preds.len()]
    } else {
        preds
            .iter()
            .zip(targets)
            .map(|(p, y)| (p - y) / (n * loss))
            .collect()
    };
    Ok((loss, grad))
}

/// Mean softmax cross-entropy of `logits` rows against class `targets`,
/// with the gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor2D, targets: &[usize]) -> (f64, Tensor2D) {
    assert_eq!(logits.rows(), targets.len(), "one target per row");
    assert!(!targets.is_empty(), "cross-entropy over an empty batch");
    let n = targets.len() as f64;
    let mut grad = Tensor2D::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + z.ln();
        total += log_z - row[t];
        for (c, g) in grad.row_mut(r).iter_mut().enumerate() {
            let p = (row[c] - log_z).exp();
            *g = (p - if c == t { 1.0 } else { 0.0 }) / n;
        }
    }
    (total / n, grad)
}
