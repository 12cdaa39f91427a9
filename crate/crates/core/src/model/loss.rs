use super::{ModelError, Result};

/// Mean squared error and its gradient `2 (pred - target) / n`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(ModelError::LengthMismatch(pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}
