//! Soft-target categorical cross entropy.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean over the batch of -sum_i t_i * log softmax(z)_i, plus the gradient
/// with respect to the logits, (softmax(z) - t) / B. Log-softmax is computed
/// with the usual max shift so large logits cannot overflow.
pub fn soft_cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if logits.shape != targets.shape || logits.shape.len() != 2 {
        return Err(Error::shape(format!(
            "cross entropy needs matching [B, N] logits and targets, got {:?} vs {:?}",
            logits.shape, targets.shape
        )));
    }
    let b = logits.shape[0];
    let n = logits.shape[1];
    if b == 0 {
        return Err(Error::shape("cross entropy on an empty batch"));
    }
    let mut dlogits = Tensor::zeros(&logits.shape);
    let mut total = 0.0;
    for bi in 0..b {
        let z = logits.row(bi);
        let t = targets.row(bi);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = z.iter().map(|&v| (v - m).exp()).sum();
        let lse = m + sum_exp.ln();
        let mut row_loss = 0.0;
        let drow = dlogits.row_mut(bi);
        for i in 0..n {
            row_loss += t[i] * (lse - z[i]);
            let p = (z[i] - m).exp() / sum_exp;
            drow[i] = (p - t[i]) / b as f64;
        }
        total += row_loss;
    }
    Ok((total / b as f64, dlogits))
}
