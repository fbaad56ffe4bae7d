use crate::error::{LtcsError, Result};
use crate::nn::activation::log_sum_exp;
use crate::real::Real;

/// Softmax cross-entropy of one list: `-Σ y_j log softmax(logits)_j`.
/// Zero when no label is positive.
pub fn listwise_loss<F: Real>(logits: &[F], labels: &[u8]) -> Result<F> {
    Ok(listwise_loss_with_grad(logits, labels)?.0)
}

/// Loss together with its gradient `(Σ y) p - y` with respect to the logits.
pub fn listwise_loss_with_grad<F: Real>(logits: &[F], labels: &[u8]) -> Result<(F, Vec<F>)> {
    if logits.len() != labels.len() {
        return Err(LtcsError::InvalidArgument(format!(
            "listwise_loss: {} logits but {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if logits.is_empty() {
        return Err(LtcsError::InvalidArgument("listwise_loss of an empty list".into()));
    }
    let positives: F = labels.iter().map(|&y| F::from_f64(y as f64)).sum();
    if positives == F::zero() {
        return Ok((F::zero(), vec![F::zero(); logits.len()]));
    }
    let lse = log_sum_exp(logits);
    let mut loss = F::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        let y = F::from_f64(y as f64);
        loss += y * (lse - z);
        grad.push(positives * (z - lse).exp() - y);
    }
    Ok((loss, grad))
}

/// `(1 - alpha) * initial + alpha * rerank`.
pub fn combined_loss(loss_initial: f64, loss_rerank: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LtcsError::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok((1.0 - alpha) * loss_initial + alpha * loss_rerank)
}
