use crate::error::{Error, Result};
use crate::layers::sigmoid;

fn check(len_a: usize, labels: &[u8]) -> Result<()> {
    if len_a != labels.len() {
        return Err(Error::LengthMismatch {
            left: len_a,
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::SchemaMismatch(format!("label {bad} is not binary")));
    }
    Ok(())
}

/// Mean binary cross-entropy over probabilities clamped to `[clamp, 1 − clamp]`.
pub fn bce_loss(probs: &[f64], labels: &[u8], clamp: f64) -> Result<f64> {
    check(probs.len(), labels)?;
    let n = probs.len() as f64;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(clamp, 1.0 - clamp);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / n)
}

/// BCE on `sigmoid(logits)` plus its gradient with respect to the logits,
/// in the fused form `(sigmoid(z) − y) / N`.
pub fn bce_with_logits(logits: &[f64], labels: &[u8], clamp: f64) -> Result<(f64, Vec<f64>)> {
    check(logits.len(), labels)?;
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let loss = bce_loss(&probs, labels, clamp)?;
    let n = logits.len() as f64;
    let grad = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| (p - f64::from(y)) / n)
        .collect();
    Ok((loss, grad))
}
