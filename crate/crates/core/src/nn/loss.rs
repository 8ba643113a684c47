use super::layers::softmax_rows;
use super::tensor::Tensor;
use super::NnError;

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

fn check_same_len(a: &[f64], b: &[f64], what: &str) -> Result<(), NnError> {
    if a.len() != b.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{what}: {} predictions vs {} targets",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy between probabilities and targets in [0, 1].
pub fn binary_cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64, NnError> {
    check_same_len(pred, target, "binary cross-entropy")?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`binary_cross_entropy`] with respect to the logits that
/// produced `pred` through a sigmoid. Clamped entries have zero gradient.
pub fn binary_cross_entropy_logit_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>, NnError> {
    check_same_len(pred, target, "binary cross-entropy")?;
    let n = pred.len().max(1) as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            if *p < BCE_CLAMP || *p > 1.0 - BCE_CLAMP {
                0.0
            } else {
                (p - t) / n
            }
        })
        .collect())
}

/// Per-row softmax cross-entropy of `[n, k]` logits; returns the summed loss
/// (not averaged) and its gradient.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    let [n, k] = match logits.shape() {
        [n, k] => [*n, *k],
        s => {
            return Err(NnError::ShapeMismatch(format!(
                "logits must be [n, k], got {s:?}"
            )))
        }
    };
    if labels.len() != n {
        return Err(NnError::ShapeMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            n
        )));
    }
    let mut probs = softmax_rows(logits);
    let mut loss = 0.0;
    for (row, &label) in probs.data_mut().chunks_exact_mut(k).zip(labels) {
        if label >= k {
            return Err(NnError::ShapeMismatch(format!(
                "label {label} out of {k} classes"
            )));
        }
        loss -= row[label].max(f64::MIN_POSITIVE).ln();
        row[label] -= 1.0;
    }
    Ok((loss, probs))
}

/// `sum (pred - target)^2` and its gradient.
pub fn sum_squared_error(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NnError> {
    target.expect_shape(pred.shape(), "squared-error target")?;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        loss += d * d;
        *g = 2.0 * d;
    }
    Ok((loss, grad))
}
