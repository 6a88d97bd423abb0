use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// d(loss)/d(logits) = softmax(logits) - onehot(label).
    pub logit_grad: Tensor,
    pub probabilities: Vec<f64>,
}

/// Numerically stable softmax followed by negative log-likelihood of `label`.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<LossOutput> {
    if logits.rank() != 1 {
        return Err(Error::Shape(format!(
            "logits must be rank 1, got shape {:?}",
            logits.shape()
        )));
    }
    let z = logits.data();
    if label >= z.len() {
        return Err(Error::Domain(format!(
            "label {label} out of range for {} classes",
            z.len()
        )));
    }
    if !logits.all_finite() {
        return Err(Error::Numeric(format!("non-finite logits {:?}", z)));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let log_total = total.ln();
    let probabilities: Vec<f64> = exp.iter().map(|e| e / total).collect();

    // -log p_label computed in log space so saturated logits stay exact.
    let loss = (log_total - (z[label] - max)).max(0.0);

    let mut grad = probabilities.clone();
    grad[label] -= 1.0;
    Ok(LossOutput {
        loss,
        logit_grad: Tensor::from_parts_unchecked(vec![z.len()], grad),
        probabilities,
    })
}
