use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// In-place `params -= learning_rate * grads`.
///
/// A rate of zero is accepted and leaves `params` untouched. Each call reads
/// the current parameter values, so two calls with `g1` then `g2` equal one
/// call with `g1 + g2` up to rounding.
pub fn sgd_update(params: &mut Tensor, grads: &Tensor, learning_rate: f64) -> Result<()> {
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(Error::Domain(format!(
            "learning rate must be finite and non-negative, got {learning_rate}"
        )));
    }
    grads.expect_shape(params.shape(), "sgd gradient")?;
    if learning_rate == 0.0 {
        return Ok(());
    }
    for (p, g) in params.data_mut().iter_mut().zip(grads.data()) {
        *p -= learning_rate * g;
    }
    Ok(())
}
