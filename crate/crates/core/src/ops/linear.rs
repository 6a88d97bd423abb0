//! Fully-connected (affine) layer over a flattened input.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights of shape (out_dim, in_dim) and a bias of length out_dim.
#[derive(Clone, Debug, PartialEq)]
pub struct FcParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl FcParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let out_dim = match weights.shape() {
            &[o, _] => o,
            other => {
                return Err(Error::Shape(format!(
                    "fc weights must be rank 2 (out, in), got {other:?}"
                )))
            }
        };
        bias.expect_shape(&[out_dim], "fc bias")?;
        Ok(Self { weights, bias })
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Result<Self> {
        Ok(Self {
            weights: Tensor::zeros(&[out_dim, in_dim])?,
            bias: Tensor::zeros(&[out_dim])?,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "fc layer expects {} inputs, got {} (shape {:?})",
                self.in_dim(),
                input.len(),
                input.shape()
            )));
        }
        Ok(())
    }
}

/// `weights · flatten(input) + bias`.
pub fn fc_forward(input: &Tensor, params: &FcParams) -> Result<Tensor> {
    params.check_input(input)?;
    let x = input.data();
    let out = params
        .weights
        .data()
        .chunks_exact(params.in_dim())
        .zip(params.bias.data())
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Ok(Tensor::from_parts_unchecked(vec![params.out_dim()], out))
}

/// Returns the input gradient (in the input's original shape) and the parameter gradients.
pub fn fc_backward(input: &Tensor, params: &FcParams, upstream: &Tensor) -> Result<(Tensor, FcParams)> {
    params.check_input(input)?;
    upstream.expect_shape(&[params.out_dim()], "fc upstream gradient")?;
    let (in_dim, x, dy) = (params.in_dim(), input.data(), upstream.data());

    let mut input_grad = vec![0.0; in_dim];
    let mut weight_grad = Vec::with_capacity(params.weights.len());
    for (row, &g) in params.weights.data().chunks_exact(in_dim).zip(dy) {
        for (acc, w) in input_grad.iter_mut().zip(row) {
            *acc += w * g;
        }
        weight_grad.extend(x.iter().map(|v| v * g));
    }

    Ok((
        Tensor::from_parts_unchecked(input.shape().to_vec(), input_grad),
        FcParams {
            weights: Tensor::from_parts_unchecked(params.weights.shape().to_vec(), weight_grad),
            bias: upstream.clone(),
        },
    ))
}
