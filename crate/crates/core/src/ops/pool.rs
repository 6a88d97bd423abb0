//! Non-overlapping max pooling (stride equals window, trailing remainder cropped).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Winning input position for every pooled output cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndex {
    input_shape: [usize; 3],
    output_shape: [usize; 3],
    /// Flat row-major input offset per output cell.
    argmax: Vec<usize>,
}

impl PoolIndex {
    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.output_shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

pub fn pool_output_size((h, w): (usize, usize), (ph, pw): (usize, usize)) -> Result<(usize, usize)> {
    if ph == 0 || pw == 0 {
        return Err(Error::Shape("pooling window must be at least 1x1".into()));
    }
    if h < ph || w < pw {
        return Err(Error::Shape(format!(
            "{ph}x{pw} pooling window is larger than the {h}x{w} input"
        )));
    }
    Ok((h / ph, w / pw))
}

/// Max over each `window` block. Ties resolve to the first position in scan order.
pub fn pool_forward(input: &Tensor, window: (usize, usize)) -> Result<(Tensor, PoolIndex)> {
    let (c, h, w) = input.chw()?;
    let (oh, ow) = pool_output_size((h, w), window)?;
    let (ph, pw) = window;
    let x = input.data();

    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = plane + oy * ph * w + ox * pw;
                let mut best = x[best_idx];
                for dy in 0..ph {
                    let row = plane + (oy * ph + dy) * w + ox * pw;
                    for (idx, &v) in x[row..row + pw].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row + idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    let index = PoolIndex {
        input_shape: [c, h, w],
        output_shape: [c, oh, ow],
        argmax,
    };
    Ok((Tensor::from_parts_unchecked(vec![c, oh, ow], out), index))
}

/// Routes each upstream value to the input position that won its window.
pub fn pool_backward(index: &PoolIndex, upstream: &Tensor) -> Result<Tensor> {
    upstream.expect_shape(&index.output_shape, "pool upstream gradient")?;
    let input_len: usize = index.input_shape.iter().product();
    if index.argmax.len() != upstream.len() {
        return Err(Error::Internal(format!(
            "pool index holds {} winners for {} output cells",
            index.argmax.len(),
            upstream.len()
        )));
    }
    let mut grad = vec![0.0; input_len];
    for (&src, &g) in index.argmax.iter().zip(upstream.data()) {
        let slot = grad
            .get_mut(src)
            .ok_or_else(|| Error::Internal(format!("pool winner {src} outside input of {input_len}")))?;
        *slot += g;
    }
    Ok(Tensor::from_parts_unchecked(index.input_shape.to_vec(), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_stays_constant() {
        let input = Tensor::full(&[2, 7, 5], 3.25).unwrap();
        let (out, _) = pool_forward(&input, (2, 2)).unwrap();
        assert_eq!(out.shape(), &[2, 3, 2]);
        assert!(out.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn block_maxima_of_distinct_values() {
        // Scrambled permutation of 0..36 so maxima are not all in one corner.
        let values: Vec<f64> = (0..36).map(|i| ((i * 17) % 36) as f64).collect();
        let input = Tensor::new(&[1, 6, 6], values.clone()).unwrap();
        let (out, index) = pool_forward(&input, (3, 3)).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        for by in 0..2 {
            for bx in 0..2 {
                let mut best = f64::MIN;
                for y in 0..3 {
                    for x in 0..3 {
                        best = best.max(values[(by * 3 + y) * 6 + bx * 3 + x]);
                    }
                }
                assert_eq!(out.data()[by * 2 + bx], best);
                assert_eq!(values[index.argmax()[by * 2 + bx]], best);
            }
        }
    }

    #[test]
    fn remainder_is_cropped() {
        let input = Tensor::zeros(&[1, 20, 22]).unwrap();
        let (out, _) = pool_forward(&input, (3, 3)).unwrap();
        assert_eq!(out.shape(), &[1, 6, 7]);
    }

    #[test]
    fn window_larger_than_input_fails() {
        let input = Tensor::zeros(&[1, 2, 5]).unwrap();
        assert!(matches!(pool_forward(&input, (3, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_routes_and_conserves_mass() {
        let input = Tensor::new(&[1, 4, 4], (0..16).map(|v| ((v * 7) % 16) as f64).collect()).unwrap();
        let (_, index) = pool_forward(&input, (2, 2)).unwrap();
        let upstream = Tensor::new(&[1, 2, 2], vec![1.0, -2.0, 0.5, 4.0]).unwrap();
        let grad = pool_backward(&index, &upstream).unwrap();
        assert_eq!(grad.sum(), upstream.sum());
        assert_eq!(grad.data().iter().filter(|&&v| v != 0.0).count(), 4);

        let zero = pool_backward(&index, &Tensor::zeros(&[1, 2, 2]).unwrap()).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let (_, index) = pool_forward(&Tensor::zeros(&[1, 4, 4]).unwrap(), (2, 2)).unwrap();
        assert!(pool_backward(&index, &Tensor::zeros(&[1, 3, 2]).unwrap()).is_err());
    }
}
