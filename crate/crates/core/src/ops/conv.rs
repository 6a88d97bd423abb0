//! Stride-1 2-D cross-correlation with optional symmetric zero padding.
//!
//! Both passes lower the convolution to a matrix product over an unfolded
//! ("im2col") copy of the input: one column per output pixel, one row per
//! (channel, kernel row, kernel column) tap.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::ops::gemm::{gemm, Layout};
use crate::tensor::Tensor;

thread_local! {
    // Unfolded-input and unfolded-gradient buffers, reused across calls on
    // the same thread. They reach a few MB for mid-network layers, and fresh
    // allocations that large cost a page fault per 4 KiB.
    static COLS: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
    static DCOLS: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

fn zeroed(buf: &mut Vec<f64>, len: usize) {
    buf.clear();
    buf.resize(len, 0.0);
}

/// Kernel of shape (out_channels, in_channels, kh, kw) and one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn new(kernel: Tensor, bias: Tensor) -> Result<Self> {
        let [out_c, _, _, _] = kernel_dims(&kernel)?;
        bias.expect_shape(&[out_c], "conv bias")?;
        Ok(Self { kernel, bias })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kh: usize, kw: usize) -> Result<Self> {
        Ok(Self {
            kernel: Tensor::zeros(&[out_channels, in_channels, kh, kw])?,
            bias: Tensor::zeros(&[out_channels])?,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernel.shape()[2], self.kernel.shape()[3])
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }
}

fn kernel_dims(kernel: &Tensor) -> Result<[usize; 4]> {
    match kernel.shape() {
        &[o, i, kh, kw] => Ok([o, i, kh, kw]),
        other => Err(Error::Shape(format!(
            "conv kernel must be rank 4 (out, in, kh, kw), got {other:?}"
        ))),
    }
}

/// Output extents of a stride-1 convolution.
pub fn conv_output_size(
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    pad: usize,
) -> Result<(usize, usize)> {
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    if ph < kh || pw < kw {
        return Err(Error::Shape(format!(
            "{kh}x{kw} kernel does not fit a {h}x{w} input with padding {pad}"
        )));
    }
    Ok((ph - kh + 1, pw - kw + 1))
}

struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(input: &Tensor, params: &ConvParams, pad: usize) -> Result<Self> {
        let (c, h, w) = input.chw()?;
        let [_, in_c, kh, kw] = kernel_dims(&params.kernel)?;
        if c != in_c {
            return Err(Error::Shape(format!(
                "conv input has {c} channels but the kernel expects {in_c}"
            )));
        }
        let (out_h, out_w) = conv_output_size((h, w), (kh, kw), pad)?;
        Ok(Self {
            channels: c,
            h,
            w,
            kh,
            kw,
            pad,
            out_h,
            out_w,
        })
    }

    fn taps(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Visits every (column-matrix index, input index) pair whose input
    /// position lies inside the unpadded input.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let pixels = self.pixels();
        for c in 0..self.channels {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * pixels;
                    for oy in 0..self.out_h {
                        let iy = oy + ky;
                        if iy < self.pad || iy - self.pad >= self.h {
                            continue;
                        }
                        let src_row = (c * self.h + iy - self.pad) * self.w;
                        // ox range whose input column lands inside [0, w).
                        let ox_lo = self.pad.saturating_sub(kx);
                        let ox_hi = (self.w + self.pad - kx).min(self.out_w);
                        for ox in ox_lo..ox_hi {
                            f(row + oy * self.out_w + ox, src_row + ox + kx - self.pad);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, input: &[f64], cols: &mut Vec<f64>) {
        zeroed(cols, self.taps() * self.pixels());
        self.for_each_tap(|dst, src| cols[dst] = input[src]);
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.channels * self.h * self.w];
        self.for_each_tap(|col, dst| out[dst] += cols[col]);
        out
    }
}

/// Valid-or-padded cross-correlation, stride 1, bias added per output channel.
///
/// Output extents are `H + 2·pad − kH + 1` by `W + 2·pad − kW + 1`.
pub fn conv_forward(input: &Tensor, params: &ConvParams, pad: usize) -> Result<Tensor> {
    let g = Geometry::new(input, params, pad)?;
    let out_c = params.out_channels();
    let pixels = g.pixels();
    let mut out = Vec::with_capacity(out_c * pixels);
    for &b in params.bias.data() {
        out.extend(std::iter::repeat_n(b, pixels));
    }
    COLS.with_borrow_mut(|cols| {
        g.im2col(input.data(), cols);
        gemm(
            out_c,
            g.taps(),
            pixels,
            params.kernel.data(),
            Layout::AsIs,
            cols,
            Layout::AsIs,
            1.0,
            &mut out,
        );
    });
    Ok(Tensor::from_parts_unchecked(vec![out_c, g.out_h, g.out_w], out))
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub params: ConvParams,
}

/// Gradients of a scalar loss with respect to the input, kernel, and bias,
/// given the loss gradient at the convolution output.
pub fn conv_backward(
    input: &Tensor,
    params: &ConvParams,
    pad: usize,
    upstream: &Tensor,
) -> Result<(Tensor, ConvParams)> {
    let grads = conv_backward_with(input, params, pad, upstream, true)?;
    Ok((grads.input.expect("input gradient requested"), grads.params))
}

/// As [`conv_backward`], optionally skipping the input gradient (first layer).
pub fn conv_backward_with(
    input: &Tensor,
    params: &ConvParams,
    pad: usize,
    upstream: &Tensor,
    want_input_grad: bool,
) -> Result<ConvGrads> {
    let g = Geometry::new(input, params, pad)?;
    let out_c = params.out_channels();
    upstream.expect_shape(&[out_c, g.out_h, g.out_w], "conv upstream gradient")?;
    let pixels = g.pixels();
    let dy = upstream.data();

    let bias_grad: Vec<f64> = dy.chunks_exact(pixels).map(|c| c.iter().sum()).collect();

    let mut kernel_grad = vec![0.0; out_c * g.taps()];
    COLS.with_borrow_mut(|cols| {
        g.im2col(input.data(), cols);
        gemm(
            out_c,
            pixels,
            g.taps(),
            dy,
            Layout::AsIs,
            cols,
            Layout::Transposed,
            0.0,
            &mut kernel_grad,
        );
    });

    let input_grad = want_input_grad.then(|| {
        DCOLS.with_borrow_mut(|dcols| {
            zeroed(dcols, g.taps() * pixels);
            gemm(
                g.taps(),
                out_c,
                pixels,
                params.kernel.data(),
                Layout::Transposed,
                dy,
                Layout::AsIs,
                0.0,
                dcols,
            );
            Tensor::from_parts_unchecked(input.shape().to_vec(), g.col2im(dcols))
        })
    });

    Ok(ConvGrads {
        input: input_grad,
        params: ConvParams {
            kernel: Tensor::from_parts_unchecked(params.kernel.shape().to_vec(), kernel_grad),
            bias: Tensor::from_parts_unchecked(vec![out_c], bias_grad),
        },
    })
}
