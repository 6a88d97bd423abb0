use std::fmt;

use crate::error::{Error, Result};
use crate::ops::{conv_output_size, pool_output_size};

/// One row of a layer table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Convolution {
        kernel_h: usize,
        kernel_w: usize,
        out_channels: usize,
    },
    Pooling {
        window_h: usize,
        window_w: usize,
    },
    FullyConnected {
        out_dim: usize,
    },
    Loss,
}

impl LayerSpec {
    pub const fn conv(kernel: usize, out_channels: usize) -> Self {
        LayerSpec::Convolution {
            kernel_h: kernel,
            kernel_w: kernel,
            out_channels,
        }
    }

    pub const fn pool(window: usize) -> Self {
        LayerSpec::Pooling {
            window_h: window,
            window_w: window,
        }
    }

    pub const fn fc(out_dim: usize) -> Self {
        LayerSpec::FullyConnected { out_dim }
    }

    /// Single-letter layer code: C, S, F or L.
    pub fn code(&self) -> char {
        match self {
            LayerSpec::Convolution { .. } => 'C',
            LayerSpec::Pooling { .. } => 'S',
            LayerSpec::FullyConnected { .. } => 'F',
            LayerSpec::Loss => 'L',
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Convolution {
                kernel_h,
                kernel_w,
                out_channels,
            } => write!(f, "C {kernel_h}x{kernel_w}x{out_channels}"),
            LayerSpec::Pooling { window_h, window_w } => write!(f, "S {window_h}x{window_w}"),
            LayerSpec::FullyConnected { out_dim } => write!(f, "F ->{out_dim}"),
            LayerSpec::Loss => write!(f, "L"),
        }
    }
}

/// Border handling for every convolution in a network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Padding {
    /// No padding; each convolution shrinks its input by `k - 1`.
    Valid,
    /// Zero padding of `(k - 1) / 2` on each side; odd square kernels keep extents.
    #[default]
    Same,
}

impl Padding {
    pub fn amount(&self, kernel_h: usize, kernel_w: usize) -> Result<usize> {
        match self {
            Padding::Valid => Ok(0),
            Padding::Same if kernel_h == kernel_w && kernel_h % 2 == 1 => Ok((kernel_h - 1) / 2),
            Padding::Same => Err(Error::Shape(format!(
                "same padding needs an odd square kernel, got {kernel_h}x{kernel_w}"
            ))),
        }
    }
}

/// Number of classes the head must emit (benign, malignant).
pub const NUM_CLASSES: usize = 2;

/// Normalized input extents used when none are configured.
pub const DEFAULT_INPUT_SIZE: (usize, usize) = (64, 64);

/// The ten-row mammogram classifier stack.
pub const TABLE1_LAYERS: [LayerSpec; 10] = [
    LayerSpec::conv(5, 32),
    LayerSpec::pool(3),
    LayerSpec::conv(5, 32),
    LayerSpec::pool(3),
    LayerSpec::conv(5, 64),
    LayerSpec::pool(2),
    LayerSpec::conv(5, 64),
    LayerSpec::pool(3),
    LayerSpec::fc(NUM_CLASSES),
    LayerSpec::Loss,
];

/// Output shape after one layer, as recorded by [`NetworkSpec::shape_trace`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageShape {
    /// 1-based row number.
    pub layer: usize,
    pub spec: LayerSpec,
    pub output: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
    input_size: (usize, usize),
    padding: Padding,
}

impl NetworkSpec {
    /// Validates layer ordering and propagates shapes through the stack.
    pub fn new(layers: Vec<LayerSpec>, input_size: (usize, usize), padding: Padding) -> Result<Self> {
        let spec = Self {
            layers,
            input_size,
            padding,
        };
        spec.validate_order()?;
        let trace = spec.shape_trace()?;
        for stage in &trace {
            log::debug!("layer {:>2} {:<10} -> {:?}", stage.layer, stage.spec.to_string(), stage.output);
        }
        Ok(spec)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_size(&self) -> (usize, usize) {
        self.input_size
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    fn validate_order(&self) -> Result<()> {
        let (h, w) = self.input_size;
        if h == 0 || w == 0 {
            return Err(Error::Shape(format!("input size {h}x{w} has a zero extent")));
        }
        match self.layers.iter().position(|l| *l == LayerSpec::Loss) {
            Some(i) if i + 1 == self.layers.len() => {}
            Some(i) => {
                return Err(Error::Shape(format!(
                    "loss layer must be last, found at row {} of {}",
                    i + 1,
                    self.layers.len()
                )))
            }
            None => return Err(Error::Shape("network has no loss layer".into())),
        }
        let mut seen_fc = false;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::FullyConnected { out_dim: 0 } => {
                    return Err(Error::Shape(format!("row {}: fully-connected output is empty", i + 1)))
                }
                LayerSpec::FullyConnected { .. } => seen_fc = true,
                LayerSpec::Convolution { .. } | LayerSpec::Pooling { .. } if seen_fc => {
                    return Err(Error::Shape(format!(
                        "row {} ({layer}) follows a fully-connected layer",
                        i + 1
                    )))
                }
                LayerSpec::Convolution {
                    kernel_h,
                    kernel_w,
                    out_channels,
                } if *kernel_h == 0 || *kernel_w == 0 || *out_channels == 0 => {
                    return Err(Error::Shape(format!("row {}: zero extent in {layer}", i + 1)))
                }
                _ => {}
            }
        }
        if !seen_fc {
            return Err(Error::Shape("network has no fully-connected head".into()));
        }
        Ok(())
    }

    /// Output shape of every layer for the configured input size.
    ///
    /// Fails with a message naming the first row whose input cannot hold its
    /// kernel or window, or when the head does not emit exactly two logits.
    pub fn shape_trace(&self) -> Result<Vec<StageShape>> {
        let (mut c, (mut h, mut w)) = (1usize, self.input_size);
        let mut flat: Option<usize> = None;
        let mut trace = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let at = |e: Error| {
                Error::Shape(format!(
                    "row {} ({layer}) cannot accept input {c}x{h}x{w}: {}",
                    i + 1,
                    e.root()
                ))
            };
            let output = match *layer {
                LayerSpec::Convolution {
                    kernel_h,
                    kernel_w,
                    out_channels,
                } => {
                    let pad = self.padding.amount(kernel_h, kernel_w).map_err(at)?;
                    (h, w) = conv_output_size((h, w), (kernel_h, kernel_w), pad).map_err(at)?;
                    c = out_channels;
                    vec![c, h, w]
                }
                LayerSpec::Pooling { window_h, window_w } => {
                    (h, w) = pool_output_size((h, w), (window_h, window_w)).map_err(at)?;
                    vec![c, h, w]
                }
                LayerSpec::FullyConnected { out_dim } => {
                    flat = Some(out_dim);
                    vec![out_dim]
                }
                LayerSpec::Loss => vec![flat.unwrap_or(c * h * w)],
            };
            trace.push(StageShape {
                layer: i + 1,
                spec: *layer,
                output,
            });
        }
        match flat {
            Some(NUM_CLASSES) => Ok(trace),
            Some(n) => Err(Error::Shape(format!(
                "classifier head emits {n} logits, expected {NUM_CLASSES}"
            ))),
            None => Err(Error::Shape("network has no fully-connected head".into())),
        }
    }

    /// Flattened feature length entering the first fully-connected layer.
    pub fn feature_len(&self) -> Result<usize> {
        let trace = self.shape_trace()?;
        let first_fc = self
            .layers
            .iter()
            .position(|l| matches!(l, LayerSpec::FullyConnected { .. }))
            .expect("validated head");
        Ok(match first_fc {
            0 => self.input_size.0 * self.input_size.1,
            i => trace[i - 1].output.iter().product(),
        })
    }
}

/// The ten-row classifier for a normalized `input_size` grayscale image,
/// with same-padded convolutions.
pub fn build_table1_network(input_size: (usize, usize)) -> Result<NetworkSpec> {
    NetworkSpec::new(TABLE1_LAYERS.to_vec(), input_size, Padding::Same)
}
