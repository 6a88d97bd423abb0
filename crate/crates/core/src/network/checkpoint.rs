//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   b"RSLCKPT\0"
//! version      u8        1
//! seed         u64
//! input_h      u32
//! input_w      u32
//! padding      u8        0 = valid, 1 = same
//! layer_count  u32
//! layers       layer_count records: kind u8 then dims
//!                0 = convolution  kernel_h u32, kernel_w u32, out_channels u32
//!                1 = pooling      window_h u32, window_w u32
//!                2 = fully conn.  out_dim u32
//!                3 = loss         (no dims)
//! tensor_count u32
//! tensors      tensor_count records in row order, kernel/weights before bias:
//!                rank u8, rank × u32 extents, then f64 values (IEEE-754 bits)
//!                in row-major order
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::model::{LayerParams, Model};
use crate::network::spec::{LayerSpec, NetworkSpec, Padding};
use crate::ops::{ConvParams, FcParams};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 8] = *b"RSLCKPT\0";
pub const VERSION: u8 = 1;

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let spec = model.spec();
    let mut out = Vec::with_capacity(64 + model.param_count() * 8);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&model.seed().to_le_bytes());
    let (h, w) = spec.input_size();
    put_u32(&mut out, h);
    put_u32(&mut out, w);
    out.push(match spec.padding() {
        Padding::Valid => 0,
        Padding::Same => 1,
    });
    put_u32(&mut out, spec.layers().len());
    for layer in spec.layers() {
        match *layer {
            LayerSpec::Convolution {
                kernel_h,
                kernel_w,
                out_channels,
            } => {
                out.push(0);
                put_u32(&mut out, kernel_h);
                put_u32(&mut out, kernel_w);
                put_u32(&mut out, out_channels);
            }
            LayerSpec::Pooling { window_h, window_w } => {
                out.push(1);
                put_u32(&mut out, window_h);
                put_u32(&mut out, window_w);
            }
            LayerSpec::FullyConnected { out_dim } => {
                out.push(2);
                put_u32(&mut out, out_dim);
            }
            LayerSpec::Loss => out.push(3),
        }
    }
    let tensors: Vec<&Tensor> = model.param_tensors().collect();
    put_u32(&mut out, tensors.len());
    for t in tensors {
        out.push(t.rank() as u8);
        t.shape().iter().for_each(|&d| put_u32(&mut out, d));
        for v in t.data() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Domain("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Domain(format!("unsupported checkpoint version {version}")));
    }
    let seed = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let input_size = (r.u32()?, r.u32()?);
    let padding = match r.u8()? {
        0 => Padding::Valid,
        1 => Padding::Same,
        other => return Err(Error::Domain(format!("unknown padding code {other}"))),
    };
    let layer_count = r.u32()?;
    let mut layers = Vec::with_capacity(layer_count.min(1024));
    for _ in 0..layer_count {
        layers.push(match r.u8()? {
            0 => LayerSpec::Convolution {
                kernel_h: r.u32()?,
                kernel_w: r.u32()?,
                out_channels: r.u32()?,
            },
            1 => LayerSpec::Pooling {
                window_h: r.u32()?,
                window_w: r.u32()?,
            },
            2 => LayerSpec::FullyConnected { out_dim: r.u32()? },
            3 => LayerSpec::Loss,
            other => return Err(Error::Domain(format!("unknown layer code {other}"))),
        });
    }
    let spec = NetworkSpec::new(layers, input_size, padding)?;

    let tensor_count = r.u32()?;
    let mut tensors = Vec::with_capacity(tensor_count.min(1024));
    for _ in 0..tensor_count {
        let rank = r.u8()? as usize;
        if rank == 0 || rank > Tensor::MAX_RANK {
            return Err(Error::Domain(format!("tensor rank {rank} out of range")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Domain("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        tensors.push(Tensor::new(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Domain(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }

    let mut tensors = tensors.into_iter();
    let mut next = || tensors.next().ok_or_else(|| Error::Domain("checkpoint is missing tensors".into()));
    let mut params = Vec::with_capacity(spec.layers().len());
    for layer in spec.layers() {
        params.push(match layer {
            LayerSpec::Convolution { .. } => LayerParams::Conv(ConvParams::new(next()?, next()?)?),
            LayerSpec::FullyConnected { .. } => LayerParams::Fc(FcParams::new(next()?, next()?)?),
            _ => LayerParams::None,
        });
    }
    if next().is_ok() {
        return Err(Error::Domain("checkpoint holds more tensors than its layers need".into()));
    }
    Model::from_parts(spec, params, seed)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| e.context(format!("loading checkpoint {}", path.display())))
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("extent fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Domain(format!("checkpoint truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}
