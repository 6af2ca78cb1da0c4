//! Model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    u32   0x43444152 ("RADC")
//! version  u32   1
//! kind     u8    0 = feed-forward, 1 = recurrent
//! feed-forward:  input c, h, w (u32 each), layer count u32,
//!                per layer: tag u8 (0 linear, 1 conv2d, 2 relu, 3 avgpool2x2), size u32
//! recurrent:     seq_len, input_dim, hidden, classes (u32 each)
//! count    u64   number of parameters
//! values   f64 × count, blocks in model order, each row-major
//! ```

use std::io::{Read, Write};

use super::arch::{Architecture, FeedforwardSpec, LayerSpec, RecurrentSpec, Shape};
use super::{FeedforwardNet, Model, RecurrentNet};
use crate::error::{Error, Result};

pub const MAGIC: u32 = 0x4344_4152;
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(model: &Model, mut out: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend(MAGIC.to_le_bytes());
    buf.extend(VERSION.to_le_bytes());
    match model.architecture() {
        Architecture::Feedforward(s) => {
            buf.push(0);
            for v in [s.input.channels, s.input.height, s.input.width, s.layers.len()] {
                buf.extend((v as u32).to_le_bytes());
            }
            for l in &s.layers {
                let (tag, size) = match *l {
                    LayerSpec::Linear { out } => (0u8, out),
                    LayerSpec::Conv2d { out_channels } => (1, out_channels),
                    LayerSpec::Relu => (2, 0),
                    LayerSpec::AvgPool2x2 => (3, 0),
                };
                buf.push(tag);
                buf.extend((size as u32).to_le_bytes());
            }
        }
        Architecture::Recurrent(s) => {
            buf.push(1);
            for v in [s.seq_len, s.input_dim, s.hidden, s.classes] {
                buf.extend((v as u32).to_le_bytes());
            }
        }
    }
    let count: usize = model.params().iter().map(|p| p.values.len()).sum();
    buf.extend((count as u64).to_le_bytes());
    for p in model.params() {
        for v in &p.values {
            buf.extend(v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Truncated { expected: self.pos + n, found: self.data.len() });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Model> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if data.len() < 4 {
        let mut m = [0u8; 4];
        m[..data.len()].copy_from_slice(&data);
        return Err(Error::BadMagic { found: u32::from_le_bytes(m), expected: MAGIC });
    }
    let magic = c.u32()?;
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic, expected: MAGIC });
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::InvalidParameter(format!("unsupported checkpoint version {version}")));
    }
    let mut model = match c.u8()? {
        0 => {
            let input = Shape::image(c.usize()?, c.usize()?, c.usize()?);
            let n = c.usize()?;
            let mut layers = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                let tag = c.u8()?;
                let size = c.usize()?;
                layers.push(match tag {
                    0 => LayerSpec::Linear { out: size },
                    1 => LayerSpec::Conv2d { out_channels: size },
                    2 => LayerSpec::Relu,
                    3 => LayerSpec::AvgPool2x2,
                    t => return Err(Error::UnknownLayer(format!("tag {t}"))),
                });
            }
            Model::Feedforward(FeedforwardNet::zeros(FeedforwardSpec { input, layers })?)
        }
        1 => {
            let spec = RecurrentSpec {
                seq_len: c.usize()?,
                input_dim: c.usize()?,
                hidden: c.usize()?,
                classes: c.usize()?,
            };
            Model::Recurrent(RecurrentNet::zeros(spec)?)
        }
        k => return Err(Error::InvalidParameter(format!("unknown model kind {k}"))),
    };
    let count = c.u64()? as usize;
    let expected: usize = model.params().iter().map(|p| p.values.len()).sum();
    if count != expected {
        return Err(Error::DimensionMismatch(format!("checkpoint holds {count} parameters, layout needs {expected}")));
    }
    for p in model.params_mut() {
        for v in p.values.iter_mut() {
            *v = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
        }
    }
    Ok(model)
}
