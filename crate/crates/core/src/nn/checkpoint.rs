//! `FLW1` model checkpoints: little-endian magic `FLW1`, `u16` layer count,
//! then per trainable layer `rows: u32`, `cols: u32`, `rows*cols` `f64`
//! weights (row-major) and `cols` `f64` biases.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::params::{LayerParams, ModelParams, Params};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FLW1";

pub fn write_checkpoint<W: Write>(mut w: W, params: &ModelParams) -> Result<()> {
    let count = u16::try_from(params.num_layers())
        .map_err(|_| Error::arg("too many layers for a checkpoint"))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u16::<LittleEndian>(count)?;
    for layer in params.layers() {
        let rows = u32::try_from(layer.rows).map_err(|_| Error::arg("layer too large"))?;
        let cols = u32::try_from(layer.cols).map_err(|_| Error::arg("layer too large"))?;
        w.write_u32::<LittleEndian>(rows)?;
        w.write_u32::<LittleEndian>(cols)?;
        for &v in layer.weights.iter().chain(&layer.bias) {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

struct Counting<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.pos += n as u64;
        Ok(n)
    }
}

fn truncated(pos: u64) -> Error {
    Error::Format {
        offset: pos,
        detail: "truncated checkpoint".into(),
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<ModelParams> {
    let mut r = Counting { inner: r, pos: 0 };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated(r.pos))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: format!("bad magic {magic:?}"),
        });
    }
    let count = r.read_u16::<LittleEndian>().map_err(|_| truncated(r.pos))?;
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let rows = r.read_u32::<LittleEndian>().map_err(|_| truncated(r.pos))? as usize;
        let cols = r.read_u32::<LittleEndian>().map_err(|_| truncated(r.pos))? as usize;
        let mut layer = LayerParams::zeros(rows, cols);
        for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *v = r.read_f64::<LittleEndian>().map_err(|_| truncated(r.pos))?;
        }
        layers.push(layer);
    }
    Ok(Params::new(layers))
}
