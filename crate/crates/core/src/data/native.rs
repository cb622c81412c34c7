//! Native `FLDS` dataset files (little-endian): magic `FLDS`, version `u16 = 1`,
//! count `u32`, feature_dim `u32`, class_count `u16`, then `count * feature_dim`
//! `f32` features row-major and `count` `u16` labels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Example;

pub const DATASET_MAGIC: &[u8; 4] = b"FLDS";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: u64 = 4 + 2 + 4 + 4 + 2;

/// Features are stored as `f32`; values that are not `f32`-representable lose precision.
pub fn write_native<W: Write>(w: W, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(w);
    let count = u32::try_from(data.len()).map_err(|_| Error::arg("too many examples"))?;
    let dim = u32::try_from(data.feature_dim()).map_err(|_| Error::arg("feature dim too large"))?;
    let classes = u16::try_from(data.class_count()).map_err(|_| Error::arg("too many classes"))?;
    w.write_all(DATASET_MAGIC)?;
    w.write_u16::<LittleEndian>(DATASET_VERSION)?;
    w.write_u32::<LittleEndian>(count)?;
    w.write_u32::<LittleEndian>(dim)?;
    w.write_u16::<LittleEndian>(classes)?;
    for ex in data.examples() {
        for &v in &ex.x {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    for ex in data.examples() {
        w.write_u16::<LittleEndian>(ex.y as u16)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_native(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_native(File::create(path)?, data)
}

fn fmt_err(offset: u64, detail: impl Into<String>) -> Error {
    Error::Format {
        offset,
        detail: detail.into(),
    }
}

pub fn read_native<R: Read>(r: R) -> Result<Dataset> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| fmt_err(0, "truncated header"))?;
    if &magic != DATASET_MAGIC {
        return Err(fmt_err(0, format!("bad magic {magic:?}")));
    }
    let head = |e: std::io::Error| fmt_err(4, format!("truncated header: {e}"));
    let version = r.read_u16::<LittleEndian>().map_err(head)?;
    if version != DATASET_VERSION {
        return Err(fmt_err(4, format!("unsupported version {version}")));
    }
    let count = r.read_u32::<LittleEndian>().map_err(head)? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(head)? as usize;
    let classes = r.read_u16::<LittleEndian>().map_err(head)? as usize;
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    if dim == 0 || classes == 0 {
        return Err(fmt_err(10, "zero feature dim or class count"));
    }
    let mut offset = HEADER_LEN;
    let mut features = vec![0f32; count * dim];
    for v in features.iter_mut() {
        *v = r
            .read_f32::<LittleEndian>()
            .map_err(|_| fmt_err(offset, "truncated feature block"))?;
        offset += 4;
    }
    let mut examples = Vec::with_capacity(count);
    for (i, row) in features.chunks_exact(dim).enumerate() {
        let y = r
            .read_u16::<LittleEndian>()
            .map_err(|_| fmt_err(offset, "truncated label block"))? as usize;
        if y >= classes {
            return Err(fmt_err(offset, format!("label {y} of example {i} >= {classes}")));
        }
        offset += 2;
        examples.push(Example {
            x: row.iter().map(|&v| v as f64).collect(),
            y,
        });
    }
    Dataset::new(examples, dim, classes)
}

pub fn load_native(path: impl AsRef<Path>) -> Result<Dataset> {
    read_native(File::open(path)?)
}
