//! The big-endian IDX container used by MNIST (`idx3-ubyte` images,
//! `idx1-ubyte` labels). Pixels are scaled to `[0, 1]`.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Example;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn fmt_err(offset: u64, detail: impl Into<String>) -> Error {
    Error::Format {
        offset,
        detail: detail.into(),
    }
}

/// Returns `(rows * cols, images)`.
pub fn read_idx_images<R: Read>(r: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut r = BufReader::new(r);
    let magic = r.read_u32::<BigEndian>().map_err(|_| fmt_err(0, "truncated header"))?;
    if magic != IMAGES_MAGIC {
        return Err(fmt_err(0, format!("bad IDX3 magic {magic:#010x}")));
    }
    let mut dims = [0usize; 3];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = r
            .read_u32::<BigEndian>()
            .map_err(|_| fmt_err(4 + 4 * i as u64, "truncated header"))? as usize;
    }
    let [count, rows, cols] = dims;
    let dim = rows * cols;
    let mut raw = vec![0u8; count * dim];
    r.read_exact(&mut raw)
        .map_err(|_| fmt_err(16, "truncated pixel block"))?;
    let images = raw
        .chunks_exact(dim.max(1))
        .take(count)
        .map(|px| px.iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    Ok((dim, images))
}

pub fn read_idx_labels<R: Read>(r: R) -> Result<Vec<usize>> {
    let mut r = BufReader::new(r);
    let magic = r.read_u32::<BigEndian>().map_err(|_| fmt_err(0, "truncated header"))?;
    if magic != LABELS_MAGIC {
        return Err(fmt_err(0, format!("bad IDX1 magic {magic:#010x}")));
    }
    let count = r.read_u32::<BigEndian>().map_err(|_| fmt_err(4, "truncated header"))? as usize;
    let mut raw = vec![0u8; count];
    r.read_exact(&mut raw).map_err(|_| fmt_err(8, "truncated label block"))?;
    Ok(raw.into_iter().map(usize::from).collect())
}

/// Loads an image/label IDX pair as a 10-class dataset.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (dim, xs) = read_idx_images(File::open(images)?)?;
    let ys = read_idx_labels(File::open(labels)?)?;
    if xs.len() != ys.len() {
        return Err(Error::arg(format!("{} images but {} labels", xs.len(), ys.len())));
    }
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let examples = xs.into_iter().zip(ys).map(|(x, y)| Example { x, y }).collect();
    Dataset::new(examples, dim, 10)
}
