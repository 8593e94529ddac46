//! IDX reader and writer (MNIST, Fashion-MNIST), gzip optional.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::{io_err, DataError, Dataset};
use crate::engine::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads the whole file, transparently inflating gzip content.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Returns `(dims, payload)` after validating the magic and length.
fn parse(bytes: &[u8], path: &Path, magic: u32, ndims: usize) -> Result<(Vec<usize>, usize), DataError> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    let dims = (0..ndims)
        .map(|d| be_u32(bytes, 4 + 4 * d, path).map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let header = 4 + 4 * ndims;
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok((dims, header))
}

/// Loads an IDX image/label file pair. Pixels are divided by 255.
pub fn load_idx(images: &Path, labels: &Path, name: &str) -> Result<Dataset, DataError> {
    let img_bytes = read_maybe_gz(images)?;
    let (dims, off) = parse(&img_bytes, images, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let lab_bytes = read_maybe_gz(labels)?;
    let (ldims, loff) = parse(&lab_bytes, labels, LABELS_MAGIC, 1)?;
    if ldims[0] != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: ldims[0],
        });
    }
    if count == 0 || rows == 0 || cols == 0 {
        return Err(DataError::Format {
            path: images.to_path_buf(),
            reason: "empty image set".into(),
        });
    }
    let pixels: Vec<f64> = img_bytes[off..off + count * rows * cols]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    let label_vec: Vec<usize> = lab_bytes[loff..loff + count].iter().map(|&b| b as usize).collect();
    let classes = label_vec.iter().max().map_or(0, |m| m + 1).max(10);
    let tensor = Tensor::new(vec![count, 1, rows, cols], pixels).map_err(|e| DataError::Format {
        path: images.to_path_buf(),
        reason: e.to_string(),
    })?;
    Dataset::new(name, classes, tensor, label_vec)
}

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes a single-channel dataset as an uncompressed IDX pair.
pub fn write_idx(dataset: &Dataset, images: &Path, labels: &Path) -> Result<(), DataError> {
    let &[1, rows, cols] = dataset.image_shape() else {
        return Err(DataError::InvalidParameter(format!(
            "IDX needs single-channel images, got {:?}",
            dataset.image_shape()
        )));
    };
    let mut img = Vec::with_capacity(16 + dataset.images().len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [dataset.len(), rows, cols] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    img.extend(dataset.images().data().iter().map(|&v| to_byte(v)));
    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    lab.extend(dataset.labels().iter().map(|&l| l as u8));
    File::create(images)
        .and_then(|mut f| f.write_all(&img))
        .map_err(io_err(images))?;
    File::create(labels)
        .and_then(|mut f| f.write_all(&lab))
        .map_err(io_err(labels))
}
