//! CIFAR-10 binary batches: each record is one label byte followed by
//! 3x32x32 channel-major pixel bytes.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{io_err, DataError, Dataset};
use crate::engine::Tensor;

pub const RECORD_LEN: usize = 1 + PIXELS;
const PIXELS: usize = 3 * 32 * 32;
pub const CLASSES: usize = 10;

pub fn load_cifar10<P: AsRef<Path>>(paths: &[P], name: &str) -> Result<Dataset, DataError> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let path = p.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_err(path))?;
        if bytes.is_empty() || bytes.len() % RECORD_LEN != 0 {
            return Err(DataError::Format {
                path: path.to_path_buf(),
                reason: format!(
                    "length {} is not a positive multiple of {RECORD_LEN}",
                    bytes.len()
                ),
            });
        }
        for (i, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
            let label = rec[0] as usize;
            if label >= CLASSES {
                return Err(DataError::Format {
                    path: path.to_path_buf(),
                    reason: format!("record {i} has label {label}"),
                });
            }
            labels.push(label);
            pixels.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    if labels.is_empty() {
        return Err(DataError::InvalidParameter("no CIFAR-10 batch files given".into()));
    }
    let images = Tensor::new(vec![labels.len(), 3, 32, 32], pixels)
        .map_err(|e| DataError::InvalidParameter(e.to_string()))?;
    Dataset::new(name, CLASSES, images, labels)
}

pub fn write_cifar10(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    if dataset.image_shape() != [3, 32, 32] {
        return Err(DataError::InvalidParameter(format!(
            "CIFAR-10 records are 3x32x32, got {:?}",
            dataset.image_shape()
        )));
    }
    let mut out = Vec::with_capacity(dataset.len() * RECORD_LEN);
    for rec in dataset.records() {
        out.push(rec.label as u8);
        out.extend(rec.image.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_decodes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.bin");
        let mut rec = vec![6u8];
        rec.extend((0..PIXELS).map(|i| (i % 256) as u8));
        std::fs::write(&path, &rec).unwrap();
        let ds = load_cifar10(&[&path], "c").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.labels(), &[6]);
        assert_eq!(ds.image_shape(), &[3, 32, 32]);
        let img = ds.record(0).image;
        assert_eq!(img[0], 0.0);
        assert_eq!(img[255], 1.0);
        assert_eq!(img[1024], 0.0);
        assert_eq!(img[PIXELS - 1], f64::from(((PIXELS - 1) % 256) as u8) / 255.0);
    }

    #[test]
    fn multiple_files_concatenate_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for (k, label) in [2u8, 9].into_iter().enumerate() {
            let p = dir.path().join(format!("b{k}.bin"));
            let mut rec = vec![label];
            rec.extend(std::iter::repeat_n(k as u8, PIXELS));
            std::fs::write(&p, rec.repeat(3)).unwrap();
            paths.push(p);
        }
        let ds = load_cifar10(&paths, "c").unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.labels(), &[2, 2, 2, 9, 9, 9]);
        assert_eq!(ds.record(4).image[10], 1.0 / 255.0);
    }

    #[test]
    fn empty_or_ragged_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        std::fs::write(&p, []).unwrap();
        assert!(matches!(load_cifar10(&[&p], "c"), Err(DataError::Format { .. })));
        std::fs::write(&p, vec![0u8; RECORD_LEN + 5]).unwrap();
        assert!(matches!(load_cifar10(&[&p], "c"), Err(DataError::Format { .. })));
    }

    #[test]
    fn write_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        let mut rec = vec![1u8];
        rec.extend((0..PIXELS).map(|i| (i * 7 % 256) as u8));
        std::fs::write(&p, &rec).unwrap();
        let ds = load_cifar10(&[&p], "c").unwrap();
        let q = dir.path().join("w2.bin");
        write_cifar10(&ds, &q).unwrap();
        assert_eq!(std::fs::read(&q).unwrap(), rec);
    }
}
