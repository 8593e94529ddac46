use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::engine::Tensor;

/// Parameters of a Gaussian blob dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

/// Unit-variance Gaussian clusters, one per class.
///
/// Class `k` is centred at `separation / sqrt(2) * e_k`, so every pair of
/// centres is exactly `separation` apart. Samples are emitted class by class
/// in label order. Requires `dim >= classes`.
pub fn synthetic_blobs(spec: &BlobSpec) -> Result<Dataset, DataError> {
    let BlobSpec {
        classes,
        per_class,
        dim,
        separation,
        seed,
    } = *spec;
    if classes < 2 || per_class == 0 {
        return Err(DataError::InvalidParameter(
            "need at least 2 classes and 1 sample per class".into(),
        ));
    }
    if dim < classes {
        return Err(DataError::InvalidParameter(format!(
            "dim {dim} must be at least the class count {classes}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(DataError::InvalidParameter(format!(
            "separation must be finite and non-negative, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation / std::f64::consts::SQRT_2;
    let t = classes * per_class;
    let mut data = Vec::with_capacity(t * dim);
    let mut labels = Vec::with_capacity(t);
    for k in 0..classes {
        for _ in 0..per_class {
            for d in 0..dim {
                let noise: f64 = StandardNormal.sample(&mut rng);
                data.push(if d == k { offset + noise } else { noise });
            }
            labels.push(k);
        }
    }
    let images = Tensor::new(vec![t, dim], data).expect("sized above");
    Dataset::new(format!("blobs-c{classes}-s{separation}"), classes, images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(separation: f64, seed: u64) -> BlobSpec {
        BlobSpec {
            classes: 3,
            per_class: 200,
            dim: 4,
            separation,
            seed,
        }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(synthetic_blobs(&spec(6.0, 5)).unwrap(), synthetic_blobs(&spec(6.0, 5)).unwrap());
        assert_ne!(synthetic_blobs(&spec(6.0, 5)).unwrap(), synthetic_blobs(&spec(6.0, 6)).unwrap());
    }

    #[test]
    fn class_means_sit_near_centres() {
        let ds = synthetic_blobs(&spec(6.0, 1)).unwrap();
        let offset = 6.0 / 2f64.sqrt();
        for k in 0..3 {
            let rows: Vec<_> = ds.records().filter(|r| r.label == k).collect();
            let mean_k = rows.iter().map(|r| r.image[k]).sum::<f64>() / rows.len() as f64;
            assert!((mean_k - offset).abs() < 0.3, "class {k}: {mean_k}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(synthetic_blobs(&spec(-1.0, 0)).is_err());
        assert!(synthetic_blobs(&BlobSpec { dim: 2, ..spec(1.0, 0) }).is_err());
    }
}
