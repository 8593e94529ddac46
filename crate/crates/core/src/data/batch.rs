use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded per-epoch shuffling of sample indices into fixed-size batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub seed: u64,
    pub batch_size: usize,
}

impl BatchPlan {
    pub fn new(seed: u64, batch_size: usize) -> Self {
        Self {
            seed,
            batch_size: batch_size.max(1),
        }
    }

    /// Permutation of `0..len` for `epoch`. Each epoch draws from its own
    /// ChaCha stream, so orders are reproducible and independent of history.
    pub fn order(&self, epoch: usize, len: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut rng);
        idx
    }

    /// The epoch order cut into consecutive batches (last one may be short).
    pub fn batches(&self, epoch: usize, len: usize) -> Vec<Vec<usize>> {
        self.order(epoch, len)
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}
