//! Seedable, splittable random streams.
//!
//! A [`RandomStream`] carries a 256-bit key. Child streams are derived by
//! hashing the parent key together with a label (and optionally an index),
//! so derivation never consumes state from the parent and two children with
//! different labels are independent ChaCha streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct RandomStream {
    key: [u8; 32],
    rng: ChaCha20Rng,
}

impl RandomStream {
    /// Root stream for a 64-bit master seed.
    pub fn from_seed(seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"pocmab/root");
        hasher.update(seed.to_le_bytes());
        Self::from_key(hasher.finalize().into())
    }

    fn from_key(key: [u8; 32]) -> Self {
        Self {
            key,
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    /// Independent child stream identified by `label`.
    pub fn substream(&self, label: &str) -> Self {
        self.derive(label, None)
    }

    /// Independent child stream identified by `(label, index)`.
    pub fn indexed(&self, label: &str, index: u64) -> Self {
        self.derive(label, Some(index))
    }

    fn derive(&self, label: &str, index: Option<u64>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        match index {
            Some(i) => {
                hasher.update([1u8]);
                hasher.update(i.to_le_bytes());
            }
            None => hasher.update([0u8]),
        }
        Self::from_key(hasher.finalize().into())
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        use rand::Rng;
        self.rng.random_range(0..n)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
