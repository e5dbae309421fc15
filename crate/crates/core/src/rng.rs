//! Reproducible random streams.
//!
//! Every stochastic component draws from an [`RngState`], a ChaCha8 stream
//! cipher keyed by a 64-bit seed. ChaCha is counter based, so independent
//! substreams are obtained by selecting a different 64-bit stream id under
//! the same key; the output is identical on every platform.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from `(seed, key)`. Does not advance `self`.
    pub fn substream(&self, key: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        // Stream 0 is the parent; keys map to streams 1.. so they never alias it.
        inner.set_stream(key.wrapping_add(1));
        Self {
            seed: self.seed,
            inner,
        }
    }

    /// Substream keyed by a label, e.g. a parameter name. The key is the
    /// first 8 bytes (little endian) of the label's SHA-256.
    pub fn substream_named(&self, label: &str) -> Self {
        let digest = Sha256::digest(label.as_bytes());
        let mut key = [0u8; 8];
        key.copy_from_slice(&digest[..8]);
        self.substream(u64::from_le_bytes(key))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_range(&mut self, lo: u64, hi: u64) -> u64 {
        if hi <= lo {
            return lo;
        }
        self.inner.random_range(lo..=hi)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}
