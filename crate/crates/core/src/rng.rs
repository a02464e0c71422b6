//! Seeded, counter-based randomness.
//!
//! Every random draw in a run comes from a [`SeededRng`] keyed by
//! `(seed, stream)`. Streams are derived by hashing a path of tags such as
//! `(trial, site, purpose)`, so two components never share a stream unless
//! they ask for the same path.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream-derivation purposes. Values are part of the reproducibility
/// contract; do not renumber.
pub mod purpose {
    pub const SITE: u64 = 1;
    pub const COORDINATOR: u64 = 2;
    pub const TRIAL: u64 = 3;
    pub const SUBSAMPLE: u64 = 4;
    pub const REPETITION: u64 = 5;
    pub const INSTANCE: u64 = 6;
    pub const LEVEL: u64 = 7;
    pub const PUBLIC: u64 = 8;
    pub const ROUND: u64 = 9;
    pub const GENERATOR: u64 = 10;
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds a tag path into one 64-bit key.
pub fn mix(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh, independent stream under the same seed. Does not consume
    /// draws from `self`.
    pub fn derive(&self, tags: &[u64]) -> SeededRng {
        SeededRng::new(self.seed, mix(self.stream, tags))
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            self.inner.random::<f64>() < p
        }
    }

    /// Uniform on `{1, ..., upper}`.
    pub fn uniform_1_to(&mut self, upper: u64) -> u64 {
        debug_assert!(upper >= 1);
        self.inner.random_range(1..=upper)
    }

    /// Uniform on `[0, upper)`.
    pub fn uniform_f64(&mut self, upper: f64) -> f64 {
        self.inner.random::<f64>() * upper
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Public randomness shared by all parties: stateless hash-based coins that
/// any site can evaluate locally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicCoins {
    key: u64,
}

impl PublicCoins {
    pub fn new(key: u64) -> Self {
        Self { key }
    }

    pub fn from_rng(rng: &SeededRng, tags: &[u64]) -> Self {
        Self::new(mix(rng.seed() ^ rng.stream().rotate_left(17), tags))
    }

    pub fn word(&self, a: u64, b: u64) -> u64 {
        splitmix64(splitmix64(self.key ^ splitmix64(a)) ^ b)
    }

    /// Fair bit for `(a, b)`.
    pub fn bit(&self, a: u64, b: u64) -> bool {
        self.word(a, b) >> 63 == 1
    }

    /// Uniform on `[0, 1)` for `(a, b)`.
    pub fn unit(&self, a: u64, b: u64) -> f64 {
        (self.word(a, b) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
