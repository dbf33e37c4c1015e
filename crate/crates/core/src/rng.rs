//! Seeded, splittable random streams.
//!
//! Every random draw in the crate goes through an [`RngStream`]. Streams are
//! ChaCha8 generators, so a given seed yields the same sequence on every
//! platform. Child streams are derived from a parent's seed and a label, never
//! from the parent's consumption state, so adding draws to one stream does not
//! perturb its siblings.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child stream identified by `label`.
    pub fn fork(&self, label: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(label.wrapping_add(1))))
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal(&mut self, sigma: f64) -> f64 {
        sigma * self.standard_normal()
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random::<bool>()
    }
}

impl RngCore for RngStream {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn forks_ignore_parent_consumption() {
        let a = RngStream::new(7);
        let mut b = RngStream::new(7);
        b.uniform();
        assert_eq!(a.fork(3).next_u64(), b.fork(3).next_u64());
        assert_ne!(a.fork(3).next_u64(), a.fork(4).next_u64());
    }

    #[test]
    fn known_first_draws_are_stable() {
        // Pinned so a dependency bump that changes the stream is noticed.
        let mut r = RngStream::new(0);
        assert_eq!(r.next_u64(), 13080132717333068652);
    }
}
