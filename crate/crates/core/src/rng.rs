//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha20 (20 rounds, RFC 7539
//! block function as implemented by `rand_chacha`). A stream is identified by
//! `(seed, stream_id)`: the 32-byte key is the seed as little-endian `u64` in
//! bytes 0..8 followed by zeros, and `stream_id` selects the ChaCha stream.
//! Uniforms are `(next_u64 >> 11) * 2^-53` and normals use the Box-Muller
//! cosine branch, so both are straightforward to reproduce elsewhere.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream ids used across the crate. Kept distinct so that, e.g., weight
/// initialisation never shares draws with data noise.
pub mod streams {
    pub const WEIGHTS: u64 = 1;
    pub const CIRCUIT: u64 = 2;
    pub const SERIES: u64 = 16;
    pub const SHUFFLE: u64 = 1 << 32;
}

#[derive(Clone, Debug)]
pub struct SeedStream {
    rng: ChaCha20Rng,
}

impl SeedStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_with(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.normal()
    }

    /// Uniform integer in [0, n) by rejection (no modulo bias).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i as u64 + 1) as usize;
            idx.swap(i, j);
        }
        idx
    }
}
