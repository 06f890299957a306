//! One named, splittable deterministic generator for the whole artifact.
//!
//! Every consumer derives its own ChaCha8 stream from the master seed and a
//! purpose label, so adding a new consumer never perturbs existing streams.
//! The algorithm name recorded in metrics headers is [`ALGORITHM`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name written into every metrics file header.
pub const ALGORITHM: &str = "chacha8/splitmix-derive";

/// Splittable source of deterministic random streams.
#[derive(Debug, Clone, Copy)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derive an independent stream for `label`.
    pub fn derive(&self, label: &str) -> ChaCha8Rng {
        self.derive_indexed(label, 0)
    }

    /// Derive an independent stream for `(label, index)`; used for
    /// per-epoch permutations and the like.
    pub fn derive_indexed(&self, label: &str, index: u64) -> ChaCha8Rng {
        let mut state = self
            .master
            .wrapping_add(fnv1a64(label.as_bytes()))
            .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut seed = [0u8; 32];
        for word in seed.chunks_exact_mut(8) {
            word.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform sample in [-bound, bound).
pub fn uniform_symmetric(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    (2.0 * rng.random::<f64>() - 1.0) * bound
}

/// Standard normal via Box-Muller; two uniforms per sample keeps the
/// stream layout independent of any rejection loop.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}
