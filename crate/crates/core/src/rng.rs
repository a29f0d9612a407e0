//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by
//! `(master_seed, tag, index)`. The 32-byte ChaCha key is
//!
//! ```text
//! master_seed (u64 LE) || tag (u64 LE) || index (u64 LE) || sub (u64 LE)
//! ```
//!
//! where `sub` is zero except for per-node streams inside a tree.
//!
//! with the stream position starting at zero (`rand_chacha::ChaCha8Rng::from_seed`).
//! Derived seeds ([`SeedSpec::child`]) are the first `u64` of the stream.
//!
//! Uniforms on the open interval (0, 1) are `((w >> 11) + 0.5) * 2^-53` for one
//! 64-bit word `w`; standard normals are the inverse normal CDF of one such
//! uniform. Nothing here depends on platform word size or float environment.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha8Rng;

/// Stream tags. Part of the reproducibility contract; never renumber.
pub mod tag {
    pub const DATA: u64 = 1;
    pub const TREE: u64 = 2;
    pub const BENCH_TRAIN: u64 = 3;
    pub const BENCH_TEST: u64 = 4;
    pub const BENCH_FOREST: u64 = 5;
    /// Per-node feature sampling; `index` is the tree, `sub` the node's
    /// heap position (root 1, children 2k and 2k+1).
    pub const NODE: u64 = 6;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedSpec(pub u64);

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec(master_seed)
    }

    pub fn master(self) -> u64 {
        self.0
    }

    pub fn stream(self, tag: u64, index: u64) -> Stream {
        self.substream(tag, index, 0)
    }

    pub fn substream(self, tag: u64, index: u64, sub: u64) -> Stream {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.0.to_le_bytes());
        key[8..16].copy_from_slice(&tag.to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        key[24..32].copy_from_slice(&sub.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    pub fn child(self, tag: u64, index: u64) -> SeedSpec {
        SeedSpec(self.stream(tag, index).next_u64())
    }
}

impl From<u64> for SeedSpec {
    fn from(v: u64) -> Self {
        SeedSpec(v)
    }
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: RngCore>(rng: &mut R) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (((rng.next_u64() >> 11) as f64) + 0.5) * SCALE
}

/// Uniform draw on the open interval (lo, hi); endpoint hits caused by
/// rounding are redrawn.
pub fn open_uniform<R: RngCore>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let v = lo + (hi - lo) * open_unit(rng);
        if v > lo && v < hi {
            return v;
        }
    }
}

pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    inverse_normal_cdf(open_unit(rng))
}

/// Fair coin: true with probability 1/2, from one uniform draw.
pub fn bernoulli_half<R: RngCore>(rng: &mut R) -> bool {
    open_unit(rng) >= 0.5
}

pub fn inverse_normal_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = SeedSpec(42);
        let (mut r1, mut r2) = (s.stream(1, 0), s.stream(1, 0));
        let a: Vec<u64> = (0..4).map(|_| r1.next_u64()).collect();
        let b: Vec<u64> = (0..4).map(|_| r2.next_u64()).collect();
        assert_eq!(a, b);
        assert_ne!(s.stream(1, 1).next_u64(), s.stream(1, 0).next_u64());
        assert_ne!(s.stream(2, 0).next_u64(), s.stream(1, 0).next_u64());
        assert_ne!(s.child(3, 0), s.child(3, 1));
    }

    #[test]
    fn open_unit_never_hits_endpoints() {
        let mut r = SeedSpec(0).stream(0, 0);
        for _ in 0..10_000 {
            let u = open_unit(&mut r);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn inverse_cdf_known_points() {
        assert!(inverse_normal_cdf(0.5).abs() < 1e-15);
        assert!((inverse_normal_cdf(0.975) - 1.959963984540054).abs() < 1e-9);
        assert!((inverse_normal_cdf(0.025) + 1.959963984540054).abs() < 1e-9);
    }
}
