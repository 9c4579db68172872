//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed derived from the
//! master seed and a path of integers (purpose, ids, indices). Two different
//! paths never share a generator, so runs can execute in any order or in
//! parallel without changing their output.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// What a stream is used for. Part of the derivation path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Departure = 1,
    Return = 2,
    Calibration = 3,
    Bootstrap = 4,
    Run = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `master` with SplitMix64 finalization at every step.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &part| splitmix64(acc ^ splitmix64(part)))
}

/// Seed of the `seed_index`-th replicate at the `point_index`-th grid point.
///
/// A single simulation is the replicate `(0, 0)` of a one-point sweep, so
/// both paths produce the same run for the same master seed.
pub fn run_seed(master: u64, point_index: u64, seed_index: u64) -> u64 {
    derive_seed(master, &[Purpose::Run as u64, point_index, seed_index])
}

/// Master seed for the stationary-profile calibration at a grid point.
pub fn calibration_seed(master: u64, point_index: u64) -> u64 {
    derive_seed(master, &[Purpose::Calibration as u64, point_index])
}

#[derive(Clone, Debug)]
pub struct Stream(ChaCha8Rng);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn derived(master: u64, path: &[u64]) -> Self {
        Self::new(derive_seed(master, path))
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential waiting time with the given rate. A zero rate never fires.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        -libm::log(1.0 - self.uniform()) / rate
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}
