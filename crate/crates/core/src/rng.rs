//! Seeded random streams.
//!
//! Every stochastic path in the crate draws from a [`RandomSource`] so that a
//! run is fully determined by its seed. The generator is ChaCha20 from
//! `rand_chacha`; normals come from `rand_distr`'s ziggurat sampler. The pair
//! is identified by [`GENERATOR`], which reports carry alongside the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;

/// Name and version of the generator, written into every report row.
pub const GENERATOR: &str = "chacha20+ziggurat/v1";

#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha20Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for sub-task `index`, see [`split_seed`].
    pub fn fork(&self, index: u64) -> Self {
        Self::new(split_seed(self.seed, index))
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// `rows × cols` matrix of i.i.d. `N(0, std²)` entries.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| std * self.normal())
    }

    /// Access to the underlying generator for `rand_distr` samplers.
    pub fn rng_mut(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for configuration `index` of a run seeded with `seed`:
/// `seed ⊕ splitmix64(index)`. Mixing the index keeps (seed, index) pairs
/// from colliding the way a raw XOR of two small integers would.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    seed ^ splitmix64(index)
}
