//! Seed discipline.
//!
//! Every experiment owns one master seed. Latent draws, treatments and price
//! perturbations each read from their own ChaCha stream of that seed, so
//! changing the treatment probability never reshuffles the population.
//! Replication seeds are derived with a SplitMix64 finalizer, which is a
//! bijection on `u64`: distinct replication indices can never collide.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent sub-streams of one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Population = 0,
    Treatment = 1,
    Perturbation = 2,
    Integration = 3,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `index` of a run started from `base`.
pub fn replication_seed(base: u64, index: u64) -> u64 {
    mix64(base.wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// Seed for the `attempt`-th resample of a failed replication.
pub fn retry_seed(base: u64, index: u64, attempt: u64) -> u64 {
    if attempt == 0 {
        return replication_seed(base, index);
    }
    mix64(replication_seed(base, index) ^ mix64(attempt.wrapping_mul(GOLDEN) ^ 0xD1B5_4A32_D192_ED03))
}
