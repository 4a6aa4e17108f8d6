//! Counter-based seed derivation.
//!
//! Every random stream is keyed on `(master seed, key path)` and never on a
//! shared generator's position, so adding a consumer (telemetry, another
//! probe) cannot shift the draws seen by an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every simulation stream.
pub type SimRng = ChaCha8Rng;

/// Stream purpose tags; part of the key path so streams never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Run = 0x52554e,
    Reports = 0x5245504f,
    Tabulate = 0x544142,
    Probe = 0x50524f42,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a key path.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Seed of run `run_index` within a batch.
pub fn run_seed(master: u64, run_index: u64) -> u64 {
    derive_seed(master, &[Purpose::Run as u64, run_index])
}

/// Generator for the reports of round `round` of the run seeded with `run_seed`.
pub fn round_rng(run_seed: u64, round: u64) -> SimRng {
    rng_from_seed(derive_seed(run_seed, &[Purpose::Reports as u64, round]))
}
