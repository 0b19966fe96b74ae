//! Seed derivation.
//!
//! Every random stream in an experiment is derived from the experiment's
//! `base_seed` by [`split_seed`], a pure function built from the SplitMix64
//! finalizer:
//!
//! ```text
//! h0 = mix(base)
//! h(k+1) = mix(h(k) ^ (part(k) + 1) * 0x9E3779B97F4A7C15)
//! mix(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!          z ^= z >> 27; z *= 0x94D049BB133111EB; z ^ (z >> 31)
//! ```
//!
//! with wrapping 64-bit arithmetic. The seed is then expanded into a ChaCha8
//! stream with `ChaCha8Rng::seed_from_u64`. Streams are domain-separated by a
//! leading tag so that graph draws, reward draws and policy randomness never
//! share a stream.

use rand::SeedableRng;

use crate::TrialRng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream tags.
pub const TAG_GRAPH: u64 = 1;
pub const TAG_TRIAL: u64 = 2;
pub const TAG_REWARDS: u64 = 3;
pub const TAG_POLICY: u64 = 4;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base`.
pub fn split_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |h, &part| {
        mix(h ^ part.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
    })
}

/// Seed of the `graph_index`-th generated environment.
pub fn graph_seed(base: u64, graph_index: u64) -> u64 {
    split_seed(base, &[TAG_GRAPH, graph_index])
}

/// Seed of trial `trial_index` on graph `graph_index`.
pub fn trial_seed(base: u64, graph_index: u64, trial_index: u64) -> u64 {
    split_seed(base, &[TAG_TRIAL, graph_index, trial_index])
}

/// Reward and policy streams of a trial.
pub fn trial_streams(seed: u64) -> (TrialRng, TrialRng) {
    (
        TrialRng::seed_from_u64(split_seed(seed, &[TAG_REWARDS])),
        TrialRng::seed_from_u64(split_seed(seed, &[TAG_POLICY])),
    )
}

pub fn rng_from_seed(seed: u64) -> TrialRng {
    TrialRng::seed_from_u64(seed)
}
