//! Counter-based random substreams.
//!
//! Every stochastic routine takes an explicit `u64` seed. Independent tasks
//! (sample paths, trials, permutations) get their own ChaCha stream selected
//! by `(tag, index)`, so results never depend on scheduling order or thread
//! count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags. Each purpose owns a disjoint range of ChaCha stream ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Prior = 1,
    PathNoise = 2,
    Data = 3,
    Perturb = 4,
    Directions = 5,
    Trial = 6,
    Permutation = 7,
    Fit = 8,
    InitialCondition = 9,
}

/// Generator for task `index` of the given purpose under `seed`.
pub fn substream(seed: u64, tag: Stream, index: u64) -> StreamRng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 48) | index);
    rng
}

/// A derived child seed, for handing to routines that take a plain seed.
pub fn derive_seed(seed: u64, tag: Stream, index: u64) -> u64 {
    substream(seed, tag, index).next_u64()
}
