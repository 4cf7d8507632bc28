//! Seed derivation.
//!
//! Every stochastic task owns a ChaCha8 generator keyed by the run's master
//! seed and positioned on its own stream. The stream id of a task is the
//! SplitMix64 fold of its path, e.g. `[SWEEP, point, repeat]`, so tasks can
//! run in any order or in parallel and still draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags of the top-level task families.
pub mod tag {
    pub const TRIAL: u64 = 1;
    pub const SWEEP: u64 = 2;
    pub const CURVE: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
    pub const BME: u64 = 5;
    pub const MLE_STARTS: u64 = 6;
    pub const STABILIZATION: u64 = 7;
    pub const KS: u64 = 8;
    pub const SIMULATE: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for a task path.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter().fold(0u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Generator for the task at `path` under `master`.
pub fn task_rng(master: u64, path: &[u64]) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id(path));
    rng
}

/// Child seed for a sub-task that itself derives streams.
pub fn child_seed(master: u64, path: &[u64]) -> u64 {
    splitmix64(master ^ stream_id(path).rotate_left(17))
}
