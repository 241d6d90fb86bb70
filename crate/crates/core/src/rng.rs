//! Named random streams derived from one master seed.
//!
//! Every stream shares the ChaCha key derived from the master seed and is
//! separated by its 64-bit stream id, so adding draws to one stream never
//! shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const ENV: &str = "env";
pub const INIT: &str = "init";
pub const EXPLORATION: &str = "exploration";
pub const ENCODER: &str = "encoder";
pub const REPLAY: &str = "replay";
pub const EVAL: &str = "eval";

fn fnv1a(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}

/// A sub-seed for `name`, used where a component wants its own master seed
/// (per-environment streams, per-episode resets).
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    use rand::RngCore;
    stream(seed, name).next_u64()
}
