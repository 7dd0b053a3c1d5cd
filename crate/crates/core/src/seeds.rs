//! Seed derivation. Every random stream in a run is keyed by the root seed and
//! a fixed path (update index, episode index, ...), so results do not depend on
//! the order in which independent pieces are computed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_at(root: u64, path: &[u64]) -> RunRng {
    rng(derive(root, path))
}
