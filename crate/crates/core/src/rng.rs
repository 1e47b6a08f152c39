//! Seeded RNG substreams so every random decision is reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a master seed with a list of tags (class id, sample index, epoch,
/// ...) into one stream seed. Splitmix64 keeps nearby tag tuples unrelated.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t.wrapping_add(0x6a09_e667_f3bc_c909)));
    }
    splitmix64(state)
}

/// Independent ChaCha8 stream for a `(seed, tags)` pair.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tags))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
