//! Seed derivation for independent, order-free RNG substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Mixes a base seed, a string tag (a video id, a model name) and an index
/// into one seed. Equal inputs give equal seeds on every platform.
pub fn substream_seed(base: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ fnv1a(tag.as_bytes())).wrapping_add(index))
}

pub fn substream(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(base, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_inputs_distinct_seeds() {
        let a = substream_seed(1, "video_a", 0);
        assert_eq!(a, substream_seed(1, "video_a", 0));
        assert_ne!(a, substream_seed(1, "video_a", 1));
        assert_ne!(a, substream_seed(1, "video_b", 0));
        assert_ne!(a, substream_seed(2, "video_a", 0));
    }
}
