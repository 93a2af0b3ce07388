//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator (rand_chacha
//! 0.9, counter based) keyed by an integer seed. Independent stages use named
//! streams so that, for instance, changing the bootstrap count never perturbs
//! the train/test split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed` on the default stream.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on the stream identified by `name`.
pub fn stream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Generator for the `index`-th item of a named stream (per tree, per fold).
pub fn substream(seed: u64, name: &str, index: u64) -> Rng {
    stream(mix(seed, index), name)
}

/// Deterministic 64-bit seed derivation (splitmix64 finaliser).
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, "split").random()).collect();
        let mut s = stream(7, "split");
        let b: Vec<u64> = (0..4).map(|_| s.random()).collect();
        let mut t = stream(7, "bootstrap");
        let c: Vec<u64> = (0..4).map(|_| t.random()).collect();
        assert_eq!(a[0], b[0]);
        assert_ne!(b, c);
    }

    #[test]
    fn pinned_first_draw() {
        // Guards against a silent generator change between releases.
        assert_eq!(seeded(42).random::<u64>(), 12578764544318200737);
        assert_eq!(stream(42, "split").random::<u64>(), 1192423028291158005);
        assert_ne!(substream(1, "fit", 0).random::<u64>(), substream(1, "fit", 1).random::<u64>());
    }
}
