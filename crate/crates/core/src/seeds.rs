//! Seed derivation.
//!
//! A root seed expands into independent named streams (`"sampling"`,
//! `"attack-train"`, `"attack-test"`, `"model-init"`, `"shuffle"`, ...),
//! optionally indexed by run, fold, classifier and so on. Streams are
//! computed with a counter-style hash, so adding a new consumer never
//! perturbs the values another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of stream `name` at position `indices` under `root`.
pub fn derive(root: u64, name: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(root ^ fnv1a(name.as_bytes()));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    h
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(root: u64, name: &str, indices: &[u64]) -> Rng {
    rng(derive(root, name, indices))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        let a = derive(7, "sampling", &[0]);
        assert_eq!(a, derive(7, "sampling", &[0]));
        assert_ne!(a, derive(7, "sampling", &[1]));
        assert_ne!(a, derive(7, "shuffle", &[0]));
        assert_ne!(a, derive(8, "sampling", &[0]));
        assert_ne!(derive(7, "x", &[0, 1]), derive(7, "x", &[1, 0]));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
