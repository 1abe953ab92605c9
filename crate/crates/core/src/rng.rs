//! Seed plumbing: every random choice in the crate flows from one 64-bit
//! master seed through named sub-streams, so the split, the initializer, and
//! the sampler can be varied independently without perturbing each other.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a deterministic RNG for a named sub-stream of `seed`.
///
/// The label is folded into the ChaCha stream id (FNV-1a), so streams with
/// different labels are independent even under the same master seed.
pub fn sub_rng(seed: u64, label: &str) -> ChaCha8Rng {
    sub_rng_indexed(seed, label, 0)
}

/// Like [`sub_rng`], with an index folded into the stream id; gives each
/// worker or user its own independent stream under one seed.
pub fn sub_rng_indexed(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    for b in index.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_label_same_stream() {
        let a: Vec<u64> = sub_rng(7, "split").random_iter().take(8).collect();
        let b: Vec<u64> = sub_rng(7, "split").random_iter().take(8).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_are_independent() {
        let a: u64 = sub_rng(7, "split").random();
        let b: u64 = sub_rng(7, "init").random();
        assert_ne!(a, b);
    }
}
