//! Deterministic randomness: keyed hashing and per-purpose random streams.
//!
//! Every random quantity in a run is derived from a single root seed. Streams
//! are keyed by a domain tag and an index (usually a validator id), so the
//! draws a validator sees do not depend on the order in which other
//! validators are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

/// Hash a sequence of byte strings. Each part is length-prefixed so that
/// distinct part boundaries never collide.
pub fn keyed_hash(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// Random stream for `(root_seed, tag, index)`.
pub fn stream(root_seed: u64, tag: &str, index: u64) -> Stream {
    let seed = keyed_hash(&[
        b"pocmt-stream",
        &root_seed.to_le_bytes(),
        tag.as_bytes(),
        &index.to_le_bytes(),
    ]);
    ChaCha8Rng::from_seed(seed)
}

/// Map the leading bits of a digest to `[0, 1)`.
///
/// Only the top 53 bits are used: dividing the full 64-bit prefix by 2^64 in
/// f64 can round up to exactly 1.0.
pub fn unit_interval(digest: &[u8; 32]) -> f64 {
    let mut lead = [0u8; 8];
    lead.copy_from_slice(&digest[..8]);
    let x = u64::from_be_bytes(lead) >> 11;
    x as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in `0..n` from a digest. `n` must be non-zero.
pub fn uniform_index(digest: &[u8; 32], n: usize) -> usize {
    debug_assert!(n > 0);
    let idx = (unit_interval(digest) * n as f64) as usize;
    idx.min(n - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = stream(7, "x", 0).random_iter().take(4).collect();
        let b: Vec<u64> = stream(7, "x", 0).random_iter().take(4).collect();
        let c: Vec<u64> = stream(7, "x", 1).random_iter().take(4).collect();
        let d: Vec<u64> = stream(7, "y", 0).random_iter().take(4).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn unit_interval_bounds() {
        assert_eq!(unit_interval(&[0u8; 32]), 0.0);
        let top = unit_interval(&[0xff; 32]);
        assert!(top < 1.0 && top > 0.999_999);
        assert_eq!(uniform_index(&[0xff; 32], 3), 2);
    }

    #[test]
    fn length_prefix_separates_parts() {
        assert_ne!(keyed_hash(&[b"ab", b"c"]), keyed_hash(&[b"a", b"bc"]));
    }
}
