//! Deterministic, cross-platform RNG derivation.
//!
//! Every random decision in the pipeline flows from one 64-bit seed plus a
//! record key (document id, chunk index, epoch, ...). Hashing the key with
//! SHA-256 and seeding a named generator makes outputs independent of worker
//! scheduling and platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a generator from a seed and an arbitrary record key.
pub fn keyed_rng(seed: u64, key_parts: &[&[u8]]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in key_parts {
        // Length-prefix each part so ("ab","c") and ("a","bc") differ.
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    ChaCha8Rng::from_seed(digest.into())
}
