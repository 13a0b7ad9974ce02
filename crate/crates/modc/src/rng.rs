//! Deterministic derivation of per-task random streams.
//!
//! Every unit of parallel work seeds its own generator from the master seed
//! plus stable context strings (problem id, sample index, policy label), so
//! results are independent of scheduling order and worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from a master seed and ordered context parts.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for part in parts {
        // Length prefix keeps ("ab","c") distinct from ("a","bc").
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// A fresh generator for the derived stream.
pub fn stream(master: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}
