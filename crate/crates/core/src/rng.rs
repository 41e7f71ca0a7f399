//! Seed derivation.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose seed is
//! `SHA-256(master_le || tag || index_le)[..32]`. Streams are addressed by a
//! purpose tag (`"sample"`, `"init"`, `"shuffle"`, `"bench-noise"`, ...) and an
//! index, so work items can be generated in any order or in parallel and still
//! draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, tag: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    seed
}

/// A reproducible generator for `(master, tag, index)`.
pub fn stream(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(master, tag, index))
}

/// Derive a child master seed, for handing a whole subsystem its own seed.
pub fn sub_seed(master: u64, tag: &str, index: u64) -> u64 {
    let s = derive_seed(master, tag, index);
    u64::from_le_bytes(s[..8].try_into().expect("8 bytes"))
}
