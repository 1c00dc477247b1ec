//! Seed derivation.
//!
//! Every random stream in a run is a ChaCha generator keyed by the run seed
//! and a purpose label, so that independent consumers (factor init, splits,
//! mask training, pair seeds) never share a stream and adding a consumer
//! does not perturb the others.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub fn derive_key(seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"fedmmf/v1/");
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_key(seed, label, index))
}
