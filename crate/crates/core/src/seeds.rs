//! Stable derivation of independent random streams from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Sub-seed for `label` under `seed`; stable across platforms and releases.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output has 32 bytes"))
}

pub fn stream(seed: u64, label: &str) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}
