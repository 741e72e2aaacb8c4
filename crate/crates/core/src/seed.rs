//! Deterministic random streams keyed by a seed and a label.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Returns a stream that depends only on `(seed, stream_label)`. Different
/// labels keep instance generation and noise injection decorrelated.
pub fn seeded_rng(seed: u64, stream_label: &str) -> Rng {
    Rng::from_seed(derive_key(seed, stream_label))
}

/// Derives a child seed, e.g. one per generated instance.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let key = derive_key(seed, label);
    u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
}

fn derive_key(seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.finalize().into()
}
