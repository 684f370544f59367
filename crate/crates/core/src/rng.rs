//! Derived random streams.
//!
//! Every random decision is drawn from a ChaCha stream keyed by
//! `(seed, domain)` and selected by a per-item stream number, so a scene's
//! draws depend only on the run seed and the scene's own index or id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Stream domains keep the draws of different pipeline stages independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    ScenePlan = 1,
    Background = 2,
    Caption = 3,
    NegativeSampling = 4,
}

pub fn derive_rng(seed: u64, domain: Domain, stream: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Stable stream number for a textual identifier.
pub fn stream_for_id(id: &str) -> u64 {
    let digest = Sha256::digest(id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
