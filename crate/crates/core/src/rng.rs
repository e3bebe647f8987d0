//! Deterministic, named random streams.
//!
//! Every stream is a ChaCha20 generator keyed by SHA-256 over the root seed
//! and the length-prefixed path of labels leading to it. Two streams share a
//! key only if they share the seed and the full label path, so independent
//! operations never perturb each other's draws.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    path: Vec<u8>,
    stream: u64,
    inner: ChaCha20Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::keyed(seed, Vec::new())
    }

    fn keyed(seed: u64, path: Vec<u8>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"aucal.rng.v1");
        hasher.update(seed.to_le_bytes());
        hasher.update(&path);
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        let mut id = [0u8; 8];
        id.copy_from_slice(&key[..8]);
        Self {
            seed,
            path,
            stream: u64::from_le_bytes(id),
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    /// Independent child stream. Does not advance `self`.
    pub fn child(&self, label: &str) -> Rng {
        let mut path = self.path.clone();
        path.extend_from_slice(&(label.len() as u64).to_le_bytes());
        path.extend_from_slice(label.as_bytes());
        Self::keyed(self.seed, path)
    }

    pub fn child_indexed(&self, label: &str, index: u64) -> Rng {
        self.child(&format!("{label}#{index}"))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Identifier of this stream, derived from its key.
    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
