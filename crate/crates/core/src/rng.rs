//! Seed derivation for independent, reproducible random streams.
//!
//! Every random draw in the engine comes from a stream keyed by the top-level
//! seed plus a path of labels and indices (module, purpose, trial number, ...).
//! The key is hashed with SHA-256 and the digest seeds a ChaCha8 generator, so
//! a stream depends only on its key and never on scheduling or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A hierarchical stream key.
#[derive(Debug, Clone)]
pub struct StreamKey {
    hasher: Sha256,
}

impl StreamKey {
    pub fn new(seed: u64, domain: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"distinct/stream/v1");
        hasher.update(seed.to_le_bytes());
        let mut key = Self { hasher };
        key.push_label(domain);
        key
    }

    fn push_label(&mut self, label: &str) {
        self.hasher.update([b'L']);
        self.hasher.update((label.len() as u64).to_le_bytes());
        self.hasher.update(label.as_bytes());
    }

    pub fn label(mut self, label: &str) -> Self {
        self.push_label(label);
        self
    }

    pub fn index(mut self, index: u64) -> Self {
        self.hasher.update([b'I']);
        self.hasher.update(index.to_le_bytes());
        self
    }

    fn digest(&self) -> [u8; 32] {
        let out = self.hasher.clone().finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&out);
        bytes
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.digest())
    }

    /// A derived 64-bit seed, for handing to APIs that take a plain seed.
    pub fn seed(&self) -> u64 {
        let d = self.digest();
        u64::from_le_bytes([d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7]])
    }
}

/// In-place partial Fisher-Yates: after the call, `items[..k]` is a uniform
/// random k-subset of the input in random order.
///
/// Draws are made on `u64` ranges so the sequence is identical on 32- and
/// 64-bit targets.
pub fn partial_shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T], k: usize) {
    let n = items.len();
    for i in 0..k.min(n.saturating_sub(1)) {
        let j = rng.random_range(i as u64..n as u64) as usize;
        items.swap(i, j);
    }
}

pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    let n = items.len();
    partial_shuffle(rng, items, n);
}
