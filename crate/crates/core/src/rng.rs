//! Seed splitting. Every random stream in a run is derived from the single
//! scenario seed plus a label, so adding a consumer never perturbs the
//! draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha20Rng;

pub fn stream(seed: u64, label: &str) -> SimRng {
    let mut hasher = Sha256::new();
    hasher.update(b"kerbwsn-stream");
    hasher.update(seed.to_be_bytes());
    hasher.update(label.as_bytes());
    ChaCha20Rng::from_seed(hasher.finalize().into())
}
