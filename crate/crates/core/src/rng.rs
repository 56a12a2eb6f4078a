//! Seeding and Gaussian draws.
//!
//! Every stochastic stage runs on a ChaCha8 stream. Child streams are derived
//! from a root seed by hashing `(root, label...)` with SHA-256 and taking the
//! first eight bytes little-endian, so independent stages never share a
//! stream and adding a new stage does not perturb existing ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a child seed from a root seed and a path of labels.
pub fn child_seed(root: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    for label in labels {
        // Length-prefix each label so ("ab","c") and ("a","bc") differ.
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn child_seed_index(root: u64, label: &str, index: usize) -> u64 {
    child_seed(root, &[label, &index.to_string()])
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}
