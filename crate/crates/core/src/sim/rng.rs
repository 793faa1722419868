use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent random stream for a labelled unit of work. The key is a hash
/// of the master seed and the labels, so a stream never depends on how many
/// draws other streams made or in which order they were created.
pub(crate) fn stream(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
