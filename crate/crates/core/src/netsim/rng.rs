//! Counter-based randomness: every draw is a pure function of its key, so
//! replay does not depend on the order in which the event loop asks.

use crate::hash::{sha256, Hash};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Stream {
    Forward = 1,
    Loss = 2,
    Delay = 3,
}

/// Folds words into a single 64-bit seed.
pub(crate) fn mix(words: &[u64]) -> u64 {
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    let digest = sha256(&bytes);
    u64::from_le_bytes(digest.0[..8].try_into().expect("8 bytes"))
}

/// Uniform draw in `[0, 1)` keyed by `(seed, stream, from, to, message, attempt)`.
pub(crate) fn unit(seed: u64, stream: Stream, from: usize, to: usize, msg: &Hash, attempt: u32) -> f64 {
    let mut bytes = Vec::with_capacity(8 * 4 + 32 + 4);
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(&(stream as u64).to_le_bytes());
    bytes.extend_from_slice(&(from as u64).to_le_bytes());
    bytes.extend_from_slice(&(to as u64).to_le_bytes());
    bytes.extend_from_slice(msg.as_bytes());
    bytes.extend_from_slice(&attempt.to_le_bytes());
    let digest = sha256(&bytes);
    let word = u64::from_le_bytes(digest.0[..8].try_into().expect("8 bytes"));
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
