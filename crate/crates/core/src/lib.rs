//! Simplified payment verification toolkit: Merkle proofs, header chains,
//! a light-client state machine, security calculators and a relay simulator.

pub mod client;
pub mod fixture;
pub mod hash;
pub mod headers;
pub mod merkle;
pub mod netsim;
pub mod seccalc;

pub use hash::{Hash, Hasher, Sha256d};
