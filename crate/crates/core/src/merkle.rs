//! Binary Merkle trees with inclusion proofs.
//!
//! Leaves are hashed as `H(0x00 || payload)` and internal nodes as
//! `H(0x01 || left || right)`, so a leaf digest can never be replayed as an
//! internal node. A level of odd width pairs its last node with itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{Hash, Hasher, Sha256d};

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("cannot build a Merkle tree over an empty leaf set")]
    EmptyLeafSet,
    #[error("leaf index {index} out of range for {leaf_count} leaves")]
    IndexOutOfRange { index: usize, leaf_count: usize },
}

pub fn leaf_hash(payload: &[u8]) -> Hash {
    leaf_hash_with(&Sha256d, payload)
}

pub fn node_hash(left: &Hash, right: &Hash) -> Hash {
    node_hash_with(&Sha256d, left, right)
}

pub fn leaf_hash_with<H: Hasher + ?Sized>(hasher: &H, payload: &[u8]) -> Hash {
    hasher.digest_parts(&[&[LEAF_TAG], payload])
}

pub fn node_hash_with<H: Hasher + ?Sized>(hasher: &H, left: &Hash, right: &Hash) -> Hash {
    hasher.digest_parts(&[&[NODE_TAG], left.as_bytes(), right.as_bytes()])
}

/// Number of proof steps for a tree with `leaf_count` leaves: `ceil(log2(n))`.
pub fn proof_len(leaf_count: usize) -> usize {
    if leaf_count <= 1 {
        0
    } else {
        (usize::BITS - (leaf_count - 1).leading_zeros()) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleTree {
    levels: Vec<Vec<Hash>>,
}

impl MerkleTree {
    /// Hashes every payload with [`leaf_hash`] and builds the tree above them.
    pub fn build<T: AsRef<[u8]>>(leaves: &[T]) -> Result<MerkleTree, MerkleError> {
        Self::build_with(&Sha256d, leaves)
    }

    pub fn build_with<H, T>(hasher: &H, leaves: &[T]) -> Result<MerkleTree, MerkleError>
    where
        H: Hasher + ?Sized,
        T: AsRef<[u8]>,
    {
        let hashes = leaves
            .iter()
            .map(|leaf| leaf_hash_with(hasher, leaf.as_ref()))
            .collect();
        Self::from_leaf_hashes_with(hasher, hashes)
    }

    /// Builds a tree whose level 0 is taken verbatim. Transaction ids are
    /// already leaf-domain digests, so block trees are built this way.
    pub fn from_leaf_hashes(leaves: Vec<Hash>) -> Result<MerkleTree, MerkleError> {
        Self::from_leaf_hashes_with(&Sha256d, leaves)
    }

    pub fn from_leaf_hashes_with<H: Hasher + ?Sized>(
        hasher: &H,
        leaves: Vec<Hash>,
    ) -> Result<MerkleTree, MerkleError> {
        if leaves.is_empty() {
            return Err(MerkleError::EmptyLeafSet);
        }
        let mut levels = vec![leaves];
        while levels.last().map_or(0, Vec::len) > 1 {
            let below = levels.last().expect("non-empty");
            let above = below
                .chunks(2)
                .map(|pair| node_hash_with(hasher, &pair[0], pair.get(1).unwrap_or(&pair[0])))
                .collect();
            levels.push(above);
        }
        Ok(MerkleTree { levels })
    }

    pub fn root(&self) -> Hash {
        self.levels.last().expect("tree has a root level")[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[0].len()
    }

    pub fn leaves(&self) -> &[Hash] {
        &self.levels[0]
    }

    /// Level 0 holds the leaf hashes; the last level holds the root alone.
    pub fn levels(&self) -> &[Vec<Hash>] {
        &self.levels
    }

    pub fn prove(&self, index: usize) -> Result<MerkleProof, MerkleError> {
        let leaf_count = self.leaf_count();
        if index >= leaf_count {
            return Err(MerkleError::IndexOutOfRange { index, leaf_count });
        }
        let mut steps = Vec::with_capacity(self.levels.len() - 1);
        let mut idx = index;
        for level in &self.levels[..self.levels.len() - 1] {
            let step = if idx.is_multiple_of(2) {
                ProofStep {
                    sibling: *level.get(idx + 1).unwrap_or(&level[idx]),
                    sibling_is_right: true,
                }
            } else {
                ProofStep {
                    sibling: level[idx - 1],
                    sibling_is_right: false,
                }
            };
            steps.push(step);
            idx /= 2;
        }
        Ok(MerkleProof {
            leaf_index: index,
            steps,
        })
    }

    /// Appends one leaf hash, recomputing only the path from the new leaf to
    /// the root. Returns how many level entries were written.
    pub fn push_leaf_hash(&mut self, leaf: Hash) -> usize {
        self.push_leaf_hash_with(&Sha256d, leaf)
    }

    pub fn push_leaf_hash_with<H: Hasher + ?Sized>(&mut self, hasher: &H, leaf: Hash) -> usize {
        self.levels[0].push(leaf);
        let mut written = 1;
        let mut idx = self.levels[0].len() - 1;
        let mut depth = 0;
        while self.levels[depth].len() > 1 {
            let parent_idx = idx / 2;
            let level = &self.levels[depth];
            let left = level[2 * parent_idx];
            let right = *level.get(2 * parent_idx + 1).unwrap_or(&left);
            let parent = node_hash_with(hasher, &left, &right);
            if depth + 1 == self.levels.len() {
                self.levels.push(Vec::new());
            }
            let above = &mut self.levels[depth + 1];
            if parent_idx < above.len() {
                above[parent_idx] = parent;
            } else {
                above.push(parent);
            }
            written += 1;
            idx = parent_idx;
            depth += 1;
        }
        written
    }
}

/// Convenience wrapper for [`MerkleTree::build`].
pub fn build_tree<T: AsRef<[u8]>>(leaves: &[T]) -> Result<MerkleTree, MerkleError> {
    MerkleTree::build(leaves)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    #[serde(rename = "sibling_hex")]
    pub sibling: Hash,
    #[serde(rename = "is_right")]
    pub sibling_is_right: bool,
}

/// Sibling hashes from the leaf up to (not including) the root.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: usize,
    pub steps: Vec<ProofStep>,
}

impl MerkleProof {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Folds `leaf` through the steps and returns the implied root.
    pub fn fold(&self, leaf: &Hash) -> Hash {
        self.fold_with(&Sha256d, leaf)
    }

    pub fn fold_with<H: Hasher + ?Sized>(&self, hasher: &H, leaf: &Hash) -> Hash {
        self.steps.iter().fold(*leaf, |acc, step| {
            if step.sibling_is_right {
                node_hash_with(hasher, &acc, &step.sibling)
            } else {
                node_hash_with(hasher, &step.sibling, &acc)
            }
        })
    }
}

pub fn verify_proof(leaf: &Hash, proof: &MerkleProof, root: &Hash) -> bool {
    verify_proof_with(&Sha256d, leaf, proof, root)
}

pub fn verify_proof_with<H: Hasher + ?Sized>(
    hasher: &H,
    leaf: &Hash,
    proof: &MerkleProof,
    root: &Hash,
) -> bool {
    proof.fold_with(hasher, leaf) == *root
}
