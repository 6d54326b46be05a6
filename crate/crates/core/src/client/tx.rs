//! Transactions, their canonical byte encoding, and lock/unlock checking.
//!
//! Canonical encoding (all integers little-endian):
//!
//! ```text
//! u32 input_count
//!   [32] parent_txid | u32 output_index | u32 witness_len | witness
//! u32 output_count
//!   u64 value | u32 lock_len | lock
//! u32 lock_time
//! u64 fee
//! ```
//!
//! The transaction id is the Merkle leaf hash of that encoding, so a block's
//! Merkle tree is built directly over its transaction ids.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hash::{sha256d, Hash};
use crate::merkle::{leaf_hash, MerkleTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxDecodeError {
    #[error("transaction encoding truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after transaction")]
    TrailingBytes(usize),
    #[error("invalid hex: {0}")]
    Hex(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutPoint {
    pub txid: Hash,
    pub index: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TxInput {
    pub parent_txid: Hash,
    pub output_index: u32,
    pub unlock_witness: Vec<u8>,
}

impl TxInput {
    pub fn outpoint(&self) -> OutPoint {
        OutPoint {
            txid: self.parent_txid,
            index: self.output_index,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TxOutput {
    pub value: u64,
    pub lock_condition: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Transaction {
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
    pub lock_time: u32,
    pub fee: u64,
}

impl Transaction {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_u32(&mut out, self.inputs.len() as u32);
        for input in &self.inputs {
            out.extend_from_slice(input.parent_txid.as_bytes());
            put_u32(&mut out, input.output_index);
            put_bytes(&mut out, &input.unlock_witness);
        }
        put_u32(&mut out, self.outputs.len() as u32);
        for output in &self.outputs {
            out.extend_from_slice(&output.value.to_le_bytes());
            put_bytes(&mut out, &output.lock_condition);
        }
        put_u32(&mut out, self.lock_time);
        out.extend_from_slice(&self.fee.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Transaction, TxDecodeError> {
        let mut r = Reader { bytes, pos: 0 };
        let n_in = r.u32()?;
        let mut inputs = Vec::new();
        for _ in 0..n_in {
            let parent_txid = Hash::from_slice(r.take(32)?).expect("32 bytes");
            let output_index = r.u32()?;
            let unlock_witness = r.var_bytes()?;
            inputs.push(TxInput {
                parent_txid,
                output_index,
                unlock_witness,
            });
        }
        let n_out = r.u32()?;
        let mut outputs = Vec::new();
        for _ in 0..n_out {
            let value = r.u64()?;
            let lock_condition = r.var_bytes()?;
            outputs.push(TxOutput {
                value,
                lock_condition,
            });
        }
        let lock_time = r.u32()?;
        let fee = r.u64()?;
        if r.pos != bytes.len() {
            return Err(TxDecodeError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Transaction {
            inputs,
            outputs,
            lock_time,
            fee,
        })
    }

    pub fn txid(&self) -> Hash {
        leaf_hash(&self.encode())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    pub fn from_hex(s: &str) -> Result<Transaction, TxDecodeError> {
        let bytes = hex::decode(s).map_err(|e| TxDecodeError::Hex(e.to_string()))?;
        Transaction::decode(&bytes)
    }
}

impl Serialize for Transaction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Transaction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Transaction::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Merkle tree over a block's transaction ids.
pub fn block_tree(txs: &[Transaction]) -> Option<MerkleTree> {
    MerkleTree::from_leaf_hashes(txs.iter().map(Transaction::txid).collect()).ok()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TxDecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or(TxDecodeError::Truncated(self.pos))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, TxDecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TxDecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn var_bytes(&mut self) -> Result<Vec<u8>, TxDecodeError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
}

/// Decides whether an unlock witness satisfies an output's lock condition.
pub trait LockChecker {
    fn check(&self, lock_condition: &[u8], unlock_witness: &[u8]) -> bool;
}

/// Toy scheme: the lock is `sha256d(secret)` and the witness is the secret.
#[derive(Clone, Copy, Debug, Default)]
pub struct HashLock;

impl HashLock {
    pub fn lock_for(secret: &[u8]) -> Vec<u8> {
        sha256d(secret).0.to_vec()
    }
}

impl LockChecker for HashLock {
    fn check(&self, lock_condition: &[u8], unlock_witness: &[u8]) -> bool {
        sha256d(unlock_witness).as_bytes().as_slice() == lock_condition
    }
}

impl<F: Fn(&[u8], &[u8]) -> bool> LockChecker for F {
    fn check(&self, lock_condition: &[u8], unlock_witness: &[u8]) -> bool {
        self(lock_condition, unlock_witness)
    }
}
