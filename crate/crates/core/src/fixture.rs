//! Deterministic test chains: real proof-of-work against an easy target,
//! seeded transactions, and a point-of-sale bundle in which one payment
//! spends outputs of two earlier confirmed transactions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{block_tree, HashLock, ParentProof, ProofBundle, Transaction, TxInput, TxOutput};
use crate::hash::{sha256, Hash};
use crate::headers::{decode_compact, encode_compact, BlockHeader, ChainParams, HeaderError, Target};

/// About one hash in 4096 meets this target.
pub const DEFAULT_FIXTURE_BITS: u32 = 0x1f0f_ffff;
pub const DEFAULT_MAX_ITERATIONS: u64 = 1 << 24;
pub const GENESIS_TIME: u32 = 1_231_006_505;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FixtureError {
    #[error("a fixture needs at least one block")]
    NoBlocks,
    #[error("txs_per_block must be at least 1")]
    NoTransactions,
    #[error("a fixture needs at least two transactions for the point-of-sale bundle")]
    TooFewTransactions,
    #[error("mining header {height} gave up after {iterations} nonces")]
    MiningExhausted { height: usize, iterations: u64 },
    #[error(transparent)]
    Header(#[from] HeaderError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixtureSpec {
    pub n_blocks: usize,
    pub txs_per_block: usize,
    pub target: Target,
    pub seed: u64,
    /// Nonces tried per header before giving up.
    pub max_iterations: u64,
}

impl FixtureSpec {
    pub fn new(n_blocks: usize, txs_per_block: usize, seed: u64) -> FixtureSpec {
        FixtureSpec {
            n_blocks,
            txs_per_block,
            target: decode_compact(DEFAULT_FIXTURE_BITS).expect("valid compact"),
            seed,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// On-disk chain: the network target plus 80-byte headers, all hex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainFile {
    pub network_target_hex: String,
    pub headers: Vec<BlockHeader>,
}

impl ChainFile {
    pub fn params(&self) -> Result<ChainParams, HeaderError> {
        Ok(ChainParams::new(Target::from_be_hex(&self.network_target_hex)?))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxProof {
    pub txid: Hash,
    pub block_index: usize,
    pub proof: crate::merkle::MerkleProof,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub params: ChainParams,
    pub headers: Vec<BlockHeader>,
    pub blocks: Vec<Vec<Transaction>>,
    pub bundle: ProofBundle,
}

impl Fixture {
    pub fn chain_file(&self) -> ChainFile {
        ChainFile {
            network_target_hex: self.params.target.to_be_hex(),
            headers: self.headers.clone(),
        }
    }

    pub fn prove(&self, block_index: usize, tx_index: usize) -> Option<ParentProof> {
        let proof = block_tree(&self.blocks[block_index])?.prove(tx_index).ok()?;
        Some(ParentProof { proof, block_index })
    }

    pub fn all_proofs(&self) -> Vec<TxProof> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(b, txs)| {
                let tree = block_tree(txs).expect("blocks are non-empty");
                txs.iter().enumerate().map(move |(i, tx)| TxProof {
                    txid: tx.txid(),
                    block_index: b,
                    proof: tree.prove(i).expect("index in range"),
                })
            })
            .collect()
    }
}

/// Secret unlocking output 0 of transaction `tx` in block `block`.
pub fn fixture_secret(seed: u64, block: usize, tx: usize) -> Vec<u8> {
    let mut bytes = b"fixture".to_vec();
    for w in [seed, block as u64, tx as u64] {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    sha256(&bytes).0.to_vec()
}

fn fixture_tx(seed: u64, block: usize, tx: usize) -> Transaction {
    Transaction {
        inputs: Vec::new(),
        outputs: vec![TxOutput {
            value: 50_000 + tx as u64,
            lock_condition: HashLock::lock_for(&fixture_secret(seed, block, tx)),
        }],
        lock_time: block as u32,
        fee: 0,
    }
}

/// Searches nonces upward from zero until the header meets `target`.
pub fn mine(mut header: BlockHeader, target: &Target, max_iterations: u64) -> Option<BlockHeader> {
    let limit = max_iterations.min(1 << 32);
    for nonce in 0..limit {
        header.nonce = nonce as u32;
        if target.is_met_by(&header.hash()) {
            return Some(header);
        }
    }
    None
}

pub fn build_fixture(spec: &FixtureSpec) -> Result<Fixture, FixtureError> {
    if spec.n_blocks == 0 {
        return Err(FixtureError::NoBlocks);
    }
    if spec.txs_per_block == 0 {
        return Err(FixtureError::NoTransactions);
    }
    if spec.n_blocks * spec.txs_per_block < 2 {
        return Err(FixtureError::TooFewTransactions);
    }
    let params = ChainParams::new(spec.target.clone());
    let blocks: Vec<Vec<Transaction>> = (0..spec.n_blocks)
        .map(|b| (0..spec.txs_per_block).map(|t| fixture_tx(spec.seed, b, t)).collect())
        .collect();

    let mut headers: Vec<BlockHeader> = Vec::with_capacity(spec.n_blocks);
    for (height, txs) in blocks.iter().enumerate() {
        let expected = params.expected_target(&headers);
        let template = BlockHeader {
            version: 1,
            prev_hash: headers.last().map_or(Hash::ZERO, BlockHeader::hash),
            merkle_root: block_tree(txs).expect("non-empty block").root(),
            timestamp: GENESIS_TIME + 600 * height as u32,
            n_bits: encode_compact(&expected),
            nonce: 0,
        };
        let mined = mine(template, &expected, spec.max_iterations).ok_or(
            FixtureError::MiningExhausted {
                height,
                iterations: spec.max_iterations,
            },
        )?;
        headers.push(mined);
    }

    // Tx1 is the first transaction after genesis, Tx2 the last of the chain.
    let positions: Vec<(usize, usize)> = (1..spec.n_blocks)
        .chain([0])
        .flat_map(|b| (0..spec.txs_per_block).map(move |t| (b, t)))
        .collect();
    let (b1, t1) = positions[0];
    let (b2, t2) = *positions.last().expect("at least two positions");
    let tx1 = blocks[b1][t1].clone();
    let tx2 = blocks[b2][t2].clone();
    let payment = Transaction {
        inputs: vec![
            TxInput {
                parent_txid: tx1.txid(),
                output_index: 0,
                unlock_witness: fixture_secret(spec.seed, b1, t1),
            },
            TxInput {
                parent_txid: tx2.txid(),
                output_index: 0,
                unlock_witness: fixture_secret(spec.seed, b2, t2),
            },
        ],
        outputs: vec![TxOutput {
            value: tx1.outputs[0].value + tx2.outputs[0].value - 1_000,
            lock_condition: HashLock::lock_for(b"merchant"),
        }],
        lock_time: 0,
        fee: 1_000,
    };

    let mut fixture = Fixture {
        params,
        headers,
        blocks,
        bundle: ProofBundle {
            payment,
            parents: vec![tx1, tx2],
            parent_proofs: Vec::new(),
        },
    };
    fixture.bundle.parent_proofs = vec![
        fixture.prove(b1, t1).expect("in range"),
        fixture.prove(b2, t2).expect("in range"),
    ];
    Ok(fixture)
}
