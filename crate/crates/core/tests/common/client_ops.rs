//! Randomized client sessions checked against invariants after every step.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spv_core::client::{
    block_tree, init_client, ClientConfig, ClientState, OrphanConfig, Transaction, TxInput, TxOutput,
};
use spv_core::fixture::mine;
use spv_core::hash::Hash;
use spv_core::headers::{decode_compact, encode_compact, BlockHeader, ChainParams, Target};
use spv_core::merkle::MerkleProof;

/// About one hash in two meets this target.
pub const EASY_BITS: u32 = 0x207f_ffff;

#[derive(Clone, Debug)]
struct Tracked {
    txid: Hash,
    proof: MerkleProof,
    block_index: usize,
    block_hash: Hash,
}

pub struct Session {
    rng: ChaCha8Rng,
    target: Target,
    state: ClientState,
    bodies: BTreeMap<Hash, Vec<Transaction>>,
    tracked: Vec<Tracked>,
    salt: u64,
    pub reorgs: usize,
    pub rejected_branches: usize,
    now: u64,
}

fn block_txs(salt: u64, count: usize) -> Vec<Transaction> {
    (0..count)
        .map(|j| Transaction {
            inputs: Vec::new(),
            outputs: vec![TxOutput { value: j as u64, lock_condition: salt.to_le_bytes().to_vec() }],
            lock_time: j as u32,
            fee: 0,
        })
        .collect()
}

impl Session {
    pub fn new(seed: u64) -> Session {
        let target = decode_compact(EASY_BITS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let txs = block_txs(seed << 20, rng.gen_range(1..=5));
        let genesis = mine(
            BlockHeader {
                version: 1,
                prev_hash: Hash::ZERO,
                merkle_root: block_tree(&txs).unwrap().root(),
                timestamp: 1_000_000,
                n_bits: EASY_BITS,
                nonce: 0,
            },
            &target,
            1 << 20,
        )
        .unwrap();
        let config = ClientConfig {
            anomaly_window: 8,
            finality_depth: 6,
            orphans: OrphanConfig { ttl_s: 50, max_depth: 4, max_size: 12 },
        };
        let state = init_client(genesis, ChainParams::new(target.clone()), config).unwrap();
        let mut bodies = BTreeMap::new();
        bodies.insert(genesis.hash(), txs);
        Session {
            rng,
            target,
            state,
            bodies,
            tracked: Vec::new(),
            salt: seed << 20 | 1,
            reorgs: 0,
            rejected_branches: 0,
            now: 0,
        }
    }

    pub fn state(&self) -> &ClientState {
        &self.state
    }

    fn mine_on(&mut self, prev: &BlockHeader, timestamp: u32) -> BlockHeader {
        self.salt += 1;
        let txs = block_txs(self.salt, self.rng.gen_range(1..=5));
        let h = mine(
            BlockHeader {
                version: 1,
                prev_hash: prev.hash(),
                merkle_root: block_tree(&txs).unwrap().root(),
                timestamp,
                n_bits: encode_compact(&self.target),
                nonce: 0,
            },
            &self.target,
            1 << 20,
        )
        .unwrap();
        self.bodies.insert(h.hash(), txs);
        h
    }

    fn branch(&mut self, from: usize, len: usize, bad_timestamp_at: Option<usize>) -> Vec<BlockHeader> {
        let mut prev = *self.state.chain().get(from).unwrap();
        let mut out = Vec::new();
        for i in 0..len {
            let ts = if bad_timestamp_at == Some(i) { prev.timestamp } else { prev.timestamp + 600 };
            let h = self.mine_on(&prev, ts);
            out.push(h);
            prev = h;
        }
        out
    }

    fn confirmations_snapshot(&self) -> Vec<(Hash, u64)> {
        self.tracked.iter().map(|t| (t.txid, self.state.confirmations(&t.txid))).collect()
    }

    fn on_chain(&self, t: &Tracked) -> bool {
        self.state.chain().hash_at(t.block_index) == Some(t.block_hash)
    }

    /// One random operation followed by the invariant checks.
    pub fn step(&mut self) -> Result<(), String> {
        let height = self.state.height();
        let before = self.confirmations_snapshot();
        let tip_before = self.state.chain().tip_hash();
        match self.rng.gen_range(0..100) {
            0..=29 => {
                let n = self.rng.gen_range(1..=3);
                let headers = self.branch(height, n, None);
                let report = self.state.ingest_headers(&headers);
                if report.appended != n || report.anomaly.is_some() {
                    return Err(format!("extension by {n} gave {report:?}"));
                }
                for (t, (id, c)) in self.tracked.iter().zip(&before) {
                    if t.txid == *id && *c > 0 && self.state.confirmations(id) != c + n as u64 {
                        return Err(format!("confirmations of {id} went {c} -> {}", self.state.confirmations(id)));
                    }
                }
            }
            30..=44 if height > 0 => {
                let depth = self.rng.gen_range(1..=height.min(3));
                let extra = self.rng.gen_range(0..=2);
                let bad = if self.rng.gen_bool(0.3) { Some(self.rng.gen_range(0..depth + extra)) } else { None };
                let fork = height - depth;
                let headers = self.branch(fork, depth + extra, bad);
                let displaced: Vec<Hash> = self
                    .tracked
                    .iter()
                    .filter(|t| t.block_index > fork && self.on_chain(t))
                    .map(|t| t.txid)
                    .collect();
                let report = self.state.ingest_headers(&headers);
                let adopted = extra > 0 && bad.is_none();
                if adopted != report.reorg.is_some() {
                    return Err(format!("fork depth {depth} extra {extra} bad {bad:?}: {report:?}"));
                }
                if adopted {
                    self.reorgs += 1;
                    if report.anomaly.is_none() {
                        return Err("reorg without rollback anomaly".into());
                    }
                    for id in displaced {
                        if self.state.confirmations(&id) != 0 || self.state.verdict(&id).is_some() {
                            return Err(format!("{id} survived the reorg"));
                        }
                    }
                } else {
                    self.rejected_branches += 1;
                    if self.state.chain().tip_hash() != tip_before {
                        return Err("rejected branch moved the tip".into());
                    }
                }
            }
            45..=74 => {
                let k = self.rng.gen_range(0..=height);
                let block_hash = self.state.chain().hash_at(k).unwrap();
                let txs = self.bodies[&block_hash].clone();
                let i = self.rng.gen_range(0..txs.len());
                let proof = block_tree(&txs).unwrap().prove(i).unwrap();
                let txid = txs[i].txid();
                let wrong = (k + 1) % (height + 1);
                if wrong != k {
                    let other = self.bodies[&self.state.chain().hash_at(wrong).unwrap()].clone();
                    let expected = block_tree(&other).unwrap().root() == block_tree(&txs).unwrap().root();
                    if self.state.verify_spv(txid, &proof, wrong).unwrap() != expected {
                        return Err(format!("proof for block {k} verified against block {wrong}"));
                    }
                }
                if !self.state.verify_spv(txid, &proof, k).unwrap() {
                    return Err(format!("honest proof for block {k} rejected"));
                }
                if self.state.confirmations(&txid) != (height - k + 1) as u64 {
                    return Err("confirmations differ from n - k + 1".into());
                }
                self.tracked.retain(|t| t.txid != txid);
                self.tracked.push(Tracked { txid, proof, block_index: k, block_hash });
            }
            75..=89 => {
                let parent = if self.rng.gen_bool(0.5) && !self.tracked.is_empty() {
                    self.tracked[self.rng.gen_range(0..self.tracked.len())].txid
                } else {
                    let mut b = [0u8; 32];
                    self.rng.fill(&mut b);
                    Hash(b)
                };
                let tx = Transaction {
                    inputs: vec![TxInput { parent_txid: parent, output_index: 0, unlock_witness: vec![] }],
                    outputs: vec![TxOutput { value: 1, lock_condition: vec![] }],
                    lock_time: self.rng.gen(),
                    fee: 0,
                };
                self.now += self.rng.gen_range(0..20);
                self.state.orphan_submit(tx, self.now);
            }
            _ => {
                self.now += self.rng.gen_range(0..40);
                self.state.orphan_tick(self.now);
                let ttl = self.state.orphans().config().ttl_s;
                if self.state.orphans().entries().any(|(_, e)| e.arrival_s + ttl < self.now) {
                    return Err("orphan older than TTL after tick".into());
                }
            }
        }
        self.check()
    }

    fn check(&mut self) -> Result<(), String> {
        if !self.state.local_validation_holds() {
            return Err("a true verdict lacks a valid stored proof".into());
        }
        let orphans = self.state.orphans();
        if orphans.len() > orphans.config().max_size {
            return Err("orphan buffer above its cap".into());
        }
        if orphans.entries().any(|(_, e)| e.depth > orphans.config().max_depth) {
            return Err("orphan deeper than max_depth".into());
        }
        let tracked: Vec<Tracked> = self.tracked.iter().filter(|t| self.on_chain(t)).cloned().collect();
        for t in &tracked {
            let ok = self.state.verify_spv(t.txid, &t.proof, t.block_index).unwrap();
            if !ok || self.state.verdict(&t.txid) != Some(true) {
                return Err(format!("verification of {} flipped to false", t.txid));
            }
            let expected = (self.state.height() - t.block_index + 1) as u64;
            if self.state.confirmations(&t.txid) != expected {
                return Err("confirmations differ from n - k + 1".into());
            }
        }
        Ok(())
    }
}

pub fn run_session(seed: u64, steps: usize) -> Result<Session, String> {
    let mut s = Session::new(seed);
    for i in 0..steps {
        s.step().map_err(|e| format!("seed {seed} step {i}: {e}"))?;
    }
    Ok(s)
}
