//! The SPV client automaton.
//!
//! A [`ClientState`] holds the header chain, the inclusion proofs it has
//! checked, a verdict per transaction id, and an orphan buffer. Every query
//! is answered from local state alone; there is no peer handle anywhere in
//! this API.

mod orphan;
mod peers;
mod poll;
mod tx;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use orphan::{
    OrphanBuffer, OrphanConfig, OrphanEntry, OrphanReport, SubmitOutcome, DEFAULT_MAX_DEPTH,
    DEFAULT_MAX_SIZE, DEFAULT_TTL_S,
};
pub use peers::{detect_divergence, discover_peers, DivergenceAlert};
pub use poll::{next_poll_interval, PollParams};
pub use tx::{
    block_tree, HashLock, LockChecker, OutPoint, Transaction, TxDecodeError, TxInput, TxOutput,
};

use crate::hash::Hash;
use crate::headers::{validate_header, BlockHeader, ChainParams, HeaderChain, Verdict};
use crate::merkle::{self, MerkleProof};

pub const DEFAULT_ANOMALY_WINDOW: usize = 32;
pub const DEFAULT_FINALITY_DEPTH: u64 = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("genesis header rejected: {0:?}")]
    InvalidGenesis(Verdict),
    #[error("block index {index} out of range for chain of {len} headers")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientConfig {
    /// Number of recent tips remembered for rollback detection.
    pub anomaly_window: usize,
    /// Confirmations at which a transaction counts as final.
    pub finality_depth: u64,
    pub orphans: OrphanConfig,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            anomaly_window: DEFAULT_ANOMALY_WINDOW,
            finality_depth: DEFAULT_FINALITY_DEPTH,
            orphans: OrphanConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredProof {
    pub proof: MerkleProof,
    pub block_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeaderOutcome {
    /// Already on the local chain.
    Known,
    Accepted,
    Rejected(Verdict),
    /// Parent not on the local chain.
    Unconnected,
    /// Not examined because an earlier header in the batch failed.
    NotProcessed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reorg {
    /// First index whose header was replaced.
    pub fork_index: usize,
    pub disconnected: usize,
    pub connected: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchRejection {
    Inconsistent { index: usize, verdict: Verdict },
    InsufficientWork,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollbackAnomaly {
    pub vanished_tips: Vec<Hash>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub outcomes: Vec<(Hash, HeaderOutcome)>,
    /// Headers appended to the previous tip.
    pub appended: usize,
    pub reorg: Option<Reorg>,
    pub branch_rejected: Option<BranchRejection>,
    /// Transactions whose proven block left the chain.
    pub reverted: Vec<Hash>,
    pub anomaly: Option<RollbackAnomaly>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptMode {
    /// Every parent must be proven included; nothing else is checked.
    InclusionOnly,
    /// Inclusion plus output references, unlock witnesses and intra-bundle
    /// double spends.
    Strict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Check {
    ParentInclusion,
    OutputReference,
    Witness,
    LocalDoubleSpend,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Failure {
    /// Parent count and proof count differ.
    MalformedBundle,
    ParentInclusion { parent: usize },
    MissingParentOutput { input: usize },
    WitnessMismatch { input: usize },
    LocalDoubleSpend { input: usize },
}

impl Failure {
    pub fn check(&self) -> Check {
        match self {
            Failure::MalformedBundle | Failure::ParentInclusion { .. } => Check::ParentInclusion,
            Failure::MissingParentOutput { .. } => Check::OutputReference,
            Failure::WitnessMismatch { .. } => Check::Witness,
            Failure::LocalDoubleSpend { .. } => Check::LocalDoubleSpend,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub accepted: bool,
    pub mode: AcceptMode,
    pub payment_txid: Hash,
    pub checks: Vec<CheckOutcome>,
    pub failures: Vec<Failure>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentProof {
    pub proof: MerkleProof,
    pub block_index: usize,
}

/// A payment plus the parents it spends and their inclusion proofs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofBundle {
    pub payment: Transaction,
    pub parents: Vec<Transaction>,
    pub parent_proofs: Vec<ParentProof>,
}

#[derive(Clone, Debug)]
pub struct ClientState {
    config: ClientConfig,
    chain: HeaderChain,
    proofs: BTreeMap<Hash, StoredProof>,
    verdicts: BTreeMap<Hash, Option<bool>>,
    orphans: OrphanBuffer,
    recent_tips: VecDeque<Hash>,
    /// Transactions proven, accepted or promoted; orphans wait on these.
    known: BTreeSet<Hash>,
    tx_store: BTreeMap<Hash, Transaction>,
    accepted_payments: BTreeSet<Hash>,
}

/// Starts a client from a genesis header that must pass validation on its own.
pub fn init_client(
    genesis: BlockHeader,
    params: ChainParams,
    config: ClientConfig,
) -> Result<ClientState, ClientError> {
    let verdict = validate_header(None, &genesis, &params.target);
    if !verdict.is_ok() {
        return Err(ClientError::InvalidGenesis(verdict));
    }
    let mut chain = HeaderChain::new(params);
    chain.push(genesis);
    let mut recent_tips = VecDeque::with_capacity(config.anomaly_window);
    recent_tips.push_back(genesis.hash());
    Ok(ClientState {
        config,
        chain,
        proofs: BTreeMap::new(),
        verdicts: BTreeMap::new(),
        orphans: OrphanBuffer::new(config.orphans),
        recent_tips,
        known: BTreeSet::new(),
        tx_store: BTreeMap::new(),
        accepted_payments: BTreeSet::new(),
    })
}

impl ClientState {
    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn chain(&self) -> &HeaderChain {
        &self.chain
    }

    /// Index of the tip header.
    pub fn height(&self) -> usize {
        self.chain.height().expect("client chain always holds genesis")
    }

    pub fn verdict(&self, txid: &Hash) -> Option<bool> {
        self.verdicts.get(txid).copied().flatten()
    }

    pub fn verdicts(&self) -> &BTreeMap<Hash, Option<bool>> {
        &self.verdicts
    }

    pub fn proof(&self, txid: &Hash) -> Option<&StoredProof> {
        self.proofs.get(txid)
    }

    pub fn orphans(&self) -> &OrphanBuffer {
        &self.orphans
    }

    pub fn is_known(&self, txid: &Hash) -> bool {
        self.known.contains(txid)
    }

    pub fn is_accepted_payment(&self, txid: &Hash) -> bool {
        self.accepted_payments.contains(txid)
    }

    /// Every `true` verdict is backed by a stored proof that folds to the
    /// Merkle root of its block on the current chain.
    pub fn local_validation_holds(&self) -> bool {
        self.verdicts
            .iter()
            .filter(|(_, v)| **v == Some(true))
            .all(|(txid, _)| self.proof_still_valid(txid))
    }

    fn proof_still_valid(&self, txid: &Hash) -> bool {
        self.proofs.get(txid).is_some_and(|stored| {
            self.chain
                .get(stored.block_index)
                .is_some_and(|h| merkle::verify_proof(txid, &stored.proof, &h.merkle_root))
        })
    }

    /// Extends the chain, or switches to a competing branch that is
    /// consistent and carries strictly more cumulative work.
    pub fn ingest_headers(&mut self, incoming: &[BlockHeader]) -> IngestReport {
        let mut report = IngestReport::default();

        let mut start = 0;
        while let Some(h) = incoming.get(start) {
            let hash = h.hash();
            if self.chain.position(&hash).is_none() {
                break;
            }
            report.outcomes.push((hash, HeaderOutcome::Known));
            start += 1;
        }
        let rest = &incoming[start..];
        let Some(first) = rest.first() else {
            return report;
        };

        match self.chain.position(&first.prev_hash) {
            None => {
                report
                    .outcomes
                    .extend(rest.iter().map(|h| (h.hash(), HeaderOutcome::Unconnected)));
            }
            Some(parent) if parent == self.height() => {
                let mut failed = false;
                for h in rest {
                    if failed {
                        report.outcomes.push((h.hash(), HeaderOutcome::NotProcessed));
                        continue;
                    }
                    let verdict = self.chain.push(*h);
                    if verdict.is_ok() {
                        report.appended += 1;
                        report.outcomes.push((h.hash(), HeaderOutcome::Accepted));
                    } else {
                        failed = true;
                        report.outcomes.push((h.hash(), HeaderOutcome::Rejected(verdict)));
                    }
                }
            }
            Some(parent) => self.consider_branch(parent, rest, &mut report),
        }

        self.note_tip(&mut report);
        report
    }

    fn consider_branch(&mut self, parent: usize, branch: &[BlockHeader], report: &mut IngestReport) {
        let mut candidate = self.chain.clone();
        candidate.truncate(parent + 1);
        for (i, h) in branch.iter().enumerate() {
            let verdict = candidate.push(*h);
            if !verdict.is_ok() {
                report.outcomes.push((h.hash(), HeaderOutcome::Rejected(verdict)));
                report
                    .outcomes
                    .extend(branch[i + 1..].iter().map(|h| (h.hash(), HeaderOutcome::NotProcessed)));
                report.branch_rejected = Some(BranchRejection::Inconsistent {
                    index: parent + 1 + i,
                    verdict,
                });
                return;
            }
        }
        if candidate.work() <= self.chain.work() {
            report
                .outcomes
                .extend(branch.iter().map(|h| (h.hash(), HeaderOutcome::Rejected(Verdict::Ok))));
            report.branch_rejected = Some(BranchRejection::InsufficientWork);
            return;
        }

        let fork_index = parent + 1;
        let disconnected = self.chain.len() - fork_index;
        self.chain = candidate;
        report
            .outcomes
            .extend(branch.iter().map(|h| (h.hash(), HeaderOutcome::Accepted)));
        report.reorg = Some(Reorg {
            fork_index,
            disconnected,
            connected: branch.len(),
        });

        let displaced: Vec<Hash> = self
            .proofs
            .iter()
            .filter(|(_, p)| p.block_index >= fork_index)
            .map(|(id, _)| *id)
            .collect();
        for txid in displaced {
            self.proofs.remove(&txid);
            self.verdicts.insert(txid, None);
            report.reverted.push(txid);
        }
    }

    fn note_tip(&mut self, report: &mut IngestReport) {
        let tip = self.chain.tip_hash().expect("non-empty chain");
        if self.recent_tips.back() != Some(&tip) {
            self.recent_tips.push_back(tip);
            while self.recent_tips.len() > self.config.anomaly_window.max(1) {
                self.recent_tips.pop_front();
            }
        }
        let vanished: Vec<Hash> = self
            .recent_tips
            .iter()
            .filter(|t| self.chain.position(t).is_none())
            .copied()
            .collect();
        if !vanished.is_empty() {
            self.recent_tips.retain(|t| !vanished.contains(t));
            report.anomaly = Some(RollbackAnomaly {
                vanished_tips: vanished,
            });
        }
    }

    /// Folds `txid` through `proof` and compares with the Merkle root of the
    /// header at `block_index`. No signature or script is evaluated.
    ///
    /// A failed attempt never overturns an earlier successful verification
    /// whose block is still on the chain.
    pub fn verify_spv(
        &mut self,
        txid: Hash,
        proof: &MerkleProof,
        block_index: usize,
    ) -> Result<bool, ClientError> {
        let header = self.chain.get(block_index).ok_or(ClientError::IndexOutOfRange {
            index: block_index,
            len: self.chain.len(),
        })?;
        let included = merkle::verify_proof(&txid, proof, &header.merkle_root);
        if included {
            self.proofs.insert(
                txid,
                StoredProof {
                    proof: proof.clone(),
                    block_index,
                },
            );
            self.verdicts.insert(txid, Some(true));
            self.mark_known(txid);
        } else if self.verdict(&txid) != Some(true) {
            self.verdicts.insert(txid, Some(false));
        }
        Ok(included)
    }

    pub fn accept_transaction(&mut self, bundle: &ProofBundle, mode: AcceptMode) -> Decision {
        self.accept_transaction_with(bundle, mode, &HashLock)
    }

    pub fn accept_transaction_with(
        &mut self,
        bundle: &ProofBundle,
        mode: AcceptMode,
        checker: &dyn LockChecker,
    ) -> Decision {
        let mut failures = Vec::new();
        let mut checks = Vec::new();

        if bundle.parents.len() != bundle.parent_proofs.len() {
            failures.push(Failure::MalformedBundle);
        } else {
            for (i, (parent, pp)) in bundle.parents.iter().zip(&bundle.parent_proofs).enumerate() {
                let ok = self
                    .verify_spv(parent.txid(), &pp.proof, pp.block_index)
                    .unwrap_or(false);
                if !ok {
                    failures.push(Failure::ParentInclusion { parent: i });
                }
            }
        }
        checks.push(CheckOutcome {
            check: Check::ParentInclusion,
            passed: failures.is_empty(),
        });

        if mode == AcceptMode::Strict {
            let parents: BTreeMap<Hash, &Transaction> =
                bundle.parents.iter().map(|p| (p.txid(), p)).collect();
            let mut strict = Vec::new();
            let mut spent = BTreeSet::new();
            for (i, input) in bundle.payment.inputs.iter().enumerate() {
                let output = parents
                    .get(&input.parent_txid)
                    .and_then(|p| p.outputs.get(input.output_index as usize));
                match output {
                    None => strict.push(Failure::MissingParentOutput { input: i }),
                    Some(out) if !checker.check(&out.lock_condition, &input.unlock_witness) => {
                        strict.push(Failure::WitnessMismatch { input: i })
                    }
                    Some(_) => {}
                }
                if !spent.insert(input.outpoint()) {
                    strict.push(Failure::LocalDoubleSpend { input: i });
                }
            }
            for check in [Check::OutputReference, Check::Witness, Check::LocalDoubleSpend] {
                checks.push(CheckOutcome {
                    check,
                    passed: !strict.iter().any(|f| f.check() == check),
                });
            }
            failures.extend(strict);
        }

        let payment_txid = bundle.payment.txid();
        let accepted = failures.is_empty();
        if accepted {
            for parent in &bundle.parents {
                self.tx_store.insert(parent.txid(), parent.clone());
            }
            self.tx_store.insert(payment_txid, bundle.payment.clone());
            self.accepted_payments.insert(payment_txid);
            self.mark_known(payment_txid);
        }
        Decision {
            accepted,
            mode,
            payment_txid,
            checks,
            failures,
        }
    }

    /// `n - k + 1` for a proof in block `k` of a chain tipped at `n`, or 0
    /// when no stored proof verifies against the current chain.
    pub fn confirmations(&self, txid: &Hash) -> u64 {
        match self.proofs.get(txid) {
            Some(stored) if self.proof_still_valid(txid) => {
                (self.height() - stored.block_index + 1) as u64
            }
            _ => 0,
        }
    }

    pub fn is_final(&self, txid: &Hash) -> bool {
        self.confirmations(txid) >= self.config.finality_depth
    }

    /// Resolves `tx` immediately when all its parents are known, otherwise
    /// buffers it subject to the depth and size limits.
    pub fn orphan_submit(&mut self, tx: Transaction, now_s: u64) -> OrphanReport {
        let txid = tx.txid();
        let mut report = OrphanReport::default();
        if self.known.contains(&txid) {
            report.outcome = Some(SubmitOutcome::Resolved);
            return report;
        }
        let unresolved: BTreeSet<Hash> = tx
            .inputs
            .iter()
            .map(|i| i.parent_txid)
            .filter(|p| !self.known.contains(p))
            .collect();
        if unresolved.is_empty() {
            report.outcome = Some(SubmitOutcome::Resolved);
            self.promote(vec![(txid, tx)], &mut report, Some(txid));
        } else {
            report.outcome = Some(self.orphans.insert(txid, tx, unresolved, now_s));
        }
        report
    }

    /// Evicts orphans older than the TTL.
    pub fn orphan_tick(&mut self, now_s: u64) -> OrphanReport {
        OrphanReport {
            evicted: self.orphans.expire(now_s),
            ..Default::default()
        }
    }

    fn mark_known(&mut self, txid: Hash) -> OrphanReport {
        let mut report = OrphanReport::default();
        if self.known.insert(txid) {
            let ready = self.orphans.resolve(&txid);
            self.promote(ready, &mut report, None);
        }
        report
    }

    /// Re-checks output references against known parent bodies, then marks
    /// each transaction known, cascading to buffered descendants.
    fn promote(
        &mut self,
        ready: Vec<(Hash, Transaction)>,
        report: &mut OrphanReport,
        submitted: Option<Hash>,
    ) {
        let mut queue = ready;
        while let Some((txid, tx)) = queue.pop() {
            let references_ok = tx.inputs.iter().all(|input| {
                self.tx_store
                    .get(&input.parent_txid)
                    .is_none_or(|p| (input.output_index as usize) < p.outputs.len())
            });
            if !references_ok {
                report.invalid.push(txid);
                continue;
            }
            if submitted != Some(txid) {
                report.promoted.push(txid);
            }
            self.tx_store.insert(txid, tx);
            if self.known.insert(txid) {
                queue.extend(self.orphans.resolve(&txid));
            }
        }
    }
}
