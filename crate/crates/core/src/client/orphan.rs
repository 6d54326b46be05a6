//! Bounded buffer for transactions whose parents are not yet known.
//!
//! Entries form a parent -> child DAG. When a parent becomes known every
//! descendant whose inputs are now all resolved is promoted, recursively.
//! Limits: `ttl_s` age, `max_depth` length of the pending-ancestor path and
//! `max_size` entries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tx::Transaction;
use crate::hash::Hash;

pub const DEFAULT_TTL_S: u64 = 600;
pub const DEFAULT_MAX_DEPTH: usize = 25;
pub const DEFAULT_MAX_SIZE: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrphanConfig {
    pub ttl_s: u64,
    pub max_depth: usize,
    pub max_size: usize,
}

impl Default for OrphanConfig {
    fn default() -> Self {
        OrphanConfig {
            ttl_s: DEFAULT_TTL_S,
            max_depth: DEFAULT_MAX_DEPTH,
            max_size: DEFAULT_MAX_SIZE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrphanEntry {
    pub tx: Transaction,
    pub arrival_s: u64,
    pub unresolved: BTreeSet<Hash>,
    /// Longest chain of pending ancestors, counting this entry.
    pub depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubmitOutcome {
    /// All parents were known; the transaction resolved immediately.
    Resolved,
    Buffered,
    AlreadyBuffered,
    BufferFull,
    DepthExceeded,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrphanReport {
    pub outcome: Option<SubmitOutcome>,
    /// Buffered transactions whose inputs all resolved, in promotion order.
    pub promoted: Vec<Hash>,
    /// Promoted transactions that referenced a missing parent output.
    pub invalid: Vec<Hash>,
    pub evicted: Vec<Hash>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OrphanBuffer {
    config: OrphanConfig,
    entries: BTreeMap<Hash, OrphanEntry>,
    /// parent txid -> buffered children waiting on it.
    children: BTreeMap<Hash, BTreeSet<Hash>>,
}

impl OrphanBuffer {
    pub fn new(config: OrphanConfig) -> OrphanBuffer {
        OrphanBuffer {
            config,
            entries: BTreeMap::new(),
            children: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &OrphanConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, txid: &Hash) -> bool {
        self.entries.contains_key(txid)
    }

    pub fn get(&self, txid: &Hash) -> Option<&OrphanEntry> {
        self.entries.get(txid)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Hash, &OrphanEntry)> {
        self.entries.iter()
    }

    /// Buffers `tx` if any parent in `unresolved` is unknown. Parents are
    /// resolved by the caller; the buffer only tracks what is still pending.
    pub(crate) fn insert(
        &mut self,
        txid: Hash,
        tx: Transaction,
        unresolved: BTreeSet<Hash>,
        now_s: u64,
    ) -> SubmitOutcome {
        if self.entries.contains_key(&txid) {
            return SubmitOutcome::AlreadyBuffered;
        }
        let depth = 1 + unresolved
            .iter()
            .filter_map(|p| self.entries.get(p).map(|e| e.depth))
            .max()
            .unwrap_or(0);
        if depth > self.config.max_depth {
            return SubmitOutcome::DepthExceeded;
        }
        // Entries already waiting on `txid` now sit below it.
        let mut deeper: BTreeMap<Hash, usize> = BTreeMap::new();
        let mut stack = vec![(txid, depth)];
        while let Some((id, d)) = stack.pop() {
            for child in self.children.get(&id).into_iter().flatten() {
                let Some(entry) = self.entries.get(child) else {
                    continue;
                };
                let current = deeper.get(child).copied().unwrap_or(entry.depth);
                if d + 1 > current {
                    if d + 1 > self.config.max_depth {
                        return SubmitOutcome::DepthExceeded;
                    }
                    deeper.insert(*child, d + 1);
                    stack.push((*child, d + 1));
                }
            }
        }
        if self.entries.len() >= self.config.max_size {
            return SubmitOutcome::BufferFull;
        }
        for (id, d) in deeper {
            self.entries.get_mut(&id).expect("present").depth = d;
        }
        for parent in &unresolved {
            self.children.entry(*parent).or_default().insert(txid);
        }
        self.entries.insert(
            txid,
            OrphanEntry {
                tx,
                arrival_s: now_s,
                unresolved,
                depth,
            },
        );
        SubmitOutcome::Buffered
    }

    /// Marks `parent` known and returns every entry that became fully
    /// resolved as a consequence, removed from the buffer. Resolution does
    /// not cascade here; the caller decides whether a promoted entry is
    /// itself known and calls back in.
    pub(crate) fn resolve(&mut self, parent: &Hash) -> Vec<(Hash, Transaction)> {
        let Some(waiting) = self.children.remove(parent) else {
            return Vec::new();
        };
        let mut ready = Vec::new();
        for child in waiting {
            let Some(entry) = self.entries.get_mut(&child) else {
                continue;
            };
            entry.unresolved.remove(parent);
            if entry.unresolved.is_empty() {
                let entry = self.entries.remove(&child).expect("present");
                ready.push((child, entry.tx));
            }
        }
        ready
    }

    /// Drops entries with `arrival + ttl < now`.
    pub(crate) fn expire(&mut self, now_s: u64) -> Vec<Hash> {
        let ttl = self.config.ttl_s;
        let expired: Vec<Hash> = self
            .entries
            .iter()
            .filter(|(_, e)| e.arrival_s.saturating_add(ttl) < now_s)
            .map(|(id, _)| *id)
            .collect();
        for id in &expired {
            self.remove(id);
        }
        expired
    }

    fn remove(&mut self, txid: &Hash) {
        if let Some(entry) = self.entries.remove(txid) {
            for parent in &entry.unresolved {
                if let Some(set) = self.children.get_mut(parent) {
                    set.remove(txid);
                    if set.is_empty() {
                        self.children.remove(parent);
                    }
                }
            }
        }
    }
}
