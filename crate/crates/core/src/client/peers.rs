//! Peer discovery and cross-peer header divergence alerts.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::hash::Hash;
use crate::headers::BlockHeader;

/// Breadth-first closure of `address_oracle` from `seeds`, at most
/// `max_depth` levels deep and at most `max_per_round` new peers per level.
/// New peers at each level are taken in sorted order.
pub fn discover_peers<P, F>(
    seeds: &[P],
    address_oracle: F,
    max_depth: usize,
    max_per_round: usize,
) -> BTreeSet<P>
where
    P: Ord + Clone,
    F: Fn(&P) -> Vec<P>,
{
    let mut known: BTreeSet<P> = seeds.iter().cloned().collect();
    let mut frontier: Vec<P> = known.iter().cloned().collect();
    for _ in 0..max_depth {
        let fresh: BTreeSet<P> = frontier
            .iter()
            .flat_map(&address_oracle)
            .filter(|p| !known.contains(p))
            .collect();
        frontier = fresh.into_iter().take(max_per_round).collect();
        if frontier.is_empty() {
            break;
        }
        known.extend(frontier.iter().cloned());
    }
    known
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DivergenceAlert<P> {
    /// First height at which two peers report different header hashes.
    pub first_divergence: Option<usize>,
    /// Tip hash reported by strictly more than half the peers.
    pub majority_tip: Option<Hash>,
    /// Peers whose tip differs from the majority tip.
    pub dissenters: Vec<P>,
}

impl<P> DivergenceAlert<P> {
    pub fn diverged(&self) -> bool {
        self.first_divergence.is_some()
    }
}

/// Compares peer header views. Purely advisory: nothing is rejected.
pub fn detect_divergence<P: Ord + Clone>(views: &BTreeMap<P, Vec<BlockHeader>>) -> DivergenceAlert<P> {
    let hashed: Vec<(&P, Vec<Hash>)> = views
        .iter()
        .map(|(peer, headers)| (peer, headers.iter().map(BlockHeader::hash).collect()))
        .collect();

    let longest = hashed.iter().map(|(_, h)| h.len()).max().unwrap_or(0);
    let first_divergence = (0..longest).find(|&i| {
        let mut at_height = hashed.iter().filter_map(|(_, h)| h.get(i));
        match at_height.next() {
            Some(first) => at_height.any(|h| h != first),
            None => false,
        }
    });

    let mut tally: BTreeMap<Option<Hash>, usize> = BTreeMap::new();
    for (_, hashes) in &hashed {
        *tally.entry(hashes.last().copied()).or_default() += 1;
    }
    let majority_tip = tally
        .iter()
        .find(|(_, &count)| 2 * count > hashed.len())
        .and_then(|(tip, _)| *tip);

    let dissenters = match majority_tip {
        Some(tip) => hashed
            .iter()
            .filter(|(_, h)| h.last() != Some(&tip))
            .map(|(p, _)| (*p).clone())
            .collect(),
        None => Vec::new(),
    };

    DivergenceAlert {
        first_divergence,
        majority_tip,
        dissenters,
    }
}
