//! Deterministic discrete-event simulation of header and transaction relay.
//!
//! A run floods one message from an origin across a [`Topology`]. Each
//! honest node deduplicates by message id, verifies, applies the fee floor
//! and its token-bucket rate limit, and forwards to every neighbour except
//! the sender with probability `forward_prob`. Links drop with `loss_prob`
//! and otherwise deliver after an exponential delay. Adversarial nodes drop,
//! selectively drop, or corrupt headers before relaying.
//!
//! All randomness comes from keyed draws (see `rng`), and the event queue is
//! totally ordered by `(time, node, message id, sequence)`, so a given
//! `(SimConfig, Scenario)` always yields the same trace bytes.

mod rng;
mod topology;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use topology::{build_topology, Topology, TopologyKind, TopologyParams};

use crate::hash::{sha256, sha256d, Hash};
use crate::headers::{encode_headers, BlockHeader, Target};
use rng::{unit, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetsimError {
    #[error("unsatisfiable topology parameters: {0}")]
    UnsatisfiableParams(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("origin {origin} is not a node of a {n_nodes}-node topology")]
    OriginOutOfRange { origin: usize, n_nodes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Path { n_nodes: usize },
    Ring { n_nodes: usize },
    Complete { n_nodes: usize },
    DRegularRandom {
        n_nodes: usize,
        degree: usize,
        #[serde(default)]
        seed: u64,
    },
    SmallWorld {
        n_nodes: usize,
        degree: usize,
        rewire_prob: f64,
        #[serde(default)]
        seed: u64,
    },
    Explicit { n_nodes: usize, edges: Vec<(usize, usize)> },
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology, NetsimError> {
        let none = TopologyParams::default();
        match *self {
            TopologySpec::Path { n_nodes } => build_topology(TopologyKind::Path, n_nodes, none, 0),
            TopologySpec::Ring { n_nodes } => build_topology(TopologyKind::Ring, n_nodes, none, 0),
            TopologySpec::Complete { n_nodes } => {
                build_topology(TopologyKind::Complete, n_nodes, none, 0)
            }
            TopologySpec::DRegularRandom { n_nodes, degree, seed } => build_topology(
                TopologyKind::DRegularRandom,
                n_nodes,
                TopologyParams { degree, rewire_prob: 0.0 },
                seed,
            ),
            TopologySpec::SmallWorld { n_nodes, degree, rewire_prob, seed } => build_topology(
                TopologyKind::SmallWorld,
                n_nodes,
                TopologyParams { degree, rewire_prob },
                seed,
            ),
            TopologySpec::Explicit { n_nodes, ref edges } => {
                Topology::from_edges(n_nodes, edges.iter().copied())
            }
        }
    }

    /// Same family with a different generator seed; fixed families are unchanged.
    pub fn with_seed(&self, new_seed: u64) -> TopologySpec {
        let mut spec = self.clone();
        match &mut spec {
            TopologySpec::DRegularRandom { seed, .. } | TopologySpec::SmallWorld { seed, .. } => {
                *seed = new_seed
            }
            _ => {}
        }
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "snake_case")]
pub enum Adversary {
    DropAll,
    SelectiveDrop { targets: Vec<Hash> },
    /// Flips one byte of the first header's Merkle root, then relays.
    ModifyHeaders,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeValue {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub topology: TopologySpec,
    /// Mean of the exponential link delay, seconds.
    #[serde(default = "one")]
    pub delay_mean_s: f64,
    #[serde(default)]
    pub delay_overrides: Vec<EdgeValue>,
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default)]
    pub loss_overrides: Vec<EdgeValue>,
    #[serde(default = "one")]
    pub forward_prob: f64,
    #[serde(default)]
    pub adversaries: BTreeMap<usize, Adversary>,
    #[serde(default)]
    pub fee_floor: u64,
    /// Token-bucket capacity and refill rate, in sends per second.
    #[serde(default)]
    pub rate_limit_per_s: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn new(topology: TopologySpec) -> SimConfig {
        SimConfig {
            topology,
            delay_mean_s: 1.0,
            delay_overrides: Vec::new(),
            loss_prob: 0.0,
            loss_overrides: Vec::new(),
            forward_prob: 1.0,
            adversaries: BTreeMap::new(),
            fee_floor: 0,
            rate_limit_per_s: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        let bad = |why: String| Err(NetsimError::InvalidConfig(why));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.forward_prob) {
            return bad(format!("forward_prob {} outside [0, 1]", self.forward_prob));
        }
        if !prob(self.loss_prob) || self.loss_overrides.iter().any(|e| !prob(e.value)) {
            return bad("loss probabilities must lie in [0, 1]".into());
        }
        let positive = |m: f64| m > 0.0 && m.is_finite();
        if !positive(self.delay_mean_s) || self.delay_overrides.iter().any(|e| !positive(e.value)) {
            return bad("delay means must be positive".into());
        }
        if self.rate_limit_per_s.is_some_and(|r| !positive(r)) {
            return bad("rate limit must be positive".into());
        }
        Ok(())
    }

    /// Short digest of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        sha256(&json).to_hex()[..16].to_string()
    }

    pub fn honest_nodes(&self, n_nodes: usize) -> BTreeSet<usize> {
        (0..n_nodes).filter(|v| !self.adversaries.contains_key(v)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Headers { headers: Vec<BlockHeader> },
    Transaction { txid: Hash, fee: u64 },
}

impl Message {
    pub fn id(&self) -> Hash {
        match self {
            Message::Headers { headers } => sha256d(&encode_headers(headers)),
            Message::Transaction { txid, .. } => *txid,
        }
    }

    /// Content matches the advertised id and, for headers, the batch links,
    /// meets each header's own target and advances in time.
    fn verifies_as(&self, id: &Hash) -> bool {
        match self {
            Message::Transaction { txid, .. } => txid == id,
            Message::Headers { headers } => {
                self.id() == *id
                    && headers.iter().enumerate().all(|(i, h)| {
                        let pow = Target::from_compact(h.n_bits).is_ok_and(|t| t.is_met_by(&h.hash()));
                        let linked = i == 0
                            || (h.prev_hash == headers[i - 1].hash()
                                && h.timestamp > headers[i - 1].timestamp);
                        pow && linked
                    })
            }
        }
    }

    fn corrupted(&self) -> Option<Message> {
        match self {
            Message::Headers { headers } if !headers.is_empty() => {
                let mut headers = headers.clone();
                headers[0].merkle_root.0[0] ^= 0x01;
                Some(Message::Headers { headers })
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub origin: usize,
    pub message: Message,
    pub duration_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Send,
    Receive,
    Verify,
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detail {
    Origin,
    Ok,
    Invalid,
    Duplicate,
    Adversary,
    FeeFloor,
    RateLimited,
    Lost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_s: f64,
    pub kind: EventKind,
    pub node: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<usize>,
    pub msg: Hash,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Detail>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub n_nodes: usize,
    pub origin: usize,
    pub message_id: Hash,
    pub events: Vec<Event>,
    /// Message ids held by each node at the end of the run.
    pub inventories: Vec<Vec<Hash>>,
}

impl Trace {
    /// One JSON object per event, then one line with the final inventories.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("event serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "n_nodes": self.n_nodes,
            "origin": self.origin,
            "message_id": self.message_id,
            "inventories": self.inventories,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    /// SHA-256 of [`Trace::to_jsonl`].
    pub fn digest(&self) -> Hash {
        sha256(self.to_jsonl().as_bytes())
    }
}

#[derive(Clone, Debug)]
struct Pending {
    time: f64,
    node: usize,
    msg: Hash,
    seq: u64,
    from: usize,
    payload: usize,
}

impl Pending {
    fn key(&self) -> (f64, usize, Hash, u64) {
        (self.time, self.node, self.msg, self.seq)
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        let (t1, n1, m1, s1) = self.key();
        let (t2, n2, m2, s2) = other.key();
        t1.total_cmp(&t2)
            .then(n1.cmp(&n2))
            .then(m1.cmp(&m2))
            .then(s1.cmp(&s2))
    }
}

#[derive(Clone, Copy, Debug)]
struct Bucket {
    tokens: f64,
    updated: f64,
}

struct Simulation<'a> {
    config: &'a SimConfig,
    topo: Topology,
    delay: HashMap<(usize, usize), f64>,
    loss: HashMap<(usize, usize), f64>,
    events: Vec<Event>,
    inventory: Vec<BTreeSet<Hash>>,
    queue: BinaryHeap<Reverse<Pending>>,
    payloads: Vec<Message>,
    attempts: HashMap<(usize, usize, Hash), u32>,
    buckets: Vec<Bucket>,
    seq: u64,
}

fn edge_map(values: &[EdgeValue]) -> HashMap<(usize, usize), f64> {
    values
        .iter()
        .map(|e| ((e.a.min(e.b), e.a.max(e.b)), e.value))
        .collect()
}

impl Simulation<'_> {
    fn log(&mut self, time_s: f64, kind: EventKind, node: usize, peer: Option<usize>, msg: Hash, detail: Option<Detail>) {
        self.events.push(Event {
            time_s,
            kind,
            node,
            peer,
            msg,
            detail,
        });
    }

    fn edge_value(map: &HashMap<(usize, usize), f64>, a: usize, b: usize, default: f64) -> f64 {
        map.get(&(a.min(b), a.max(b))).copied().unwrap_or(default)
    }

    fn take_token(&mut self, node: usize, now: f64) -> bool {
        let Some(rate) = self.config.rate_limit_per_s else {
            return true;
        };
        let bucket = &mut self.buckets[node];
        bucket.tokens = (bucket.tokens + (now - bucket.updated) * rate).min(rate);
        bucket.updated = now;
        if bucket.tokens >= 1.0 {
            bucket.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    fn forward(&mut self, node: usize, from: Option<usize>, payload: usize, msg: Hash, now: f64) {
        let honest = !self.config.adversaries.contains_key(&node);
        if let Message::Transaction { fee, .. } = self.payloads[payload] {
            if honest && fee < self.config.fee_floor {
                self.log(now, EventKind::Drop, node, None, msg, Some(Detail::FeeFloor));
                return;
            }
        }
        let neighbors = self.topo.neighbors(node).to_vec();
        for nb in neighbors {
            if Some(nb) == from {
                continue;
            }
            let counter = self.attempts.entry((node, nb, msg)).or_insert(0);
            let attempt = *counter;
            *counter += 1;
            let seed = self.config.seed;
            if unit(seed, Stream::Forward, node, nb, &msg, attempt) >= self.config.forward_prob {
                continue;
            }
            if !self.take_token(node, now) {
                self.log(now, EventKind::Drop, node, Some(nb), msg, Some(Detail::RateLimited));
                continue;
            }
            self.log(now, EventKind::Send, node, Some(nb), msg, None);
            let loss = Self::edge_value(&self.loss, node, nb, self.config.loss_prob);
            if unit(seed, Stream::Loss, node, nb, &msg, attempt) < loss {
                self.log(now, EventKind::Drop, node, Some(nb), msg, Some(Detail::Lost));
                continue;
            }
            let mean = Self::edge_value(&self.delay, node, nb, self.config.delay_mean_s);
            let u = unit(seed, Stream::Delay, node, nb, &msg, attempt);
            let delay = -mean * (1.0 - u).ln();
            self.seq += 1;
            self.queue.push(Reverse(Pending {
                time: now + delay,
                node: nb,
                msg,
                seq: self.seq,
                from: node,
                payload,
            }));
        }
    }

    fn receive(&mut self, p: Pending) {
        let Pending { time, node, msg, from, payload, .. } = p;
        self.log(time, EventKind::Receive, node, Some(from), msg, None);

        match self.config.adversaries.get(&node) {
            Some(Adversary::DropAll) => {
                self.log(time, EventKind::Drop, node, Some(from), msg, Some(Detail::Adversary));
                return;
            }
            Some(Adversary::SelectiveDrop { targets }) if targets.contains(&msg) => {
                self.log(time, EventKind::Drop, node, Some(from), msg, Some(Detail::Adversary));
                return;
            }
            Some(Adversary::ModifyHeaders) => {
                if !self.inventory[node].insert(msg) {
                    self.log(time, EventKind::Drop, node, Some(from), msg, Some(Detail::Duplicate));
                    return;
                }
                let relayed = match self.payloads[payload].corrupted() {
                    Some(bad) => {
                        self.payloads.push(bad);
                        self.payloads.len() - 1
                    }
                    None => payload,
                };
                self.forward(node, Some(from), relayed, msg, time);
                return;
            }
            _ => {}
        }

        if self.inventory[node].contains(&msg) {
            self.log(time, EventKind::Drop, node, Some(from), msg, Some(Detail::Duplicate));
            return;
        }
        if !self.payloads[payload].verifies_as(&msg) {
            self.log(time, EventKind::Drop, node, Some(from), msg, Some(Detail::Invalid));
            return;
        }
        self.log(time, EventKind::Verify, node, Some(from), msg, Some(Detail::Ok));
        self.inventory[node].insert(msg);
        self.forward(node, Some(from), payload, msg, time);
    }
}

/// Floods `scenario.message` from its origin until the queue drains or the
/// clock passes `duration_s`.
pub fn run(config: &SimConfig, scenario: &Scenario) -> Result<Trace, NetsimError> {
    config.validate()?;
    let topo = config.topology.build()?;
    let n_nodes = topo.n_nodes();
    if scenario.origin >= n_nodes {
        return Err(NetsimError::OriginOutOfRange {
            origin: scenario.origin,
            n_nodes,
        });
    }
    let capacity = config.rate_limit_per_s.unwrap_or(0.0);
    let mut sim = Simulation {
        config,
        topo,
        delay: edge_map(&config.delay_overrides),
        loss: edge_map(&config.loss_overrides),
        events: Vec::new(),
        inventory: vec![BTreeSet::new(); n_nodes],
        queue: BinaryHeap::new(),
        payloads: vec![scenario.message.clone()],
        attempts: HashMap::new(),
        buckets: vec![Bucket { tokens: capacity, updated: 0.0 }; n_nodes],
        seq: 0,
    };

    let msg = scenario.message.id();
    let origin = scenario.origin;
    sim.log(0.0, EventKind::Verify, origin, None, msg, Some(Detail::Origin));
    sim.inventory[origin].insert(msg);
    sim.forward(origin, None, 0, msg, 0.0);

    while let Some(Reverse(next)) = sim.queue.pop() {
        if next.time > scenario.duration_s {
            break;
        }
        sim.receive(next);
    }

    Ok(Trace {
        n_nodes,
        origin,
        message_id: msg,
        events: sim.events,
        inventories: sim.inventory.into_iter().map(|s| s.into_iter().collect()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Latest first receipt among delivered honest nodes, relative to the origin.
    pub propagation_delay_s: f64,
    /// Number of send events.
    pub redundancy: u64,
    /// Delivered honest nodes over all nodes.
    pub delivery_fraction: f64,
    /// Delivered honest nodes over the honest set.
    pub honest_delivery_fraction: f64,
    pub first_receipt_s: Vec<Option<f64>>,
}

pub fn measure(trace: &Trace, honest: &BTreeSet<usize>) -> Metrics {
    let mut first_receipt_s = vec![None; trace.n_nodes];
    let mut origin_time = 0.0;
    let mut redundancy = 0;
    for e in &trace.events {
        if e.msg != trace.message_id {
            continue;
        }
        match (e.kind, e.detail) {
            (EventKind::Send, _) => redundancy += 1,
            (EventKind::Verify, Some(Detail::Ok | Detail::Origin)) => {
                if e.detail == Some(Detail::Origin) {
                    origin_time = e.time_s;
                }
                first_receipt_s[e.node].get_or_insert(e.time_s);
            }
            _ => {}
        }
    }
    let delivered: Vec<f64> = honest
        .iter()
        .filter_map(|&v| first_receipt_s.get(v).copied().flatten())
        .collect();
    let propagation_delay_s = delivered
        .iter()
        .map(|t| t - origin_time)
        .fold(0.0, f64::max);
    let frac = |den: usize| if den == 0 { 0.0 } else { delivered.len() as f64 / den as f64 };
    Metrics {
        propagation_delay_s,
        redundancy,
        delivery_fraction: frac(trace.n_nodes),
        honest_delivery_fraction: frac(honest.len()),
        first_receipt_s,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_hash: String,
    pub tau_s: f64,
    pub redundancy: u64,
    pub delivery: f64,
    pub trace_digest: Hash,
}

pub const CSV_HEADER: &str = "config_hash,tau_s,redundancy,delivery,trace_digest";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.config_hash, self.tau_s, self.redundancy, self.delivery, self.trace_digest
        )
    }
}

pub fn run_and_measure(config: &SimConfig, scenario: &Scenario) -> Result<(Trace, Metrics, SweepRow), NetsimError> {
    let trace = run(config, scenario)?;
    let metrics = measure(&trace, &config.honest_nodes(trace.n_nodes));
    let row = SweepRow {
        config_hash: config.config_hash(),
        tau_s: metrics.propagation_delay_s,
        redundancy: metrics.redundancy,
        delivery: metrics.delivery_fraction,
        trace_digest: trace.digest(),
    };
    Ok((trace, metrics, row))
}

/// One row per config, in input order. Runs execute in parallel.
pub fn sweep(configs: &[SimConfig], scenario: &Scenario) -> Result<Vec<SweepRow>, NetsimError> {
    configs
        .par_iter()
        .map(|c| run_and_measure(c, scenario).map(|(_, _, row)| row))
        .collect()
}

/// Cartesian grid over topologies, forwarding probabilities and seeds. An
/// empty axis keeps the base config's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub base: SimConfig,
    pub scenario: Scenario,
    #[serde(default)]
    pub topologies: Vec<TopologySpec>,
    #[serde(default)]
    pub forward_probs: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    /// Topology-major, then forwarding probability, then seed. A seed also
    /// reseeds random topology families.
    pub fn configs(&self) -> Vec<SimConfig> {
        let topologies = if self.topologies.is_empty() {
            vec![self.base.topology.clone()]
        } else {
            self.topologies.clone()
        };
        let probs = if self.forward_probs.is_empty() {
            vec![self.base.forward_prob]
        } else {
            self.forward_probs.clone()
        };
        let mut out = Vec::new();
        for topo in &topologies {
            for &p in &probs {
                match self.seeds.as_slice() {
                    [] => out.push(SimConfig {
                        topology: topo.clone(),
                        forward_prob: p,
                        ..self.base.clone()
                    }),
                    seeds => out.extend(seeds.iter().map(|&s| SimConfig {
                        topology: topo.with_seed(s),
                        forward_prob: p,
                        seed: s,
                        ..self.base.clone()
                    })),
                }
            }
        }
        out
    }
}
