use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng::mix;
use super::NetsimError;

/// Upper bound on generator restarts before giving up on a parameter set.
const MAX_ATTEMPTS: u64 = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Path,
    Ring,
    Complete,
    DRegularRandom,
    SmallWorld,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologyParams {
    /// Degree for d-regular graphs; lattice degree (even) for small worlds.
    #[serde(default)]
    pub degree: usize,
    #[serde(default)]
    pub rewire_prob: f64,
}

/// Connected undirected graph without self-loops or parallel edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    n_nodes: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

fn norm(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Topology {
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Topology, NetsimError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a >= n_nodes || b >= n_nodes {
                return Err(NetsimError::UnsatisfiableParams(format!("bad edge ({a}, {b})")));
            }
            set.insert(norm(a, b));
        }
        let topo = Topology::from_set(n_nodes, set);
        if n_nodes == 0 || !topo.is_connected() {
            return Err(NetsimError::UnsatisfiableParams("graph is not connected".into()));
        }
        Ok(topo)
    }

    fn from_set(n_nodes: usize, edges: BTreeSet<(usize, usize)>) -> Topology {
        let mut adjacency = vec![Vec::new(); n_nodes];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Topology {
            n_nodes,
            edges,
            adjacency,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    /// Sorted neighbours of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&norm(a, b))
    }

    fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_nodes];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("queued nodes have a distance");
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n_nodes > 0 && self.distances_from(0).iter().all(Option::is_some)
    }

    /// Longest shortest path, in hops.
    pub fn diameter(&self) -> usize {
        (0..self.n_nodes)
            .flat_map(|s| self.distances_from(s))
            .map(|d| d.unwrap_or(usize::MAX))
            .max()
            .unwrap_or(0)
    }
}

/// Deterministic in `(kind, n, params, seed)`. Random families retry with a
/// fresh sub-seed until the result is connected.
pub fn build_topology(
    kind: TopologyKind,
    n: usize,
    params: TopologyParams,
    seed: u64,
) -> Result<Topology, NetsimError> {
    let fail = |why: String| Err(NetsimError::UnsatisfiableParams(why));
    if n < 2 {
        return fail(format!("need at least 2 nodes, got {n}"));
    }
    match kind {
        TopologyKind::Path => Topology::from_edges(n, (1..n).map(|i| (i - 1, i))),
        TopologyKind::Ring => {
            if n < 3 {
                return fail(format!("a ring needs at least 3 nodes, got {n}"));
            }
            Topology::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
        }
        TopologyKind::Complete => {
            Topology::from_edges(n, (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))))
        }
        TopologyKind::DRegularRandom => {
            let d = params.degree;
            if d == 0 || d >= n || !(n * d).is_multiple_of(2) {
                return fail(format!("no simple {d}-regular graph on {n} nodes"));
            }
            retry(n, seed, |rng| random_regular(n, d, rng))
        }
        TopologyKind::SmallWorld => {
            let d = params.degree;
            if d < 2 || !d.is_multiple_of(2) || d >= n || !(0.0..=1.0).contains(&params.rewire_prob) {
                return fail(format!(
                    "small world needs an even lattice degree in [2, n) and rewire_prob in [0, 1], got d = {d}"
                ));
            }
            retry(n, seed, |rng| small_world(n, d, params.rewire_prob, rng))
        }
    }
}

fn retry<F>(n: usize, seed: u64, mut generate: F) -> Result<Topology, NetsimError>
where
    F: FnMut(&mut ChaCha8Rng) -> Option<BTreeSet<(usize, usize)>>,
{
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, attempt]));
        if let Some(edges) = generate(&mut rng) {
            let topo = Topology::from_set(n, edges);
            if topo.is_connected() {
                return Ok(topo);
            }
        }
    }
    Err(NetsimError::UnsatisfiableParams(format!(
        "no connected graph after {MAX_ATTEMPTS} attempts"
    )))
}

/// Pairs degree stubs one at a time, only ever choosing a partner that keeps
/// the graph simple; a dead end restarts the attempt.
fn random_regular(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Option<BTreeSet<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    let mut edges = BTreeSet::new();
    while !stubs.is_empty() {
        let u = stubs.swap_remove(rng.gen_range(0..stubs.len()));
        let partners: Vec<usize> = (0..stubs.len())
            .filter(|&j| stubs[j] != u && !edges.contains(&norm(u, stubs[j])))
            .collect();
        let &j = partners.choose(rng)?;
        let v = stubs.swap_remove(j);
        edges.insert(norm(u, v));
    }
    Some(edges)
}

/// Ring lattice with `d / 2` neighbours per side; each lattice edge is
/// rewired to a uniformly chosen endpoint with probability `beta`.
fn small_world(n: usize, d: usize, beta: f64, rng: &mut ChaCha8Rng) -> Option<BTreeSet<(usize, usize)>> {
    let mut edges: BTreeSet<(usize, usize)> = (0..n)
        .flat_map(|i| (1..=d / 2).map(move |j| norm(i, (i + j) % n)))
        .collect();
    for j in 1..=d / 2 {
        for i in 0..n {
            let old = norm(i, (i + j) % n);
            if !rng.gen_bool(beta) || !edges.contains(&old) {
                continue;
            }
            let choices: Vec<usize> = (0..n)
                .filter(|&k| k != i && !edges.contains(&norm(i, k)))
                .collect();
            if let Some(&k) = choices.choose(rng) {
                edges.remove(&old);
                edges.insert(norm(i, k));
            }
        }
    }
    Some(edges)
}
