use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proptest::prelude::*;
use spv_core::fixture::{build_fixture, FixtureSpec};
use spv_core::hash::Hash;
use spv_core::netsim::{run, run_and_measure, Adversary, Detail, EventKind, Message, Scenario, SimConfig, Trace, TopologySpec};

fn topology() -> impl Strategy<Value = TopologySpec> {
    prop_oneof![
        (2usize..20).prop_map(|n| TopologySpec::Path { n_nodes: n }),
        (3usize..20).prop_map(|n| TopologySpec::Ring { n_nodes: n }),
        (2usize..12).prop_map(|n| TopologySpec::Complete { n_nodes: n }),
        (4usize..12, any::<u64>()).prop_map(|(h, seed)| TopologySpec::DRegularRandom {
            n_nodes: 2 * h,
            degree: 3,
            seed
        }),
        (8usize..24, 0.0f64..0.5, any::<u64>()).prop_map(|(n, p, seed)| TopologySpec::SmallWorld {
            n_nodes: n,
            degree: 4,
            rewire_prob: p,
            seed
        }),
    ]
}

fn config() -> impl Strategy<Value = (SimConfig, Scenario)> {
    (
        topology(),
        0.0f64..=1.0,
        0.0f64..0.3,
        prop::collection::vec(any::<u8>(), 0..4),
        any::<u64>(),
        prop::option::of(0.5f64..5.0),
    )
        .prop_map(|(topology, forward_prob, loss_prob, bad, seed, rate)| {
            let n = topology.build().unwrap().n_nodes();
            let mut c = SimConfig::new(topology);
            c.forward_prob = forward_prob;
            c.loss_prob = loss_prob;
            c.seed = seed;
            c.rate_limit_per_s = rate;
            for b in bad {
                let node = 1 + usize::from(b) % (n - 1);
                c.adversaries.insert(node, Adversary::DropAll);
            }
            let scenario = Scenario {
                origin: 0,
                message: Message::Transaction { txid: Hash([seed as u8; 32]), fee: 5 },
                duration_s: 1e6,
            };
            (c, scenario)
        })
}

fn verify_counts(trace: &Trace) -> BTreeMap<(usize, Hash), usize> {
    let mut counts = BTreeMap::new();
    for e in trace.events.iter().filter(|e| e.kind == EventKind::Verify) {
        *counts.entry((e.node, e.msg)).or_insert(0) += 1;
    }
    counts
}

/// Every receive on a directed link is matched by an earlier send on it.
fn causal(trace: &Trace) -> bool {
    let mut sends: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut receives: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for e in &trace.events {
        match e.kind {
            EventKind::Send => sends.entry((e.node, e.peer.unwrap())).or_default().push(e.time_s),
            EventKind::Receive => receives.entry((e.peer.unwrap(), e.node)).or_default().push(e.time_s),
            _ => {}
        }
    }
    receives.into_iter().all(|(link, mut r)| {
        let mut s = sends.remove(&link).unwrap_or_default();
        r.sort_by(f64::total_cmp);
        s.sort_by(f64::total_cmp);
        r.len() <= s.len() && r.iter().zip(&s).all(|(rt, st)| rt >= st)
    })
}

fn honest_reachable(config: &SimConfig, origin: usize) -> BTreeSet<usize> {
    let topo = config.topology.build().unwrap();
    let mut seen = BTreeSet::from([origin]);
    let mut queue = VecDeque::from([origin]);
    while let Some(v) = queue.pop_front() {
        for &w in topo.neighbors(v) {
            if !config.adversaries.contains_key(&w) && seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn same_inputs_same_trace((c, s) in config()) {
        let a = run(&c, &s).unwrap();
        let b = run(&c, &s).unwrap();
        prop_assert_eq!(a.to_jsonl(), b.to_jsonl());
        prop_assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn receives_follow_sends((c, s) in config()) {
        let t = run(&c, &s).unwrap();
        prop_assert!(causal(&t));
        let times: Vec<f64> = t.events.iter().map(|e| e.time_s).collect();
        prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn at_most_one_verify_per_node((c, s) in config()) {
        let t = run(&c, &s).unwrap();
        prop_assert!(verify_counts(&t).values().all(|&n| n == 1));
    }

    #[test]
    fn flooding_reaches_honest_component((mut c, s) in config()) {
        c.forward_prob = 1.0;
        c.loss_prob = 0.0;
        c.rate_limit_per_s = None;
        let t = run(&c, &s).unwrap();
        let verified: BTreeSet<usize> = verify_counts(&t).keys().map(|(v, _)| *v).collect();
        prop_assert_eq!(verified, honest_reachable(&c, s.origin));
    }

    #[test]
    fn fee_floor_stops_cheap_transactions((mut c, s) in config(), floor in 6u64..100) {
        c.fee_floor = floor;
        let (t, m, _) = run_and_measure(&c, &s).unwrap();
        prop_assert!(t.events.iter().all(|e| e.kind != EventKind::Send));
        prop_assert_eq!(m.delivery_fraction, 1.0 / t.n_nodes as f64);
    }
}

#[test]
fn modified_headers_are_dropped_downstream() {
    let f = build_fixture(&FixtureSpec::new(4, 1, 3)).unwrap();
    let mut c = SimConfig::new(TopologySpec::Path { n_nodes: 5 });
    c.adversaries.insert(2, Adversary::ModifyHeaders);
    let s = Scenario {
        origin: 0,
        message: Message::Headers { headers: f.headers.clone() },
        duration_s: 1e6,
    };
    let t = run(&c, &s).unwrap();
    let verified: BTreeSet<usize> = verify_counts(&t).keys().map(|(v, _)| *v).collect();
    assert_eq!(verified, BTreeSet::from([0, 1]));
    let invalid: Vec<usize> = t
        .events
        .iter()
        .filter(|e| e.detail == Some(Detail::Invalid))
        .map(|e| e.node)
        .collect();
    assert_eq!(invalid, vec![3]);
    assert!(t.inventories[3].is_empty() && t.inventories[4].is_empty());
}

#[test]
fn honest_headers_reach_everyone() {
    let f = build_fixture(&FixtureSpec::new(4, 1, 3)).unwrap();
    let c = SimConfig::new(TopologySpec::Ring { n_nodes: 7 });
    let s = Scenario {
        origin: 3,
        message: Message::Headers { headers: f.headers },
        duration_s: 1e6,
    };
    let (_, m, _) = run_and_measure(&c, &s).unwrap();
    assert_eq!(m.delivery_fraction, 1.0);
}

#[test]
fn forward_probability_sweep_on_regular_graph() {
    use spv_core::netsim::{sweep, SweepGrid};

    let grid = SweepGrid {
        base: SimConfig::new(TopologySpec::DRegularRandom { n_nodes: 64, degree: 6, seed: 0 }),
        scenario: Scenario {
            origin: 0,
            message: Message::Transaction { txid: Hash([9; 32]), fee: 1 },
            duration_s: 1e9,
        },
        topologies: vec![],
        forward_probs: vec![0.2, 0.5, 1.0],
        seeds: vec![],
    };
    assert_eq!(sweep(&grid.configs(), &grid.scenario).unwrap().len(), 3);

    let seeded = SweepGrid { seeds: (0..32).collect(), ..grid };
    let rows = sweep(&seeded.configs(), &seeded.scenario).unwrap();
    // Time to reach every node; a run that misses a node never completes.
    let median = |chunk: &[spv_core::netsim::SweepRow], all_nodes: bool| {
        let mut taus: Vec<f64> = chunk
            .iter()
            .map(|r| if all_nodes && r.delivery < 1.0 { f64::INFINITY } else { r.tau_s })
            .collect();
        taus.sort_by(f64::total_cmp);
        (taus[15] + taus[16]) / 2.0
    };
    let full: Vec<f64> = rows.chunks(32).map(|c| median(c, true)).collect();
    let reached: Vec<f64> = rows.chunks(32).map(|c| median(c, false)).collect();
    eprintln!("median tau by p_f 0.2/0.5/1.0: all nodes {full:?}, reached nodes {reached:?}");
    assert!(full.windows(2).all(|w| w[1] <= w[0]), "{full:?}");
    assert!(full[2].is_finite());
}
