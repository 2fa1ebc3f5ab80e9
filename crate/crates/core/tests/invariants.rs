use std::collections::{BTreeMap, BTreeSet};

use nc3n_core::ccn::{
    Action, ContentName, DataPacket, FaceId, Forwarder, ForwarderConfig, Interest, TraceKind, TraceRecord,
};
use nc3n_core::sim::scenario::CcnParams;
use nc3n_core::sim::{
    run_scenario, ConsumerSpec, LinkSpec, NodeConfig, NodeSpec, Role, ScenarioConfig, ScenarioKind, Scheduler,
    SimError, Topology,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Interest { face: u32, chunk: u32, nonce: u64 },
    Data { chunk: u32 },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u32..3, 1u32..4, any::<u64>()).prop_map(|(face, chunk, nonce)| Op::Interest { face, chunk, nonce }),
        1 => (1u32..4).prop_map(|chunk| Op::Data { chunk }),
    ]
}

fn node(id: &str, role: Role) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        role,
        config: NodeConfig::default(),
    }
}

fn ccn_config(name: &str, seed: u64, compare: bool, params: CcnParams) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed,
        compare,
        nc: false,
        max_time: 600.0,
        scenario: ScenarioKind::Multipath(params),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Data only goes to faces with a pending request for it, and concurrent
    /// requests for one name go upstream once.
    #[test]
    fn pit_soundness_and_aggregation(ops in prop::collection::vec(op(), 1..60), capacity in 0usize..3) {
        let object: ContentName = "a/b".parse().unwrap();
        let config = ForwarderConfig { cache_capacity: capacity, ..ForwarderConfig::default() };
        let mut fwd = Forwarder::new(config, (0..4).map(FaceId).collect(), 7);
        fwd.fib_mut().insert(&object, vec![FaceId(3)]);
        let mut pending: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        let mut upstream: BTreeMap<u32, usize> = BTreeMap::new();
        for (step, op) in ops.into_iter().enumerate() {
            let now = step as f64 * 1e-3;
            match op {
                Op::Interest { face, chunk, nonce } => {
                    for action in fwd.on_interest(Interest::new(object.with_chunk(chunk), nonce), FaceId(face), now) {
                        match action {
                            Action::Forward { faces, .. } | Action::Broadcast { faces, .. } => {
                                prop_assert!(!faces.contains(&FaceId(face)));
                                *upstream.entry(chunk).or_default() += 1;
                                pending.entry(chunk).or_default().insert(face);
                            }
                            Action::Aggregate { face: f } => {
                                pending.entry(chunk).or_default().insert(f.0);
                            }
                            Action::ReplyFromCs { face: f, .. } => prop_assert_eq!(f.0, face),
                            _ => {}
                        }
                    }
                    prop_assert!(upstream.get(&chunk).copied().unwrap_or(0) <= 1);
                }
                Op::Data { chunk } => {
                    let data = DataPacket::plain(object.with_chunk(chunk), chunk, vec![chunk as u8; 8]);
                    let want = pending.remove(&chunk).unwrap_or_default();
                    let mut sent = BTreeSet::new();
                    for action in fwd.on_data(data, FaceId(3), now) {
                        if let Action::ForwardData { faces, .. } = action {
                            for f in faces {
                                prop_assert!(want.contains(&f.0), "data for chunk {} sent to face {}", chunk, f.0);
                                prop_assert!(sent.insert(f.0), "face {} served twice", f.0);
                            }
                        }
                    }
                    prop_assert_eq!(sent, want);
                    upstream.remove(&chunk);
                }
            }
        }
    }

    /// Events leave the scheduler in time order, ties in insertion order,
    /// and nothing can be scheduled in the past.
    #[test]
    fn scheduler_is_causal(ops in prop::collection::vec((any::<bool>(), 0u8..4), 1..200)) {
        let mut s: Scheduler<u64> = Scheduler::new();
        let mut next = 0u64;
        let mut last: Option<(f64, u64)> = None;
        for (push, delta) in ops {
            if push {
                s.schedule(s.now() + f64::from(delta) * 0.5, next).unwrap();
                next += 1;
            } else if let Some((t, id)) = s.pop_until(f64::INFINITY) {
                if let Some((lt, lid)) = last {
                    prop_assert!(t > lt || (t == lt && id > lid));
                }
                last = Some((t, id));
                if s.now() > 0.0 {
                    prop_assert!(matches!(s.schedule(s.now() - 0.25, 0), Err(SimError::Internal(_))));
                }
            }
        }
    }

    /// On a loss-free chain every Data retraces its Interest's hops backwards.
    #[test]
    fn data_follows_the_reverse_path(
        latencies in prop::collection::vec(0.001f64..0.05, 2..6),
        chunks in 1usize..6,
        window in 1usize..4,
        seed in any::<u64>(),
    ) {
        let hops = latencies.len();
        let names: Vec<String> = (0..=hops)
            .map(|i| match i {
                0 => "C".to_string(),
                i if i == hops => "S".to_string(),
                i => format!("R{i}"),
            })
            .collect();
        let nodes = names
            .iter()
            .enumerate()
            .map(|(i, n)| node(n, match i {
                0 => Role::Consumer,
                i if i == hops => Role::Repository,
                _ => Role::Router,
            }))
            .collect();
        let links = latencies.iter().enumerate().map(|(i, &l)| LinkSpec::new(&names[i], &names[i + 1], l)).collect();
        let mut params = CcnParams { topology: Some(Topology { nodes, links }), ..CcnParams::default() };
        params.workload.chunks = Some(chunks);
        params.workload.consumers = vec![ConsumerSpec { window, ..ConsumerSpec::new("C") }];
        let out = run_scenario(&ccn_config("chain", seed, false, params)).unwrap();
        let run = &out.arms[0];
        prop_assert!(run.metrics.consumers["C"].complete);

        let mut by_name: BTreeMap<&str, (Vec<&TraceRecord>, Vec<&TraceRecord>)> = BTreeMap::new();
        for r in &run.trace {
            let e = by_name.entry(r.name.as_str()).or_default();
            match r.kind {
                TraceKind::Interest => e.0.push(r),
                TraceKind::Data => e.1.push(r),
            }
        }
        prop_assert_eq!(by_name.len(), chunks);
        for (name, (ints, datas)) in by_name {
            let mut path: Vec<&str> = vec!["C"];
            path.extend(ints.iter().map(|r| r.node.as_str()));
            let back: Vec<&str> = path.iter().rev().skip(1).copied().collect();
            let got: Vec<&str> = datas.iter().map(|r| r.node.as_str()).collect();
            prop_assert_eq!(&got, &back, "{}", name);
            let last_int = ints.last().unwrap().time;
            prop_assert!(datas.iter().all(|d| d.time > last_int));
        }
    }

    /// Under random loss the per-consumer accounting balances in both arms,
    /// and the uncoded arm never carries coding vectors.
    #[test]
    fn lossy_runs_conserve_and_gate_coding(
        loss_a in 0.0f64..0.4,
        loss_b in 0.0f64..0.4,
        chunks in 1usize..12,
        window in 1usize..4,
        seed in any::<u64>(),
    ) {
        let topology = Topology {
            nodes: vec![node("C", Role::Consumer), node("S", Role::Repository)],
            links: vec![
                LinkSpec { loss: loss_a, ..LinkSpec::new("C", "S", 0.01) },
                LinkSpec { loss: loss_b, ..LinkSpec::new("C", "S", 0.03) },
            ],
        };
        let mut params = CcnParams { topology: Some(topology), ..CcnParams::default() };
        params.workload.chunks = Some(chunks);
        params.workload.consumers = vec![ConsumerSpec { window, ..ConsumerSpec::new("C") }];
        let out = run_scenario(&ccn_config("lossy", seed, true, params)).unwrap();
        for arm in &out.arms {
            let c = &arm.metrics.consumers["C"];
            prop_assert_eq!(c.innovative + c.wasted, c.received);
            prop_assert_eq!(c.received + c.lost + c.in_flight, c.addressed);
            prop_assert!(c.complete || c.abandoned > 0);
            if c.complete {
                prop_assert!(c.content_verified);
            }
        }
        prop_assert!(out.arms[0].trace.iter().all(|r| r.vector.is_empty()));
    }
}
