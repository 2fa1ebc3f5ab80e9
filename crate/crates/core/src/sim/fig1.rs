//! Source push over parallel relay paths: no Interests, no retransmission.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ccn::{ContentName, DataPacket, FaceId, Packet};
use crate::nc3n::coding_window;

use super::ccn_net::{arm_name, check_conservation, link_metrics, trace_record, ConsumerApp, RunOutput};
use super::engine::Scheduler;
use super::links::{LinkTable, TxOutcome};
use super::metrics::Metrics;
use super::topology::{LinkSpec, NodeConfig, NodeSpec, Role, ScriptedDrop, Topology};
use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PushParams {
    pub paths: usize,
    pub chunks: usize,
    /// Generation size; the default codes the whole object together.
    pub k: usize,
    pub chunk_size: usize,
    pub latency: f64,
    /// Drop the first packet the source sends on every path.
    pub drop_first: bool,
    pub object: String,
}

impl Default for PushParams {
    fn default() -> Self {
        Self {
            paths: 2,
            chunks: 3,
            k: 3,
            chunk_size: 1024,
            latency: 0.01,
            drop_first: true,
            object: "www.foo.com/Dir/File".into(),
        }
    }
}

impl PushParams {
    /// `S` feeds relays `P1..Pn`, each of which feeds `D`.
    pub fn topology(&self) -> Topology {
        let mut nodes = vec![NodeSpec {
            id: "S".into(),
            role: Role::Repository,
            config: NodeConfig::default(),
        }];
        let mut links = Vec::new();
        for p in 1..=self.paths {
            let relay = format!("P{p}");
            nodes.push(NodeSpec {
                id: relay.clone(),
                role: Role::Router,
                config: NodeConfig::default(),
            });
            let mut first = LinkSpec::new("S", &relay, self.latency).with_id(&format!("path{p}a"));
            if self.drop_first {
                first.drops.push(ScriptedDrop {
                    from: "S".into(),
                    ordinal: 1,
                });
            }
            links.push(first);
            links.push(LinkSpec::new(&relay, "D", self.latency).with_id(&format!("path{p}b")));
        }
        nodes.push(NodeSpec {
            id: "D".into(),
            role: Role::Consumer,
            config: NodeConfig::default(),
        });
        Topology { nodes, links }
    }
}

/// The source sends every chunk (or, coded, one combination per chunk) on
/// each path at time zero; relays pass packets on to the sink.
pub fn run_push(scenario: &str, params: &PushParams, nc: bool, seed: u64) -> Result<RunOutput, SimError> {
    let k = params.k;
    if params.paths == 0 || params.chunks == 0 || params.chunk_size == 0 || k == 0 {
        return Err(SimError::Config(
            "paths, chunks, chunk_size and k must be positive".into(),
        ));
    }
    let object: ContentName = params
        .object
        .parse()
        .map_err(|e| SimError::Config(format!("object name: {e}")))?;
    let object = object.object();
    let res = params.topology().resolve()?;
    let reference = super::object_payload(seed, params.chunks, params.chunk_size);
    let gens = coding_window(&reference, k).map_err(|e| SimError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut links = LinkTable::new(res.links.clone(), res.scripted.clone(), seed);
    let sink = res.index("D").expect("canonical sink");
    let sink_faces = (0..res.faces[sink].len() as u32).map(FaceId).collect();
    let mut d = ConsumerApp::new(sink, sink_faces, None, nc, object.clone(), reference.clone(), k, seed);

    // Coded paths each carry their own independent combinations.
    let mut batch = || {
        let mut out = Vec::new();
        for g in &gens {
            for i in 0..g.k() {
                out.push(if nc {
                    DataPacket::coded(object.with_nc_marker(), g.encode_random(&mut rng))
                } else {
                    let c = (g.gen_id() as usize + i + 1) as u32;
                    DataPacket::plain(object.with_chunk(c), c, reference[c as usize - 1].clone())
                });
            }
        }
        out
    };

    let mut sched: Scheduler<(usize, FaceId, DataPacket)> = Scheduler::new();
    let mut trace = Vec::new();
    let mut in_flight = 0u64;
    let source = res.index("S").expect("canonical source");
    let transmit = |sched: &mut Scheduler<(usize, FaceId, DataPacket)>,
                    links: &mut LinkTable,
                    d: &mut ConsumerApp,
                    in_flight: &mut u64,
                    node: usize,
                    face: usize,
                    p: DataPacket|
     -> Result<(), SimError> {
        let (link, dir) = res.faces[node][face];
        let (_, dest) = links.endpoints(link, dir);
        let bytes = super::ccn_net::packet_bytes(&Packet::Data(p.clone()));
        if dest == sink {
            d.metrics.addressed += 1;
        }
        match links.transmit(link, dir, sched.now(), 1.0, bytes) {
            TxOutcome::Arrives(t) => {
                if dest == sink {
                    *in_flight += 1;
                }
                sched.schedule(t, (dest, res.arrival_face(dest, link, dir), p))
            }
            TxOutcome::Lost => {
                if dest == sink {
                    d.metrics.lost += 1;
                }
                Ok(())
            }
        }
    };

    for face in 0..res.faces[source].len() {
        for p in batch() {
            transmit(&mut sched, &mut links, &mut d, &mut in_flight, source, face, p)?;
        }
    }
    while let Some((t, (node, face, p))) = sched.pop_until(f64::INFINITY) {
        trace.push(trace_record(t, &res.names[node], face, &Packet::Data(p.clone())));
        if node == sink {
            in_flight -= 1;
            d.on_data(&p, face, u64::MAX, t);
        } else {
            for out in 0..res.faces[node].len() {
                if out != face.0 as usize {
                    transmit(&mut sched, &mut links, &mut d, &mut in_flight, node, out, p.clone())?;
                }
            }
        }
    }

    let (m, _) = d.finish(in_flight);
    check_conservation("D", &m)?;
    let mut metrics = Metrics {
        scenario: scenario.into(),
        kind: "fig1".into(),
        arm: arm_name(nc).into(),
        seed,
        events: sched.dispatched(),
        end_time: sched.now(),
        links: link_metrics(&res, &links),
        ..Metrics::default()
    };
    metrics.consumers.insert("D".into(), m);
    Ok(RunOutput { metrics, trace })
}
