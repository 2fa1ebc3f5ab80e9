//! Two publish/subscribe flows over in-packet Bloom-filter forwarding, with
//! an optional coded segment over the partition their trees share.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bloomfwd::{
    analytic_fp_rate, forward_match, link_id, plan_coded_subgraph, DeliveryTree, Edge, EgressDecoder, EncapPacket,
    FlowId, FlowPacket, Graph, IngressCoder, LinkId, NcBinding, Trigger, ZFilter,
};
use crate::ccn::{FaceId, TraceKind, TraceRecord};

use super::ccn_net::{link_metrics, RunOutput};
use super::engine::Scheduler;
use super::links::{LinkTable, TxOutcome};
use super::metrics::{BindingSummary, BloomMetrics, Metrics};
use super::topology::{LinkSpec, NodeConfig, NodeSpec, Resolved, Role, Topology};
use super::SimError;

/// Rounding allowance when a timer fires exactly one timeout after its cause.
const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub id: u64,
    pub publisher: String,
    pub subscribers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TriggerSpec {
    #[default]
    FalsePositiveRate,
    Resilience,
    Congestion {
        load_a: f64,
        load_b: f64,
        capacity: f64,
    },
}

impl From<TriggerSpec> for Trigger {
    fn from(t: TriggerSpec) -> Self {
        match t {
            TriggerSpec::FalsePositiveRate => Trigger::FalsePositiveRate,
            TriggerSpec::Resilience => Trigger::Resilience,
            TriggerSpec::Congestion {
                load_a,
                load_b,
                capacity,
            } => Trigger::Congestion {
                load_a,
                load_b,
                capacity,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BloomParams {
    /// Inline network; the canonical two-feeder trunk is built when absent.
    pub topology: Option<Topology>,
    /// Exactly two flows, required with an inline topology.
    pub flows: Vec<FlowSpec>,
    /// Relay nodes between the merge point and the split point.
    pub trunk: usize,
    /// Leaf neighbours hung off every non-leaf node.
    pub stubs: usize,
    pub k: usize,
    pub packets_per_flow: u64,
    pub interval: f64,
    pub latency: f64,
    pub min_payload: usize,
    pub max_payload: usize,
    pub trigger: TriggerSpec,
    /// Seed for link identifiers; defaults to the run seed.
    pub filter_seed: Option<u64>,
    /// Ingress flush and egress expiry timeout; defaults to ten link latencies.
    pub timeout: Option<f64>,
}

impl Default for BloomParams {
    fn default() -> Self {
        Self {
            topology: None,
            flows: Vec::new(),
            trunk: 20,
            stubs: 4,
            k: 2,
            packets_per_flow: 8,
            interval: 0.01,
            latency: 0.005,
            min_payload: 32,
            max_payload: 64,
            trigger: TriggerSpec::FalsePositiveRate,
            filter_seed: None,
            timeout: None,
        }
    }
}

fn node(id: &str, role: Role) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        role,
        config: NodeConfig::default(),
    }
}

impl BloomParams {
    /// Feeders `pubA-a1-a2-X` and `pubB-b1-b2-X`, trunk `X-t1-..-tN-Y`, then
    /// `Y-s_common`, `Y-sa1-sa2` and `Y-sb1-sb2`, each backbone node carrying
    /// `stubs` leaves.
    pub fn canonical(&self) -> (Topology, Vec<FlowSpec>) {
        let strs = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<String>>();
        let mut trunk = vec!["X".to_string()];
        trunk.extend((1..=self.trunk).map(|i| format!("t{i}")));
        trunk.push("Y".into());
        let paths = [
            strs(&["pubA", "a1", "a2", "X"]),
            strs(&["pubB", "b1", "b2", "X"]),
            trunk,
            strs(&["Y", "s_common"]),
            strs(&["Y", "sa1", "sa2"]),
            strs(&["Y", "sb1", "sb2"]),
        ];
        let mut names: Vec<String> = Vec::new();
        let mut links = Vec::new();
        for p in &paths {
            for n in p {
                if !names.contains(n) {
                    names.push(n.clone());
                }
            }
            for w in p.windows(2) {
                links.push(LinkSpec::new(&w[0], &w[1], self.latency));
            }
        }
        let backbone = names.clone();
        for b in &backbone {
            for i in 1..=self.stubs {
                let leaf = format!("{b}.s{i}");
                names.push(leaf.clone());
                links.push(LinkSpec::new(b, &leaf, self.latency));
            }
        }
        let subscribers = ["s_common", "sa2", "sb2"];
        let nodes = names
            .iter()
            .map(|n| {
                let role = if n.starts_with("pub") {
                    Role::Repository
                } else if subscribers.contains(&n.as_str()) {
                    Role::Consumer
                } else {
                    Role::Router
                };
                node(n, role)
            })
            .collect();
        let flows = vec![
            FlowSpec {
                id: 0xA,
                publisher: "pubA".into(),
                subscribers: vec!["s_common".into(), "sa2".into()],
            },
            FlowSpec {
                id: 0xB,
                publisher: "pubB".into(),
                subscribers: vec!["s_common".into(), "sb2".into()],
            },
        ];
        (Topology { nodes, links }, flows)
    }

    fn network(&self) -> Result<(Topology, Vec<FlowSpec>), SimError> {
        match &self.topology {
            Some(t) => {
                if self.flows.len() != 2 {
                    return Err(SimError::Config("an inline topology needs exactly two flows".into()));
                }
                Ok((t.clone(), self.flows.clone()))
            }
            None => {
                if !self.flows.is_empty() {
                    return Err(SimError::Config(
                        "flows may only be given with an inline topology".into(),
                    ));
                }
                Ok(self.canonical())
            }
        }
    }
}

#[derive(Debug, Clone)]
enum BPacket {
    Flow(FlowPacket),
    Coded(EncapPacket),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Flow(u64, u64),
    Coded(u32, Vec<u8>),
}

impl BPacket {
    fn key(&self) -> Key {
        match self {
            BPacket::Flow(p) => Key::Flow(p.flow.0, p.seq),
            BPacket::Coded(e) => Key::Coded(e.gen_seq, e.vector.as_slice().to_vec()),
        }
    }

    fn wire_len(&self) -> u64 {
        match self {
            BPacket::Flow(p) => (8 + 8 + 32 + p.payload.len()) as u64,
            BPacket::Coded(e) => e.to_wire().len() as u64,
        }
    }
}

enum Ev {
    Emit { flow: usize, seq: u64 },
    Arrive { node: usize, from: usize, packet: BPacket },
    Flush,
    Expire(usize),
}

struct OutLink {
    to: usize,
    link: usize,
    dir: usize,
    id: LinkId,
}

struct BloomNet {
    res: Resolved,
    links: LinkTable,
    out: Vec<Vec<OutLink>>,
    flows: Vec<(FlowId, usize, BTreeSet<usize>)>,
    filters: Vec<ZFilter>,
    intended: Vec<BTreeSet<Edge>>,
    binding: Option<NcBinding>,
    ingress: Option<IngressCoder>,
    egress: BTreeMap<usize, EgressDecoder>,
    seen: Vec<BTreeSet<Key>>,
    payloads: Vec<Vec<Vec<u8>>>,
    timeout: f64,
    rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
    deliveries: BTreeMap<usize, Vec<String>>,
    fp: u64,
    flow_tx: u64,
    coded_tx: u64,
}

fn digest8(payload: &[u8]) -> String {
    Sha256::digest(payload)[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl BloomNet {
    fn flow_index(&self, f: FlowId) -> Option<usize> {
        self.flows.iter().position(|(id, _, _)| *id == f)
    }

    fn send(&mut self, s: &mut Scheduler<Ev>, v: usize, from: Option<usize>, packet: &BPacket) -> Result<(), SimError> {
        let (filter, intended) = match packet {
            BPacket::Flow(p) => {
                let i = self
                    .flow_index(p.flow)
                    .ok_or_else(|| SimError::Internal("unknown flow".into()))?;
                (p.zfilter, &self.intended[i])
            }
            BPacket::Coded(_) => {
                let b = self
                    .binding
                    .as_ref()
                    .ok_or_else(|| SimError::Internal("coded packet without binding".into()))?;
                (b.filter_coded, &b.shared_edges)
            }
        };
        let mut sends = Vec::new();
        for o in &self.out[v] {
            if Some(o.to) == from || !forward_match(&filter, &o.id) {
                continue;
            }
            if !intended.contains(&Edge::new(v as u32, o.to as u32)) {
                self.fp += 1;
            }
            sends.push((o.to, o.link, o.dir));
        }
        for (to, link, dir) in sends {
            match packet {
                BPacket::Flow(_) => self.flow_tx += 1,
                BPacket::Coded(_) => self.coded_tx += 1,
            }
            if let TxOutcome::Arrives(t) = self.links.transmit(link, dir, s.now(), 1.0, packet.wire_len()) {
                s.schedule(
                    t,
                    Ev::Arrive {
                        node: to,
                        from: v,
                        packet: packet.clone(),
                    },
                )?;
            }
        }
        Ok(())
    }

    fn process(
        &mut self,
        s: &mut Scheduler<Ev>,
        v: usize,
        from: Option<usize>,
        packet: BPacket,
    ) -> Result<(), SimError> {
        if !self.seen[v].insert(packet.key()) {
            return Ok(());
        }
        let now = s.now();
        match &packet {
            BPacket::Flow(p) => {
                if let Some(i) = self.flow_index(p.flow) {
                    if self.flows[i].2.contains(&v) {
                        self.deliveries.entry(v).or_default().push(format!(
                            "{}/{}/{}",
                            p.flow,
                            p.seq,
                            digest8(&p.payload)
                        ));
                    }
                }
                let at_ingress = self.binding.as_ref().is_some_and(|b| b.ingress as usize == v)
                    && self
                        .binding
                        .as_ref()
                        .is_some_and(|b| p.flow == b.parents.0 || p.flow == b.parents.1);
                if at_ingress {
                    let coder = self.ingress.as_mut().expect("ingress coder exists with binding");
                    let coded = coder
                        .push(p.clone(), now, &mut self.rng)
                        .map_err(|e| SimError::Internal(e.to_string()))?;
                    if coder.buffered() > 0 {
                        s.schedule(now + self.timeout, Ev::Flush)?;
                    }
                    for e in coded {
                        self.process(s, v, None, BPacket::Coded(e))?;
                    }
                }
            }
            BPacket::Coded(e) => {
                if let Some(dec) = self.egress.get_mut(&v) {
                    let restored = dec.absorb(e, now).map_err(|e| SimError::Internal(e.to_string()))?;
                    if dec.pending() > 0 {
                        s.schedule(now + self.timeout, Ev::Expire(v))?;
                    }
                    if let Some((a, b)) = restored {
                        for p in a.into_iter().chain(b) {
                            self.process(s, v, None, BPacket::Flow(p))?;
                        }
                    }
                }
            }
        }
        self.send(s, v, from, &packet)
    }

    fn handle(&mut self, s: &mut Scheduler<Ev>, now: f64, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::Emit { flow, seq } => {
                let (id, root, _) = self.flows[flow];
                let p = FlowPacket {
                    flow: id,
                    seq,
                    zfilter: self.filters[flow],
                    payload: self.payloads[flow][seq as usize].clone(),
                };
                self.process(s, root, None, BPacket::Flow(p))
            }
            Ev::Arrive { node, from, packet } => {
                let face = self.res.faces[node]
                    .iter()
                    .position(|&(l, d)| self.links.endpoints(l, d).1 == from)
                    .unwrap_or(0);
                let (name, seq, vector) = match &packet {
                    BPacket::Flow(p) => (format!("flow/{}", p.flow), p.seq.to_string(), String::new()),
                    BPacket::Coded(e) => (format!("flow/{}", e.derived), e.gen_seq.to_string(), e.vector.to_hex()),
                };
                self.trace.push(TraceRecord {
                    time: now,
                    node: self.res.names[node].clone(),
                    kind: TraceKind::Data,
                    face: FaceId(face as u32).0,
                    name,
                    nonce_or_gen: seq,
                    vector,
                });
                self.process(s, node, Some(from), packet)
            }
            Ev::Flush => {
                let Some(coder) = self.ingress.as_mut() else {
                    return Ok(());
                };
                let coded = coder
                    .flush_expired(now + SLACK, self.timeout, &mut self.rng)
                    .map_err(|e| SimError::Internal(e.to_string()))?;
                let v = self.binding.as_ref().expect("binding").ingress as usize;
                for e in coded {
                    self.process(s, v, None, BPacket::Coded(e))?;
                }
                Ok(())
            }
            Ev::Expire(v) => {
                if let Some(d) = self.egress.get_mut(&v) {
                    d.expire(now + SLACK, self.timeout);
                }
                Ok(())
            }
        }
    }
}

/// Runs the uncoded baseline (`coded == false`) or the coded arm.
pub fn run_bloom(scenario: &str, params: &BloomParams, coded: bool, seed: u64) -> Result<RunOutput, SimError> {
    if params.k == 0 || params.packets_per_flow == 0 {
        return Err(SimError::Config("k and packets_per_flow must be positive".into()));
    }
    if !(params.interval >= 0.0 && params.latency > 0.0) || params.min_payload > params.max_payload {
        return Err(SimError::Config("invalid timing or payload bounds".into()));
    }
    if params.max_payload >= usize::from(crate::bloomfwd::PAD_LENGTH) {
        return Err(SimError::Config("payloads must fit a 16-bit length field".into()));
    }
    let (topo, flow_specs) = params.network()?;
    let res = topo.resolve()?;
    let fseed = params.filter_seed.unwrap_or(seed);
    let timeout = params.timeout.unwrap_or(10.0 * params.latency);
    if timeout.is_nan() || timeout <= 0.0 {
        return Err(SimError::Config("timeout must be positive".into()));
    }

    let mut graph = Graph::new(res.names.len());
    for l in &res.links {
        graph.add_link(l.a as u32, l.b as u32);
    }
    let lookup = |n: &str| {
        res.index(n)
            .ok_or_else(|| SimError::Config(format!("flow endpoint {n:?} is not a node")))
    };
    let mut trees = Vec::new();
    let mut flows = Vec::new();
    for f in &flow_specs {
        let root = lookup(&f.publisher)?;
        let subs: Vec<u32> = f
            .subscribers
            .iter()
            .map(|s| lookup(s).map(|i| i as u32))
            .collect::<Result<_, _>>()?;
        let tree = DeliveryTree::shortest_path(&graph, FlowId(f.id), root as u32, &subs)
            .ok_or_else(|| SimError::Config(format!("flow {:x} cannot reach all subscribers", f.id)))?;
        flows.push((
            FlowId(f.id),
            root,
            subs.iter().map(|&s| s as usize).collect::<BTreeSet<_>>(),
        ));
        trees.push(tree);
    }
    if flows[0].0 == flows[1].0 {
        return Err(SimError::Config("flow ids must differ".into()));
    }

    let binding = if coded {
        plan_coded_subgraph(&graph, &trees[0], &trees[1], params.trigger.into(), params.k, fseed)
            .map_err(|e| SimError::Config(e.to_string()))?
    } else {
        None
    };
    let (filters, intended) = match &binding {
        Some(b) => (
            vec![b.filter_a_only, b.filter_b_only],
            vec![b.edges_a_only.clone(), b.edges_b_only.clone()],
        ),
        None => (
            trees.iter().map(|t| t.zfilter(fseed)).collect(),
            trees.iter().map(|t| t.edges.clone()).collect(),
        ),
    };

    let mut out: Vec<Vec<OutLink>> = (0..res.names.len()).map(|_| Vec::new()).collect();
    for (v, faces) in res.faces.iter().enumerate() {
        for &(link, dir) in faces {
            let p = &res.links[link];
            let to = if dir == 0 { p.b } else { p.a };
            out[v].push(OutLink {
                to,
                link,
                dir,
                id: link_id(Edge::new(v as u32, to as u32), fseed),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let payloads: Vec<Vec<Vec<u8>>> = (0..2)
        .map(|_| {
            (0..params.packets_per_flow)
                .map(|_| {
                    let mut v = vec![0u8; rng.gen_range(params.min_payload..=params.max_payload)];
                    rng.fill_bytes(&mut v);
                    v
                })
                .collect()
        })
        .collect();

    let mut net = BloomNet {
        links: LinkTable::new(res.links.clone(), res.scripted.clone(), rng.gen()),
        seen: vec![BTreeSet::new(); res.names.len()],
        out,
        flows,
        filters,
        intended,
        ingress: binding.clone().map(IngressCoder::new),
        egress: binding
            .iter()
            .flat_map(|b| {
                b.egress
                    .iter()
                    .map(move |&e| (e as usize, EgressDecoder::new(b.clone())))
            })
            .collect(),
        binding: binding.clone(),
        payloads,
        timeout,
        rng,
        trace: Vec::new(),
        deliveries: BTreeMap::new(),
        fp: 0,
        flow_tx: 0,
        coded_tx: 0,
        res,
    };

    let mut sched = Scheduler::new();
    for seq in 0..params.packets_per_flow {
        for flow in 0..2 {
            sched.schedule(seq as f64 * params.interval, Ev::Emit { flow, seq })?;
        }
    }
    sched.run_until(f64::INFINITY, |s, t, e| net.handle(s, t, e))?;

    let names = &net.res.names;
    let mut deliveries = BTreeMap::new();
    for (_, _, subs) in &net.flows {
        for s in subs {
            let mut d = net.deliveries.get(s).cloned().unwrap_or_default();
            d.sort();
            deliveries.insert(names[*s].clone(), d);
        }
    }
    let (generations_coded, padded_flushes, stalled_packets) = net
        .ingress
        .as_ref()
        .map_or((0, 0, 0), |c| (c.generations, c.padded_flushes, c.stalled_packets));
    let bloom = BloomMetrics {
        tree_a_edges: trees[0].edges.len(),
        tree_b_edges: trees[1].edges.len(),
        analytic_fp_a: analytic_fp_rate(trees[0].edges.len()),
        analytic_fp_b: analytic_fp_rate(trees[1].edges.len()),
        binding: binding.as_ref().map(|b| BindingSummary {
            derived_flow: b.derived.to_string(),
            ingress: names[b.ingress as usize].clone(),
            egress: b.egress.iter().map(|&e| names[e as usize].clone()).collect(),
            shared_edges: b.shared_edges.len(),
            a_only_edges: b.edges_a_only.len(),
            b_only_edges: b.edges_b_only.len(),
        }),
        false_positive_deliveries: net.fp,
        flow_transmissions: net.flow_tx,
        coded_transmissions: net.coded_tx,
        generations_coded,
        generations_decoded: net.egress.values().map(|d| d.decoded_generations).sum(),
        generation_losses: net.egress.values().map(|d| d.lost_generations).sum(),
        padded_flushes,
        stalled_packets,
        deliveries,
    };
    let metrics = Metrics {
        scenario: scenario.into(),
        kind: "bloom_fp".into(),
        arm: if coded { "coded" } else { "baseline" }.into(),
        seed,
        events: sched.dispatched(),
        end_time: sched.now(),
        links: link_metrics(&net.res, &net.links),
        bloom: Some(bloom),
        ..Metrics::default()
    };
    Ok(RunOutput {
        metrics,
        trace: net.trace,
    })
}
