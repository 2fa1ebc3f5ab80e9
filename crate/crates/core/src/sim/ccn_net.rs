use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ccn::{
    ChunkRequest, ContentName, DataPacket, FaceId, Forwarder, ForwarderConfig, Interest, Packet, Producer, TraceKind,
    TraceRecord,
};
use crate::nc3n::make_nc_interest;
use crate::rlnc::{Absorb, DecoderState, GenId};

use super::engine::Scheduler;
use super::links::{LinkTable, TxOutcome};
use super::metrics::{ConsumerMetrics, LinkMetrics, Metrics, RoundMetrics};
use super::topology::{Resolved, Role};
use super::SimError;

pub const MAX_RETRANSMISSIONS: u32 = 16;
pub const INITIAL_RTO: f64 = 1.0;
/// Floor on the retransmission timeout, as in TCP.
pub const MIN_RTO: f64 = 1.0;
const RTT_GAIN: f64 = 0.125;

fn one() -> usize {
    1
}

/// When and how a consumer node fetches the workload object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumerSpec {
    pub node: String,
    #[serde(default)]
    pub start: f64,
    /// Outstanding Interests per face (coded) or chunks in flight (plain).
    #[serde(default = "one")]
    pub window: usize,
    /// Issue the next batch only once every outstanding Interest is answered.
    #[serde(default)]
    pub sync_rounds: bool,
}

impl ConsumerSpec {
    pub fn new(node: &str) -> Self {
        Self {
            node: node.into(),
            start: 0.0,
            window: 1,
            sync_rounds: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Chunk(u32),
    Coded(GenId),
}

#[derive(Debug, Clone)]
struct Outstanding {
    id: u64,
    target: Target,
    sent: Vec<(FaceId, u64)>,
    sent_at: f64,
    retx: u32,
    token: u64,
    batch: u64,
}

pub(crate) struct Request {
    pub face: FaceId,
    pub interest: Interest,
    pub tag: u64,
}

pub(crate) struct Timer {
    pub at: f64,
    pub id: u64,
    pub token: u64,
}

#[derive(Default)]
pub(crate) struct Emit {
    pub requests: Vec<Request>,
    pub timers: Vec<Timer>,
}

/// Consumer state machine: issues Interests, absorbs Data, retransmits.
pub(crate) struct ConsumerApp {
    index: usize,
    faces: Vec<FaceId>,
    window: usize,
    sync_rounds: bool,
    passive: bool,
    nc: bool,
    object: ContentName,
    reference: Vec<Vec<u8>>,
    gens: Vec<(GenId, usize)>,
    decoders: BTreeMap<GenId, DecoderState>,
    held: BTreeMap<u32, Vec<u8>>,
    outstanding: Vec<Outstanding>,
    next_id: u64,
    batches: u64,
    srtt: Option<f64>,
    rng: ChaCha8Rng,
    stopped: bool,
    pub metrics: ConsumerMetrics,
    pub round: RoundMetrics,
}

impl ConsumerApp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        index: usize,
        faces: Vec<FaceId>,
        spec: Option<&ConsumerSpec>,
        nc: bool,
        object: ContentName,
        reference: Vec<Vec<u8>>,
        k: usize,
        seed: u64,
    ) -> Self {
        let n = reference.len();
        let gens: Vec<(GenId, usize)> = (0..n).step_by(k).map(|g| (g as GenId, k.min(n - g))).collect();
        let decoders = gens.iter().map(|&(g, k)| (g, DecoderState::new(g, k))).collect();
        Self {
            index,
            faces,
            window: spec.map_or(1, |s| s.window),
            sync_rounds: spec.is_some_and(|s| s.sync_rounds),
            passive: spec.is_none(),
            nc,
            object,
            reference,
            gens,
            decoders,
            held: BTreeMap::new(),
            outstanding: Vec::new(),
            next_id: 0,
            batches: 0,
            srtt: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stopped: false,
            metrics: ConsumerMetrics::default(),
            round: RoundMetrics::default(),
        }
    }

    pub fn tag(&self, batch: u64) -> u64 {
        ((self.index as u64) << 32) | batch
    }

    fn rto(&self) -> f64 {
        match self.srtt {
            None => INITIAL_RTO,
            Some(s) => (2.0 * s).max(MIN_RTO),
        }
    }

    fn rank(&self, gen: GenId) -> usize {
        self.decoders.get(&gen).map_or(0, DecoderState::rank)
    }

    pub fn is_complete(&self) -> bool {
        if self.nc {
            self.decoders.values().all(DecoderState::is_complete)
        } else {
            self.held.len() == self.reference.len()
        }
    }

    fn next_target(&self) -> Option<Target> {
        if self.nc {
            self.gens
                .iter()
                .find(|&&(g, k)| {
                    let pending = self.outstanding.iter().filter(|o| o.target == Target::Coded(g)).count();
                    self.rank(g) + pending < k
                })
                .map(|&(g, _)| Target::Coded(g))
        } else {
            (1..=self.reference.len() as u32)
                .find(|c| !self.held.contains_key(c) && !self.outstanding.iter().any(|o| o.target == Target::Chunk(*c)))
                .map(Target::Chunk)
        }
    }

    fn interest_for(&self, target: Target, nonce: u64) -> Interest {
        match target {
            Target::Chunk(c) => Interest::new(self.object.with_chunk(c), nonce),
            Target::Coded(g) => make_nc_interest(&self.object, &self.decoders[&g], nonce),
        }
    }

    fn launch(&mut self, target: Target, faces: Vec<FaceId>, now: f64, batch: u64, emit: &mut Emit) {
        let id = self.next_id;
        self.next_id += 1;
        let sent: Vec<(FaceId, u64)> = faces.into_iter().map(|f| (f, self.rng.gen())).collect();
        for &(face, nonce) in &sent {
            emit.requests.push(Request {
                face,
                interest: self.interest_for(target, nonce),
                tag: self.tag(batch),
            });
        }
        self.metrics.interests_sent += sent.len() as u64;
        emit.timers.push(Timer {
            at: now + self.rto(),
            id,
            token: 0,
        });
        self.outstanding.push(Outstanding {
            id,
            target,
            sent,
            sent_at: now,
            retx: 0,
            token: 0,
            batch,
        });
    }

    pub fn issue(&mut self, now: f64) -> Emit {
        let mut emit = Emit::default();
        if self.passive || self.stopped || (self.sync_rounds && !self.outstanding.is_empty()) {
            return emit;
        }
        let batch = self.batches;
        if self.nc {
            for face in self.faces.clone() {
                while self.outstanding.iter().filter(|o| o.sent[0].0 == face).count() < self.window {
                    let Some(t) = self.next_target() else { break };
                    self.launch(t, vec![face], now, batch, &mut emit);
                }
                // An idle face asks for one more combination of the oldest
                // unfinished generation even if enough are already pending
                // elsewhere.
                if !self.sync_rounds && !self.outstanding.iter().any(|o| o.sent[0].0 == face) {
                    if let Some(&(g, _)) = self.gens.iter().find(|&&(g, k)| self.rank(g) < k) {
                        self.launch(Target::Coded(g), vec![face], now, batch, &mut emit);
                    }
                }
            }
        } else {
            while self.outstanding.len() < self.window {
                let Some(t) = self.next_target() else { break };
                self.launch(t, self.faces.clone(), now, batch, &mut emit);
            }
        }
        if !emit.requests.is_empty() {
            if batch == 0 {
                self.round.interests = emit.requests.len() as u64;
            }
            self.batches += 1;
        }
        emit
    }

    pub fn on_data(&mut self, data: &DataPacket, face: FaceId, tag: u64, now: f64) -> Emit {
        self.metrics.received += 1;
        let first_round = !self.passive && tag == self.tag(0);
        if first_round {
            self.round.received += 1;
        }
        let object_matches = data.name.object() == self.object;
        let (innovative, target) = match data.coded_chunk() {
            Some(chunk) if self.nc && object_matches => {
                let gen = chunk.gen_id;
                let inn = self
                    .decoders
                    .get_mut(&gen)
                    .is_some_and(|d| d.add(&chunk) == Ok(Absorb::Innovative));
                (inn, Some(Target::Coded(gen)))
            }
            None if !self.nc && object_matches => match data.name.resolve_implicit() {
                ChunkRequest::Plain(c) => {
                    let fresh = (1..=self.reference.len() as u32).contains(&c) && !self.held.contains_key(&c);
                    if fresh {
                        self.held.insert(c, data.payload.clone());
                    }
                    (fresh, Some(Target::Chunk(c)))
                }
                ChunkRequest::Coded => (false, None),
            },
            _ => (false, None),
        };

        let matched = target.and_then(|t| {
            self.outstanding
                .iter()
                .position(|o| o.target == t && o.sent.iter().any(|(f, _)| *f == face))
        });
        if let Some(pos) = matched {
            let o = self.outstanding.remove(pos);
            let sample = now - o.sent_at;
            if o.retx == 0 {
                self.srtt = Some(match self.srtt {
                    None => sample,
                    Some(s) => s + RTT_GAIN * (sample - s),
                });
            }
            if innovative {
                self.metrics.retrieval_times.push(sample);
            }
        }
        if innovative {
            self.metrics.innovative += 1;
            self.metrics.innovative_times.push(now);
            if first_round {
                self.round.innovative += 1;
            }
            if let Some(Target::Coded(g)) = target {
                if self.decoders[&g].is_complete() {
                    self.outstanding.retain(|o| o.target != Target::Coded(g));
                }
            }
        } else {
            self.metrics.wasted += 1;
        }

        if !self.stopped && self.is_complete() {
            self.stopped = true;
            self.outstanding.clear();
            self.metrics.complete = true;
            self.metrics.completion_time = Some(now);
            self.metrics.content_verified = self.verify();
        }
        self.issue(now)
    }

    pub fn on_retx(&mut self, id: u64, token: u64, now: f64) -> Emit {
        let mut emit = Emit::default();
        let Some(pos) = self.outstanding.iter().position(|o| o.id == id && o.token == token) else {
            return emit;
        };
        if self.outstanding[pos].retx >= MAX_RETRANSMISSIONS {
            self.stopped = true;
            self.metrics.abandoned += 1;
            self.outstanding.clear();
            return emit;
        }
        let rto = self.rto();
        let mut o = self.outstanding.remove(pos);
        o.retx += 1;
        o.token += 1;
        o.sent_at = now;
        for entry in o.sent.iter_mut() {
            entry.1 = self.rng.gen();
            emit.requests.push(Request {
                face: entry.0,
                interest: self.interest_for(o.target, entry.1),
                tag: self.tag(o.batch),
            });
        }
        self.metrics.retransmissions += 1;
        self.metrics.interests_sent += o.sent.len() as u64;
        emit.timers.push(Timer {
            at: now + rto,
            id: o.id,
            token: o.token,
        });
        self.outstanding.insert(pos, o);
        emit
    }

    fn verify(&self) -> bool {
        if self.nc {
            self.gens.iter().all(|&(g, k)| match self.decoders[&g].decode() {
                Ok(v) => (0..k).all(|i| v[i] == self.reference[g as usize + i]),
                Err(_) => false,
            })
        } else {
            self.held.iter().all(|(c, p)| *p == self.reference[*c as usize - 1])
        }
    }

    /// Final counters; `in_flight` is supplied by the network.
    pub fn finish(mut self, in_flight: u64) -> (ConsumerMetrics, RoundMetrics) {
        let m = &mut self.metrics;
        m.in_flight = in_flight;
        if self.nc {
            m.rank = self.decoders.values().map(|d| d.rank() as u64).sum();
            m.held_chunks = self
                .gens
                .iter()
                .flat_map(|&(g, k)| {
                    let d = &self.decoders[&g];
                    (0..k)
                        .filter(|i| d.decoded_source(*i).is_some())
                        .map(move |i| g as u32 + i as u32 + 1)
                })
                .collect();
        } else {
            m.rank = self.held.len() as u64;
            m.held_chunks = self.held.keys().copied().collect();
        }
        m.finish_ratio();
        let r = &mut self.round;
        r.useful_ratio = if r.received == 0 {
            0.0
        } else {
            r.innovative as f64 / r.received as f64
        };
        (self.metrics, self.round)
    }
}

/// Trace line for a packet arriving at `node` on `face`.
pub fn trace_record(time: f64, node: &str, face: FaceId, packet: &Packet) -> TraceRecord {
    let (kind, name, nonce_or_gen, vector) = match packet {
        Packet::Interest(i) => (
            TraceKind::Interest,
            i.name.to_string(),
            TraceRecord::nonce_field(i.nonce),
            String::new(),
        ),
        Packet::Data(d) => match d.coding_meta() {
            Some(m) => (
                TraceKind::Data,
                d.name.to_string(),
                m.gen_id.to_string(),
                m.vector.to_hex(),
            ),
            None => (TraceKind::Data, d.name.to_string(), String::new(), String::new()),
        },
    };
    TraceRecord {
        time,
        node: node.into(),
        kind,
        face: face.0,
        name,
        nonce_or_gen,
        vector,
    }
}

/// Approximate encoded size, used only for byte counters.
pub fn packet_bytes(packet: &Packet) -> u64 {
    let n = match packet {
        Packet::Interest(i) => {
            i.name.to_string().len() + 8 + 3 + i.selector.dof_digest.as_ref().map_or(0, |d| d.to_wire().len())
        }
        Packet::Data(d) => {
            d.name.to_string().len() + d.payload.len() + d.coding_meta().map_or(4, |m| m.to_wire().len())
        }
    };
    n as u64
}

pub(crate) fn link_metrics(res: &Resolved, links: &LinkTable) -> BTreeMap<String, LinkMetrics> {
    let mut out = BTreeMap::new();
    for l in 0..links.len() {
        for dir in 0..2 {
            let st = links.state(l, dir);
            out.insert(
                res.direction_label(l, dir),
                LinkMetrics {
                    transmissions: st.sent,
                    bytes: st.bytes,
                    losses: st.lost,
                },
            );
        }
    }
    out
}

/// Everything needed to run one arm of an Interest/Data scenario.
#[derive(Debug, Clone)]
pub struct CcnRun {
    pub scenario: String,
    pub kind: String,
    pub topology: Resolved,
    pub object: ContentName,
    pub chunks: usize,
    pub chunk_size: usize,
    pub k: usize,
    pub consumers: Vec<ConsumerSpec>,
    pub nc: bool,
    pub seed: u64,
    pub max_time: f64,
}

pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Vec<TraceRecord>,
}

enum Node {
    Consumer(Box<ConsumerApp>),
    Router(Box<Forwarder>),
}

enum Ev {
    Start(usize),
    Arrive {
        node: usize,
        face: FaceId,
        packet: Packet,
        tag: u64,
    },
    Retx {
        node: usize,
        id: u64,
        token: u64,
    },
}

struct Net {
    res: Resolved,
    links: LinkTable,
    nodes: Vec<Node>,
    trace: Vec<TraceRecord>,
    tag_tx: BTreeMap<u64, u64>,
    in_flight: Vec<u64>,
}

impl Net {
    fn send(
        &mut self,
        s: &mut Scheduler<Ev>,
        node: usize,
        face: FaceId,
        packet: Packet,
        tag: u64,
    ) -> Result<(), SimError> {
        let (link, dir) = *self.res.faces[node]
            .get(face.0 as usize)
            .ok_or_else(|| SimError::Internal(format!("node {node} has no face {}", face.0)))?;
        let (_, dest) = self.links.endpoints(link, dir);
        let size = match packet {
            Packet::Interest(_) => 0.0,
            Packet::Data(_) => 1.0,
        };
        *self.tag_tx.entry(tag).or_default() += 1;
        let to_consumer = matches!(packet, Packet::Data(_)) && matches!(self.nodes[dest], Node::Consumer(_));
        if let (true, Node::Consumer(c)) = (to_consumer, &mut self.nodes[dest]) {
            c.metrics.addressed += 1;
        }
        match self.links.transmit(link, dir, s.now(), size, packet_bytes(&packet)) {
            TxOutcome::Arrives(t) => {
                if to_consumer {
                    self.in_flight[dest] += 1;
                }
                let face = self.res.arrival_face(dest, link, dir);
                s.schedule(
                    t,
                    Ev::Arrive {
                        node: dest,
                        face,
                        packet,
                        tag,
                    },
                )
            }
            TxOutcome::Lost => {
                if let (true, Node::Consumer(c)) = (to_consumer, &mut self.nodes[dest]) {
                    c.metrics.lost += 1;
                }
                Ok(())
            }
        }
    }

    fn apply(&mut self, s: &mut Scheduler<Ev>, node: usize, emit: Emit) -> Result<(), SimError> {
        for r in emit.requests {
            self.send(s, node, r.face, Packet::Interest(r.interest), r.tag)?;
        }
        for t in emit.timers {
            s.schedule(
                t.at,
                Ev::Retx {
                    node,
                    id: t.id,
                    token: t.token,
                },
            )?;
        }
        Ok(())
    }

    fn handle(&mut self, s: &mut Scheduler<Ev>, now: f64, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::Start(n) => {
                let emit = match &mut self.nodes[n] {
                    Node::Consumer(c) => c.issue(now),
                    Node::Router(_) => Emit::default(),
                };
                self.apply(s, n, emit)
            }
            Ev::Retx { node, id, token } => {
                let emit = match &mut self.nodes[node] {
                    Node::Consumer(c) => c.on_retx(id, token, now),
                    Node::Router(_) => Emit::default(),
                };
                self.apply(s, node, emit)
            }
            Ev::Arrive {
                node,
                face,
                packet,
                tag,
            } => {
                self.trace.push(trace_record(now, &self.res.names[node], face, &packet));
                match &mut self.nodes[node] {
                    Node::Consumer(c) => {
                        let Packet::Data(d) = &packet else {
                            return Ok(());
                        };
                        self.in_flight[node] -= 1;
                        let emit = c.on_data(d, face, tag, now);
                        self.apply(s, node, emit)
                    }
                    Node::Router(f) => {
                        let actions = match packet {
                            Packet::Interest(i) => f.on_interest(i, face, now),
                            Packet::Data(d) => f.on_data(d, face, now),
                        };
                        for a in &actions {
                            for (out_face, p) in a.outgoing() {
                                self.send(s, node, out_face, p, tag)?;
                            }
                        }
                        Ok(())
                    }
                }
            }
        }
    }
}

fn forwarder_config(cfg: &super::topology::NodeConfig, nc: bool) -> ForwarderConfig {
    ForwarderConfig {
        cache_capacity: cfg.cache_capacity,
        granularity: cfg.granularity,
        nc_enabled: nc && cfg.nc_enabled,
        cache_coded: cfg.cache_coded,
        strategy: cfg.strategy,
        ..ForwarderConfig::default()
    }
}

/// Runs one arm to quiescence or `max_time`.
pub fn run_ccn(run: &CcnRun) -> Result<RunOutput, SimError> {
    if run.k == 0 || run.chunks == 0 || run.chunk_size == 0 {
        return Err(SimError::Config("k, chunks and chunk_size must be positive".into()));
    }
    if run.max_time.is_nan() || run.max_time <= 0.0 {
        return Err(SimError::Config("max_time must be positive".into()));
    }
    let res = &run.topology;
    let mut specs: BTreeMap<usize, &ConsumerSpec> = BTreeMap::new();
    for c in &run.consumers {
        let idx = res
            .index(&c.node)
            .ok_or_else(|| SimError::Config(format!("consumer {:?} is not a node", c.node)))?;
        if res.roles[idx] != Role::Consumer {
            return Err(SimError::Config(format!(
                "workload node {:?} is not a consumer",
                c.node
            )));
        }
        if c.window == 0 || !(c.start >= 0.0 && c.start.is_finite()) {
            return Err(SimError::Config(format!(
                "consumer {:?}: window must be ≥ 1 and start ≥ 0",
                c.node
            )));
        }
        if specs.insert(idx, c).is_some() {
            return Err(SimError::Config(format!("consumer {:?} listed twice", c.node)));
        }
    }

    let reference = super::object_payload(run.seed, run.chunks, run.chunk_size);
    let mut master = ChaCha8Rng::seed_from_u64(run.seed);
    let links = LinkTable::new(res.links.clone(), res.scripted.clone(), master.gen());
    let mut nodes = Vec::new();
    for i in 0..res.names.len() {
        let faces: Vec<FaceId> = (0..res.faces[i].len() as u32).map(FaceId).collect();
        let node_seed: u64 = master.gen();
        let cfg = &res.configs[i];
        let node = match res.roles[i] {
            Role::Consumer => Node::Consumer(Box::new(ConsumerApp::new(
                i,
                faces,
                specs.get(&i).copied(),
                run.nc && cfg.nc_enabled,
                run.object.object(),
                reference.clone(),
                run.k,
                node_seed,
            ))),
            role => {
                let mut f = Forwarder::new(forwarder_config(cfg, run.nc), faces, node_seed);
                for (prefix, via) in &res.routes[i] {
                    let p: ContentName = prefix.parse().map_err(|e| SimError::Config(format!("{e}")))?;
                    f.fib_mut().insert(&p, via.clone());
                }
                if role == Role::Repository {
                    let mut producer = Producer::new();
                    producer
                        .publish(run.object.object(), reference.clone(), run.k)
                        .map_err(|e| SimError::Config(e.to_string()))?;
                    f = f.with_producer(producer);
                }
                Node::Router(Box::new(f))
            }
        };
        nodes.push(node);
    }

    let mut net = Net {
        in_flight: vec![0; nodes.len()],
        res: res.clone(),
        links,
        nodes,
        trace: Vec::new(),
        tag_tx: BTreeMap::new(),
    };
    let mut sched = Scheduler::new();
    for (&idx, spec) in &specs {
        sched.schedule(spec.start, Ev::Start(idx))?;
    }
    sched.run_until(run.max_time, |s, t, e| net.handle(s, t, e))?;

    let mut metrics = Metrics {
        scenario: run.scenario.clone(),
        kind: run.kind.clone(),
        arm: arm_name(run.nc).into(),
        seed: run.seed,
        events: sched.dispatched(),
        end_time: sched.now(),
        links: link_metrics(&net.res, &net.links),
        ..Metrics::default()
    };
    for (i, node) in net.nodes.into_iter().enumerate() {
        let name = net.res.names[i].clone();
        match node {
            Node::Consumer(c) => {
                let active = specs.contains_key(&i);
                let tag0 = c.tag(0);
                let (m, mut r) = c.finish(net.in_flight[i]);
                check_conservation(&name, &m)?;
                if active {
                    r.transmissions = net.tag_tx.get(&tag0).copied().unwrap_or(0);
                    metrics.first_round.insert(name.clone(), r);
                    metrics.consumers.insert(name, m);
                }
            }
            Node::Router(f) => {
                metrics.nodes.insert(name, f.stats().clone());
            }
        }
    }
    Ok(RunOutput {
        metrics,
        trace: net.trace,
    })
}

pub fn arm_name(nc: bool) -> &'static str {
    if nc {
        "nc_on"
    } else {
        "nc_off"
    }
}

pub(crate) fn check_conservation(name: &str, m: &ConsumerMetrics) -> Result<(), SimError> {
    if m.innovative + m.wasted != m.received {
        return Err(SimError::Invariant(format!(
            "{name}: innovative {} + wasted {} != received {}",
            m.innovative, m.wasted, m.received
        )));
    }
    if m.received + m.lost + m.in_flight != m.addressed {
        return Err(SimError::Invariant(format!(
            "{name}: innovative {} + wasted {} + lost {} + in flight {} != addressed {}",
            m.innovative, m.wasted, m.lost, m.in_flight, m.addressed
        )));
    }
    Ok(())
}
