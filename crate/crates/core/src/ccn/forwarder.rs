use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nc3n::{self, CacheEffect, Nc3nError};
use crate::rlnc::{GenId, Generation};

use super::name::{ChunkRequest, ContentName};
use super::packet::{DataPacket, Interest, Packet};
use super::store::{CacheGranularity, ContentStore};
use super::tables::{FaceId, Fib, NonceMemory, Pit, PitEntry};

pub const DEFAULT_PIT_LIFETIME: f64 = 4.0;
pub const DEFAULT_NONCE_MEMORY: usize = 1 << 16;

/// How an Interest with a FIB entry is sent upstream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// First listed face other than the arrival face.
    #[default]
    BestRoute,
    /// Every listed face other than the arrival face.
    Multicast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwarderConfig {
    /// Content Store capacity in chunks; 0 disables caching.
    pub cache_capacity: usize,
    pub granularity: CacheGranularity,
    /// Whether the node understands coded requests.
    pub nc_enabled: bool,
    /// Whether coded chunks are cached (only when `nc_enabled`).
    pub cache_coded: bool,
    pub strategy: Strategy,
    pub pit_lifetime: f64,
    pub nonce_memory: usize,
}

impl Default for ForwarderConfig {
    fn default() -> Self {
        Self {
            cache_capacity: 64,
            granularity: CacheGranularity::Chunk,
            nc_enabled: false,
            cache_coded: true,
            strategy: Strategy::BestRoute,
            pit_lifetime: DEFAULT_PIT_LIFETIME,
            nonce_memory: DEFAULT_NONCE_MEMORY,
        }
    }
}

/// An object published by a repository.
#[derive(Debug, Clone)]
pub struct StoredObject {
    chunks: Vec<Vec<u8>>,
    generations: Vec<Generation>,
}

impl StoredObject {
    pub fn new(chunks: Vec<Vec<u8>>, k: usize) -> Result<Self, Nc3nError> {
        let generations = nc3n::coding_window(&chunks, k)?;
        Ok(Self { chunks, generations })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// 1-based chunk lookup.
    pub fn chunk(&self, index: u32) -> Option<&[u8]> {
        let i = usize::try_from(index).ok()?.checked_sub(1)?;
        self.chunks.get(i).map(Vec::as_slice)
    }

    pub fn generations(&self) -> &[Generation] {
        &self.generations
    }

    pub fn generation(&self, gen_id: GenId) -> Option<&Generation> {
        self.generations.iter().find(|g| g.gen_id() == gen_id)
    }
}

/// Objects a node serves as their origin.
#[derive(Debug, Clone, Default)]
pub struct Producer {
    objects: BTreeMap<ContentName, StoredObject>,
}

impl Producer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&mut self, object: ContentName, chunks: Vec<Vec<u8>>, k: usize) -> Result<(), Nc3nError> {
        self.objects.insert(object.object(), StoredObject::new(chunks, k)?);
        Ok(())
    }

    pub fn object(&self, object: &ContentName) -> Option<&StoredObject> {
        self.objects.get(&object.object())
    }
}

/// Effect of inserting received Data into the Content Store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    /// Plain chunk; `stored` is false when it was already present or caching is off.
    Plain {
        stored: bool,
    },
    Coded(CacheEffect),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    ReplyFromCs {
        face: FaceId,
        data: DataPacket,
    },
    ReplyFromProducer {
        face: FaceId,
        data: DataPacket,
    },
    Aggregate {
        face: FaceId,
    },
    Forward {
        faces: Vec<FaceId>,
        interest: Interest,
    },
    Broadcast {
        faces: Vec<FaceId>,
        interest: Interest,
    },
    DropDuplicate,
    DropMalformed,
    DropNoRoute,
    /// The producer cannot (or, for coded requests, need not) answer.
    DropNoData,
    ForwardData {
        faces: Vec<FaceId>,
        data: DataPacket,
    },
    CacheInsert(CacheOutcome),
    DiscardDuplicate,
    DiscardUnsolicited,
}

impl Action {
    /// Packets this action puts on the wire.
    pub fn outgoing(&self) -> Vec<(FaceId, Packet)> {
        match self {
            Action::ReplyFromCs { face, data } | Action::ReplyFromProducer { face, data } => {
                vec![(*face, Packet::Data(data.clone()))]
            }
            Action::Forward { faces, interest } | Action::Broadcast { faces, interest } => {
                faces.iter().map(|f| (*f, Packet::Interest(interest.clone()))).collect()
            }
            Action::ForwardData { faces, data } => faces.iter().map(|f| (*f, Packet::Data(data.clone()))).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwarderStats {
    pub interests_received: u64,
    pub data_received: u64,
    pub dropped_duplicate: u64,
    pub dropped_malformed: u64,
    pub dropped_no_route: u64,
    pub dropped_no_data: u64,
    pub cs_hits: u64,
    pub cs_misses: u64,
    pub producer_replies: u64,
    /// Coded requests the local cache could not add degrees of freedom to.
    pub nc_suppressed: u64,
    pub aggregated: u64,
    pub forwarded: u64,
    pub broadcast: u64,
    pub data_forwarded: u64,
    pub data_discarded_duplicate: u64,
    pub data_unsolicited: u64,
    pub cached_plain: u64,
    pub cached_innovative: u64,
    pub cached_redundant: u64,
    pub decoded_generations: u64,
}

/// Per-node named-data state machine.
#[derive(Debug, Clone)]
pub struct Forwarder {
    config: ForwarderConfig,
    faces: Vec<FaceId>,
    fib: Fib,
    pit: Pit,
    cs: ContentStore,
    nonces: NonceMemory,
    producer: Option<Producer>,
    rng: ChaCha8Rng,
    stats: ForwarderStats,
}

impl Forwarder {
    pub fn new(config: ForwarderConfig, faces: Vec<FaceId>, seed: u64) -> Self {
        Self {
            fib: Fib::new(),
            pit: Pit::new(config.pit_lifetime),
            cs: ContentStore::new(config.cache_capacity, config.granularity),
            nonces: NonceMemory::new(config.nonce_memory),
            producer: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: ForwarderStats::default(),
            faces,
            config,
        }
    }

    pub fn with_producer(mut self, producer: Producer) -> Self {
        self.producer = Some(producer);
        self
    }

    pub fn config(&self) -> &ForwarderConfig {
        &self.config
    }

    pub fn faces(&self) -> &[FaceId] {
        &self.faces
    }

    pub fn fib(&self) -> &Fib {
        &self.fib
    }

    pub fn fib_mut(&mut self) -> &mut Fib {
        &mut self.fib
    }

    pub fn pit(&self) -> &Pit {
        &self.pit
    }

    pub fn cs(&self) -> &ContentStore {
        &self.cs
    }

    pub fn cs_mut(&mut self) -> &mut ContentStore {
        &mut self.cs
    }

    pub fn producer(&self) -> Option<&Producer> {
        self.producer.as_ref()
    }

    pub fn stats(&self) -> &ForwarderStats {
        &self.stats
    }

    /// Checks, in order: well-formedness, nonce duplicate, local producer,
    /// Content Store, PIT aggregation, FIB forwarding, broadcast.
    pub fn on_interest(&mut self, interest: Interest, in_face: FaceId, now: f64) -> Vec<Action> {
        self.stats.interests_received += 1;
        if !interest.is_well_formed() {
            self.stats.dropped_malformed += 1;
            return vec![Action::DropMalformed];
        }
        if !self.nonces.insert(&interest.name, interest.nonce) {
            self.stats.dropped_duplicate += 1;
            return vec![Action::DropDuplicate];
        }
        let request = interest.name.resolve_implicit();
        let object = interest.name.object();

        if let Some(producer) = &self.producer {
            if let Some(stored) = producer.object(&object) {
                let reply = match request {
                    ChunkRequest::Plain(n) => Ok(stored
                        .chunk(n)
                        .map(|p| DataPacket::plain(interest.name.clone(), n, p.to_vec()))),
                    ChunkRequest::Coded if self.config.nc_enabled => {
                        let gen_id = interest.generation().unwrap_or(0);
                        match stored.generation(gen_id) {
                            Some(g) => nc3n::respond_nc(g, &interest, &mut self.rng),
                            None => Ok(None),
                        }
                    }
                    ChunkRequest::Coded => Ok(None),
                };
                return match reply {
                    Ok(Some(data)) => {
                        self.stats.producer_replies += 1;
                        vec![Action::ReplyFromProducer { face: in_face, data }]
                    }
                    Ok(None) => {
                        self.stats.dropped_no_data += 1;
                        vec![Action::DropNoData]
                    }
                    Err(_) => {
                        self.stats.dropped_malformed += 1;
                        vec![Action::DropMalformed]
                    }
                };
            }
        }

        match request {
            ChunkRequest::Plain(n) => {
                if let Some(p) = self.cs.get_chunk(&object, n) {
                    self.stats.cs_hits += 1;
                    let data = DataPacket::plain(interest.name.clone(), n, p);
                    return vec![Action::ReplyFromCs { face: in_face, data }];
                }
                self.stats.cs_misses += 1;
            }
            ChunkRequest::Coded if self.config.nc_enabled => {
                let gen_id = interest.generation().unwrap_or(0);
                if let Some(entry) = self.cs.coded_entry(&object, gen_id) {
                    match nc3n::respond_nc(entry, &interest, &mut self.rng) {
                        Ok(Some(data)) => {
                            self.stats.cs_hits += 1;
                            return vec![Action::ReplyFromCs { face: in_face, data }];
                        }
                        _ => self.stats.nc_suppressed += 1,
                    }
                }
                self.stats.cs_misses += 1;
            }
            ChunkRequest::Coded => {}
        }

        let key = interest.pit_key();
        let coded = interest.selector.nc_flag;
        if let Some(entry) = self.pit.get_mut(&key, now) {
            entry.nonces.insert(interest.nonce);
            let demand = entry.in_faces.entry(in_face).or_insert(0);
            // A coded request from a face that is already waiting asks for one more degree of freedom.
            if !(coded && *demand > 0) {
                *demand = 1;
                self.stats.aggregated += 1;
                return vec![Action::Aggregate { face: in_face }];
            }
            *demand += 1;
        }

        let (faces, broadcast) = match self.fib.lookup(&interest.name) {
            Some(listed) => {
                let mut faces: Vec<FaceId> = listed.iter().copied().filter(|f| *f != in_face).collect();
                if self.config.strategy == Strategy::BestRoute {
                    faces.truncate(1);
                }
                (faces, false)
            }
            None => (self.faces.iter().copied().filter(|f| *f != in_face).collect(), true),
        };
        if faces.is_empty() {
            self.stats.dropped_no_route += 1;
            if let Some(entry) = self.pit.get_mut(&key, now) {
                if let Some(d) = entry.in_faces.get_mut(&in_face) {
                    *d -= 1;
                }
            }
            return vec![Action::DropNoRoute];
        }

        let entry = match self.pit.get_mut(&key, now) {
            Some(e) => e,
            None => {
                self.pit.insert(
                    key.clone(),
                    PitEntry {
                        in_faces: [(in_face, 1)].into(),
                        out_faces: BTreeMap::new(),
                        nonces: [interest.nonce].into(),
                        created: now,
                    },
                );
                self.pit.get_mut(&key, now).expect("just inserted")
            }
        };
        for f in &faces {
            *entry.out_faces.entry(*f).or_insert(0) += 1;
        }
        if broadcast {
            self.stats.broadcast += 1;
            vec![Action::Broadcast { faces, interest }]
        } else {
            self.stats.forwarded += 1;
            vec![Action::Forward { faces, interest }]
        }
    }

    /// Consumes the matching PIT state, forwards to waiting faces and caches.
    pub fn on_data(&mut self, data: DataPacket, in_face: FaceId, now: f64) -> Vec<Action> {
        self.stats.data_received += 1;
        let key = data.pit_key();
        let Some(entry) = self.pit.get_mut(&key, now) else {
            self.stats.data_unsolicited += 1;
            return vec![Action::DiscardUnsolicited];
        };
        match entry.out_faces.get_mut(&in_face) {
            Some(n) if *n > 0 => {
                *n -= 1;
                if *n == 0 {
                    entry.out_faces.remove(&in_face);
                }
            }
            _ => {
                self.stats.data_unsolicited += 1;
                return vec![Action::DiscardUnsolicited];
            }
        }

        let faces: Vec<FaceId> = entry
            .in_faces
            .iter_mut()
            .filter(|(_, d)| **d > 0)
            .map(|(f, d)| {
                if data.is_coded() {
                    *d -= 1;
                } else {
                    *d = 0;
                }
                *f
            })
            .collect();
        if entry.out_faces.is_empty() {
            self.pit.remove(&key);
        }

        let mut actions = Vec::new();
        if faces.is_empty() {
            self.stats.data_discarded_duplicate += 1;
        } else {
            self.stats.data_forwarded += 1;
        }

        let outcome = if data.is_coded() {
            if self.config.nc_enabled && self.config.cache_coded {
                match nc3n::cache_coded(&mut self.cs, &data) {
                    Ok(effect) => {
                        match effect {
                            CacheEffect::StoredInnovative => self.stats.cached_innovative += 1,
                            CacheEffect::DroppedRedundant => self.stats.cached_redundant += 1,
                            CacheEffect::Decoded => {
                                self.stats.cached_innovative += 1;
                                self.stats.decoded_generations += 1;
                            }
                        }
                        Some(CacheOutcome::Coded(effect))
                    }
                    Err(_) => None,
                }
            } else {
                None
            }
        } else if let ChunkRequest::Plain(n) = data.name.resolve_implicit() {
            let stored = self.cs.insert_chunk(&data.name.object(), n, data.payload.clone());
            if stored {
                self.stats.cached_plain += 1;
            }
            Some(CacheOutcome::Plain { stored })
        } else {
            None
        };

        if faces.is_empty() {
            actions.push(Action::DiscardDuplicate);
        } else {
            actions.push(Action::ForwardData { faces, data });
        }
        if let Some(o) = outcome {
            actions.push(Action::CacheInsert(o));
        }
        actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccn::Selector;
    use crate::nc3n::NcInterestDigest;
    use crate::rlnc::CodingVector;

    fn name(s: &str) -> ContentName {
        s.parse().unwrap()
    }

    fn router(nc: bool) -> Forwarder {
        let config = ForwarderConfig {
            nc_enabled: nc,
            ..ForwarderConfig::default()
        };
        Forwarder::new(config, vec![FaceId(0), FaceId(1), FaceId(2)], 1)
    }

    fn coded_interest(nonce: u64) -> Interest {
        Interest {
            name: name("a/NCChunk"),
            selector: Selector::coded(NcInterestDigest::empty(0, 2)),
            nonce,
        }
    }

    #[test]
    fn no_fib_entry_broadcasts_to_other_faces() {
        let mut r = router(false);
        let acts = r.on_interest(Interest::new(name("a/C1"), 1), FaceId(0), 0.0);
        assert_eq!(
            acts,
            vec![Action::Broadcast {
                faces: vec![FaceId(1), FaceId(2)],
                interest: Interest::new(name("a/C1"), 1)
            }]
        );
    }

    #[test]
    fn duplicate_nonce_and_aggregation() {
        let mut r = router(false);
        r.fib_mut().insert(&name("a"), vec![FaceId(2)]);
        let i = Interest::new(name("a/C1"), 1);
        assert!(matches!(
            r.on_interest(i.clone(), FaceId(0), 0.0)[0],
            Action::Forward { .. }
        ));
        assert_eq!(r.on_interest(i, FaceId(1), 0.0), vec![Action::DropDuplicate]);
        let other = Interest::new(name("a/C1"), 2);
        assert_eq!(
            r.on_interest(other, FaceId(1), 0.1),
            vec![Action::Aggregate { face: FaceId(1) }]
        );
        let acts = r.on_data(DataPacket::plain(name("a/C1"), 1, vec![7]), FaceId(2), 0.2);
        assert_eq!(
            acts[0],
            Action::ForwardData {
                faces: vec![FaceId(0), FaceId(1)],
                data: DataPacket::plain(name("a/C1"), 1, vec![7])
            }
        );
        assert_eq!(acts[1], Action::CacheInsert(CacheOutcome::Plain { stored: true }));
        assert!(r.pit().is_empty());
    }

    #[test]
    fn second_broadcast_copy_is_discarded_and_later_requests_hit_cache() {
        let mut r = router(false);
        r.on_interest(Interest::new(name("a/C1"), 1), FaceId(0), 0.0);
        let d = DataPacket::plain(name("a/C1"), 1, vec![7]);
        assert!(matches!(
            r.on_data(d.clone(), FaceId(1), 0.1)[0],
            Action::ForwardData { .. }
        ));
        assert_eq!(
            r.on_data(d.clone(), FaceId(2), 0.1),
            vec![
                Action::DiscardDuplicate,
                Action::CacheInsert(CacheOutcome::Plain { stored: false })
            ]
        );
        assert_eq!(r.on_data(d.clone(), FaceId(2), 0.1), vec![Action::DiscardUnsolicited]);
        assert_eq!(r.stats().data_unsolicited, 1);
        assert_eq!(
            r.on_interest(Interest::new(name("a/C1"), 9), FaceId(0), 0.2),
            vec![Action::ReplyFromCs {
                face: FaceId(0),
                data: d
            }]
        );
    }

    #[test]
    fn malformed_and_no_route() {
        let mut r = router(false);
        let bad = Interest::new(name("a/NCChunk"), 1);
        assert_eq!(r.on_interest(bad, FaceId(0), 0.0), vec![Action::DropMalformed]);
        let mut lonely = Forwarder::new(ForwarderConfig::default(), vec![FaceId(0)], 1);
        assert_eq!(
            lonely.on_interest(Interest::new(name("a"), 1), FaceId(0), 0.0),
            vec![Action::DropNoRoute]
        );
    }

    #[test]
    fn producer_answers_plain_and_coded() {
        let mut p = Producer::new();
        p.publish(name("a"), vec![vec![1, 2], vec![3, 4]], 2).unwrap();
        let cfg = ForwarderConfig {
            nc_enabled: true,
            ..ForwarderConfig::default()
        };
        let mut repo = Forwarder::new(cfg, vec![FaceId(0)], 3).with_producer(p);
        match &repo.on_interest(Interest::new(name("a/"), 1), FaceId(0), 0.0)[0] {
            Action::ReplyFromProducer { data, .. } => {
                assert_eq!(data.payload, vec![1, 2]);
                assert_eq!(data.name, name("a"));
            }
            other => panic!("{other:?}"),
        }
        match &repo.on_interest(coded_interest(2), FaceId(0), 0.0)[0] {
            Action::ReplyFromProducer { data, .. } => assert!(data.is_coded()),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            repo.on_interest(Interest::new(name("a/C3"), 3), FaceId(0), 0.0),
            vec![Action::DropNoData]
        );
    }

    #[test]
    fn coded_requests_from_one_face_each_need_their_own_data() {
        let mut r = router(true);
        r.fib_mut().insert(&name("a"), vec![FaceId(2)]);
        assert!(matches!(
            r.on_interest(coded_interest(1), FaceId(0), 0.0)[0],
            Action::Forward { .. }
        ));
        assert!(matches!(
            r.on_interest(coded_interest(2), FaceId(0), 0.0)[0],
            Action::Forward { .. }
        ));
        assert_eq!(
            r.on_interest(coded_interest(3), FaceId(1), 0.0),
            vec![Action::Aggregate { face: FaceId(1) }]
        );
        let g = Generation::new(0, 1, vec![vec![5], vec![6]]).unwrap();
        let d1 = DataPacket::coded(name("a/NCChunk"), g.encode_with(CodingVector::new(vec![1, 2])).unwrap());
        let d2 = DataPacket::coded(name("a/NCChunk"), g.encode_with(CodingVector::new(vec![2, 1])).unwrap());
        let a1 = r.on_data(d1.clone(), FaceId(2), 0.1);
        assert_eq!(
            a1,
            vec![
                Action::ForwardData {
                    faces: vec![FaceId(0), FaceId(1)],
                    data: d1
                },
                Action::CacheInsert(CacheOutcome::Coded(CacheEffect::StoredInnovative))
            ]
        );
        let a2 = r.on_data(d2.clone(), FaceId(2), 0.1);
        assert_eq!(
            a2,
            vec![
                Action::ForwardData {
                    faces: vec![FaceId(0)],
                    data: d2
                },
                Action::CacheInsert(CacheOutcome::Coded(CacheEffect::Decoded))
            ]
        );
        assert!(r.pit().is_empty());
        match &r.on_interest(Interest::new(name("a/C2"), 10), FaceId(1), 0.2)[0] {
            Action::ReplyFromCs { data, .. } => assert_eq!(data.payload, vec![6]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cache_without_new_dof_forwards_upstream() {
        let mut r = router(true);
        r.fib_mut().insert(&name("a"), vec![FaceId(2)]);
        let g = Generation::new(0, 1, vec![vec![5], vec![6]]).unwrap();
        let c = g.encode_with(CodingVector::new(vec![1, 2])).unwrap();
        r.cs_mut().absorb_coded(&name("a"), &c).unwrap();
        let digest = NcInterestDigest::from_rows(0, 2, vec![CodingVector::new(vec![1, 2])]).unwrap();
        let i = Interest {
            name: name("a/NCChunk"),
            selector: Selector::coded(digest),
            nonce: 4,
        };
        assert!(matches!(r.on_interest(i, FaceId(0), 0.0)[0], Action::Forward { .. }));
        assert_eq!(r.stats().nc_suppressed, 1);
        match &r.on_interest(coded_interest(5), FaceId(1), 0.0)[0] {
            Action::ReplyFromCs { data, .. } => assert!(data.is_coded()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn baseline_nodes_never_emit_coded_data() {
        let mut p = Producer::new();
        p.publish(name("a"), vec![vec![1], vec![2]], 2).unwrap();
        let mut repo = Forwarder::new(ForwarderConfig::default(), vec![FaceId(0)], 3).with_producer(p);
        assert_eq!(
            repo.on_interest(coded_interest(1), FaceId(0), 0.0),
            vec![Action::DropNoData]
        );
    }

    #[test]
    fn expired_pit_entries_turn_data_unsolicited() {
        let mut r = router(false);
        r.on_interest(Interest::new(name("a/C1"), 1), FaceId(0), 0.0);
        let acts = r.on_data(
            DataPacket::plain(name("a/C1"), 1, vec![]),
            FaceId(1),
            DEFAULT_PIT_LIFETIME,
        );
        assert_eq!(acts, vec![Action::DiscardUnsolicited]);
    }
}
