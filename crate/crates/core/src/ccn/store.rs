use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::nc3n::{CacheEffect, CodedStoreEntry, Nc3nError};
use crate::rlnc::{CodedChunk, GenId};

use super::name::ContentName;

/// Unit of LRU bookkeeping and eviction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheGranularity {
    /// Each chunk (or coded generation) ages and is evicted on its own.
    #[default]
    Chunk,
    /// All cached pieces of an object age together and are evicted together.
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Chunk(u32),
    Generation(GenId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CsKey {
    pub object: ContentName,
    pub slot: Slot,
}

#[derive(Debug, Clone)]
pub enum CsEntry {
    Chunk(Vec<u8>),
    Coded(CodedStoreEntry),
}

impl CsEntry {
    /// Capacity charged, in chunks.
    fn size(&self) -> usize {
        match self {
            CsEntry::Chunk(_) => 1,
            CsEntry::Coded(e) => e.rank(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum LruUnit {
    Key(CsKey),
    Object(ContentName),
}

/// Chunk-counted cache with exact LRU eviction.
#[derive(Debug, Clone)]
pub struct ContentStore {
    capacity: usize,
    granularity: CacheGranularity,
    entries: BTreeMap<CsKey, CsEntry>,
    used: usize,
    clock: u64,
    stamps: HashMap<LruUnit, u64>,
    order: BTreeMap<u64, LruUnit>,
    evictions: u64,
}

impl ContentStore {
    pub fn new(capacity: usize, granularity: CacheGranularity) -> Self {
        Self {
            capacity,
            granularity,
            entries: BTreeMap::new(),
            used: 0,
            clock: 0,
            stamps: HashMap::new(),
            order: BTreeMap::new(),
            evictions: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Chunks currently charged against capacity.
    pub fn used(&self) -> usize {
        self.used
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    pub fn contains(&self, key: &CsKey) -> bool {
        self.entries.contains_key(key)
    }

    /// Keys from least to most recently used. In object mode keys of one
    /// object are grouped and listed in key order.
    pub fn lru_keys(&self) -> Vec<CsKey> {
        let mut out = Vec::new();
        for unit in self.order.values() {
            match unit {
                LruUnit::Key(k) => out.push(k.clone()),
                LruUnit::Object(o) => out.extend(self.object_keys(o)),
            }
        }
        out
    }

    fn unit_of(&self, key: &CsKey) -> LruUnit {
        match self.granularity {
            CacheGranularity::Chunk => LruUnit::Key(key.clone()),
            CacheGranularity::Object => LruUnit::Object(key.object.clone()),
        }
    }

    fn object_keys(&self, object: &ContentName) -> Vec<CsKey> {
        let start = CsKey {
            object: object.clone(),
            slot: Slot::Chunk(0),
        };
        self.entries
            .range(start..)
            .take_while(|(k, _)| &k.object == object)
            .map(|(k, _)| k.clone())
            .collect()
    }

    fn touch(&mut self, key: &CsKey) {
        let unit = self.unit_of(key);
        self.clock += 1;
        if let Some(old) = self.stamps.insert(unit.clone(), self.clock) {
            self.order.remove(&old);
        }
        self.order.insert(self.clock, unit);
    }

    fn drop_unit(&mut self, unit: &LruUnit) {
        let keys = match unit {
            LruUnit::Key(k) => vec![k.clone()],
            LruUnit::Object(o) => self.object_keys(o),
        };
        for k in keys {
            if let Some(e) = self.entries.remove(&k) {
                self.used -= e.size();
            }
        }
        if let Some(stamp) = self.stamps.remove(unit) {
            self.order.remove(&stamp);
        }
        self.evictions += 1;
    }

    fn evict_to_capacity(&mut self) {
        while self.used > self.capacity {
            let Some((_, unit)) = self.order.iter().next().map(|(s, u)| (*s, u.clone())) else {
                break;
            };
            self.drop_unit(&unit);
        }
    }

    /// Plain chunk `index` (1-based), from a stored chunk or a decoded generation.
    pub fn get_chunk(&mut self, object: &ContentName, index: u32) -> Option<Vec<u8>> {
        let key = CsKey {
            object: object.clone(),
            slot: Slot::Chunk(index),
        };
        if let Some(CsEntry::Chunk(p)) = self.entries.get(&key) {
            let p = p.clone();
            self.touch(&key);
            return Some(p);
        }
        let offset = u64::from(index.checked_sub(1)?);
        let hit = self
            .entries
            .range(
                CsKey {
                    object: object.clone(),
                    slot: Slot::Generation(0),
                }..,
            )
            .take_while(|(k, _)| &k.object == object)
            .find_map(|(k, e)| match e {
                CsEntry::Coded(c) if offset >= c.gen_id() && offset < c.gen_id() + c.k() as u64 => c
                    .decoded_chunk((offset - c.gen_id()) as usize)
                    .map(|p| (k.clone(), p.to_vec())),
                _ => None,
            });
        let (k, payload) = hit?;
        self.touch(&k);
        Some(payload)
    }

    /// Stores a plain chunk; returns false if it was already cached or cannot fit.
    pub fn insert_chunk(&mut self, object: &ContentName, index: u32, payload: Vec<u8>) -> bool {
        let key = CsKey {
            object: object.clone(),
            slot: Slot::Chunk(index),
        };
        if self.entries.contains_key(&key) {
            self.touch(&key);
            return false;
        }
        if self.capacity == 0 {
            return false;
        }
        self.entries.insert(key.clone(), CsEntry::Chunk(payload));
        self.used += 1;
        self.touch(&key);
        self.evict_to_capacity();
        self.entries.contains_key(&key)
    }

    pub fn coded_entry(&mut self, object: &ContentName, gen_id: GenId) -> Option<&CodedStoreEntry> {
        let key = CsKey {
            object: object.clone(),
            slot: Slot::Generation(gen_id),
        };
        if !self.entries.contains_key(&key) {
            return None;
        }
        self.touch(&key);
        match self.entries.get(&key) {
            Some(CsEntry::Coded(e)) => Some(e),
            _ => None,
        }
    }

    pub fn peek_coded(&self, object: &ContentName, gen_id: GenId) -> Option<&CodedStoreEntry> {
        let key = CsKey {
            object: object.clone(),
            slot: Slot::Generation(gen_id),
        };
        match self.entries.get(&key) {
            Some(CsEntry::Coded(e)) => Some(e),
            _ => None,
        }
    }

    /// Absorbs a coded chunk into the generation's entry, creating it on demand.
    /// Redundant chunks leave the store unchanged.
    pub fn absorb_coded(&mut self, object: &ContentName, chunk: &CodedChunk) -> Result<CacheEffect, Nc3nError> {
        if self.capacity == 0 {
            return Ok(CacheEffect::DroppedRedundant);
        }
        let key = CsKey {
            object: object.clone(),
            slot: Slot::Generation(chunk.gen_id),
        };
        let entry = self
            .entries
            .entry(key.clone())
            .or_insert_with(|| CsEntry::Coded(CodedStoreEntry::new(chunk.gen_id, chunk.k())));
        let CsEntry::Coded(entry) = entry else {
            unreachable!("generation slots only hold coded entries");
        };
        let effect = match entry.absorb(chunk) {
            Ok(effect) => effect,
            Err(e) => {
                if entry.rank() == 0 {
                    self.entries.remove(&key);
                }
                return Err(e);
            }
        };
        if entry.rank() == 0 {
            self.entries.remove(&key);
            return Ok(effect);
        }
        if effect != CacheEffect::DroppedRedundant {
            self.used += 1;
        }
        self.touch(&key);
        self.evict_to_capacity();
        Ok(effect)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rlnc::{CodingVector, Generation};
    use proptest::prelude::*;

    fn obj(s: &str) -> ContentName {
        s.parse().unwrap()
    }

    #[test]
    fn capacity_and_lru_eviction() {
        let mut cs = ContentStore::new(2, CacheGranularity::Chunk);
        let o = obj("a");
        assert!(cs.insert_chunk(&o, 1, vec![1]));
        assert!(cs.insert_chunk(&o, 2, vec![2]));
        assert!(cs.get_chunk(&o, 1).is_some());
        assert!(cs.insert_chunk(&o, 3, vec![3]));
        assert_eq!(cs.used(), 2);
        assert!(cs.get_chunk(&o, 2).is_none(), "chunk 2 was least recently used");
        assert!(cs.get_chunk(&o, 1).is_some());
        assert!(!cs.insert_chunk(&o, 1, vec![1]));
    }

    #[test]
    fn object_granularity_evicts_whole_objects() {
        let mut cs = ContentStore::new(3, CacheGranularity::Object);
        let a = obj("a");
        let b = obj("b");
        cs.insert_chunk(&a, 1, vec![]);
        cs.insert_chunk(&a, 2, vec![]);
        cs.insert_chunk(&b, 1, vec![]);
        cs.insert_chunk(&b, 2, vec![]);
        assert!(cs.get_chunk(&a, 1).is_none());
        assert!(cs.get_chunk(&a, 2).is_none());
        assert_eq!(cs.used(), 2);
    }

    #[test]
    fn zero_capacity_stores_nothing() {
        let mut cs = ContentStore::new(0, CacheGranularity::Chunk);
        assert!(!cs.insert_chunk(&obj("a"), 1, vec![1]));
        assert_eq!(cs.used(), 0);
    }

    #[test]
    fn coded_entries_charge_their_rank_and_serve_after_decode() {
        let g = Generation::new(0, 2, vec![vec![1, 2], vec![3, 4]]).unwrap();
        let mut cs = ContentStore::new(10, CacheGranularity::Chunk);
        let o = obj("a");
        let c1 = g.encode_with(CodingVector::new(vec![1, 2])).unwrap();
        assert_eq!(cs.absorb_coded(&o, &c1).unwrap(), CacheEffect::StoredInnovative);
        assert_eq!(cs.used(), 1);
        assert!(cs.get_chunk(&o, 1).is_none());
        let dup = g.encode_with(CodingVector::new(vec![2, 4])).unwrap();
        assert_eq!(cs.absorb_coded(&o, &dup).unwrap(), CacheEffect::DroppedRedundant);
        let c2 = g.encode_with(CodingVector::new(vec![2, 1])).unwrap();
        assert_eq!(cs.absorb_coded(&o, &c2).unwrap(), CacheEffect::Decoded);
        assert_eq!(cs.used(), 2);
        assert_eq!(cs.get_chunk(&o, 1).unwrap(), vec![1, 2]);
        assert_eq!(cs.get_chunk(&o, 2).unwrap(), vec![3, 4]);
        assert!(cs.get_chunk(&o, 3).is_none());
    }

    /// Straightforward LRU over a vector, most recent last.
    #[derive(Default)]
    struct ReferenceLru {
        cap: usize,
        items: Vec<(u32, u8)>,
    }

    impl ReferenceLru {
        fn get(&mut self, k: u32) -> Option<u8> {
            let pos = self.items.iter().position(|(x, _)| *x == k)?;
            let item = self.items.remove(pos);
            self.items.push(item);
            Some(item.1)
        }

        fn insert(&mut self, k: u32, v: u8) {
            if self.get(k).is_some() || self.cap == 0 {
                return;
            }
            self.items.push((k, v));
            if self.items.len() > self.cap {
                self.items.remove(0);
            }
        }
    }

    proptest! {
        #[test]
        fn lru_matches_reference(cap in 0usize..6, ops in proptest::collection::vec((any::<bool>(), 0u32..10, any::<u8>()), 0..80)) {
            let mut cs = ContentStore::new(cap, CacheGranularity::Chunk);
            let mut reference = ReferenceLru { cap, ..Default::default() };
            let o = obj("x");
            for (is_get, k, v) in ops {
                if is_get {
                    let got = cs.get_chunk(&o, k + 1).map(|p| p[0]);
                    prop_assert_eq!(got, reference.get(k));
                } else {
                    cs.insert_chunk(&o, k + 1, vec![v]);
                    reference.insert(k, v);
                }
                prop_assert!(cs.used() <= cap);
                let order: Vec<u32> = cs.lru_keys().iter().map(|key| match key.slot {
                    Slot::Chunk(n) => n - 1,
                    Slot::Generation(_) => unreachable!(),
                }).collect();
                let expected: Vec<u32> = reference.items.iter().map(|(k, _)| *k).collect();
                prop_assert_eq!(order, expected);
            }
        }
    }
}
