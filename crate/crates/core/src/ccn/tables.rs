use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::name::ContentName;
use super::packet::PitKey;

/// Index of an interface on a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaceId(pub u32);

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Name-prefix routes; faces are kept in tie-break order.
#[derive(Debug, Clone, Default)]
pub struct Fib {
    entries: BTreeMap<Vec<String>, Vec<FaceId>>,
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prefix: &ContentName, faces: Vec<FaceId>) {
        self.entries.insert(prefix.components().to_vec(), faces);
    }

    /// Appends `face` to the route for `prefix`, creating it if needed.
    pub fn add_face(&mut self, prefix: &ContentName, face: FaceId) {
        let faces = self.entries.entry(prefix.components().to_vec()).or_default();
        if !faces.contains(&face) {
            faces.push(face);
        }
    }

    /// Longest-prefix match over name components.
    pub fn lookup(&self, name: &ContentName) -> Option<&[FaceId]> {
        let comps = name.components();
        (1..=comps.len())
            .rev()
            .find_map(|n| self.entries.get(&comps[..n]))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitEntry {
    /// Downstream faces and how many Data packets each still waits for.
    pub in_faces: BTreeMap<FaceId, u32>,
    /// Upstream faces and how many forwarded Interests there are unanswered.
    pub out_faces: BTreeMap<FaceId, u32>,
    pub nonces: BTreeSet<u64>,
    pub created: f64,
}

/// Pending Interest table with a fixed entry lifetime.
#[derive(Debug, Clone)]
pub struct Pit {
    entries: BTreeMap<PitKey, PitEntry>,
    lifetime: f64,
}

impl Pit {
    pub fn new(lifetime: f64) -> Self {
        Self {
            entries: BTreeMap::new(),
            lifetime,
        }
    }

    pub fn lifetime(&self) -> f64 {
        self.lifetime
    }

    /// Live entry for `key`; an expired entry is removed and reported absent.
    pub fn get_mut(&mut self, key: &PitKey, now: f64) -> Option<&mut PitEntry> {
        let expired = self.entries.get(key).is_some_and(|e| now - e.created >= self.lifetime);
        if expired {
            self.entries.remove(key);
            return None;
        }
        self.entries.get_mut(key)
    }

    pub fn insert(&mut self, key: PitKey, entry: PitEntry) {
        self.entries.insert(key, entry);
    }

    pub fn remove(&mut self, key: &PitKey) -> Option<PitEntry> {
        self.entries.remove(key)
    }

    pub fn purge_expired(&mut self, now: f64) -> usize {
        let before = self.entries.len();
        let lifetime = self.lifetime;
        self.entries.retain(|_, e| now - e.created < lifetime);
        before - self.entries.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Remembers the most recent `capacity` (name, nonce) pairs.
#[derive(Debug, Clone)]
pub struct NonceMemory {
    capacity: usize,
    order: VecDeque<(ContentName, u64)>,
    seen: HashSet<(ContentName, u64)>,
}

impl NonceMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            order: VecDeque::new(),
            seen: HashSet::new(),
        }
    }

    /// Records the pair; returns false if it was already remembered.
    pub fn insert(&mut self, name: &ContentName, nonce: u64) -> bool {
        let key = (name.clone(), nonce);
        if self.seen.contains(&key) {
            return false;
        }
        if self.capacity == 0 {
            return true;
        }
        if self.order.len() == self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.seen.remove(&old);
            }
        }
        self.seen.insert(key.clone());
        self.order.push_back(key);
        true
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}
