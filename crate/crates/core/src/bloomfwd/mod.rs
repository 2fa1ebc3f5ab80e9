//! In-packet Bloom-filter forwarding with coded merging of overlapping trees.

mod coding;
mod flow;
mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coding::{
    nc_egress, nc_ingress, nc_ingress_with, EgressDecoder, EncapPacket, FlowPacket, IngressCoder, PAD_LENGTH,
};
pub use flow::{derive_flow_id, FlowId};
pub use tree::{plan_coded_subgraph, DeliveryTree, Graph, NcBinding, Trigger, CONGESTION_THRESHOLD, FP_THRESHOLD};

/// Filter width in bits.
pub const M: usize = 256;
/// Bits set per link identifier.
pub const H: usize = 5;
const WORDS: usize = M / 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BloomError {
    #[error("a coded binding needs two distinct flows")]
    DegenerateBinding,
    #[error("window holds {got} packets, at most {k} allowed")]
    WindowOverflow { got: usize, k: usize },
    #[error("packet of {0} bytes does not fit a length field")]
    PacketTooLong(usize),
    #[error("rank {rank} is short of the {needed} needed to decode")]
    RankDeficient { rank: usize, needed: usize },
    #[error("edge {0} is not a link of the topology")]
    UnknownEdge(Edge),
    #[error("packet does not belong to this binding")]
    ForeignPacket,
    #[error("malformed encapsulation: {0}")]
    Wire(&'static str),
    #[error(transparent)]
    Coding(#[from] crate::rlnc::CodingError),
}

/// Directed link between two node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
}

impl Edge {
    pub fn new(from: u32, to: u32) -> Self {
        Self { from, to }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Fixed-width bit pattern shared by link identifiers and filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Bits([u64; WORDS]);

impl Bits {
    pub fn set(&mut self, pos: usize) {
        self.0[pos / 64] |= 1 << (pos % 64);
    }

    pub fn get(&self, pos: usize) -> bool {
        self.0[pos / 64] >> (pos % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    pub fn contains(&self, other: &Bits) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a & b == *b)
    }

    pub fn union(&self, other: &Bits) -> Bits {
        let mut out = *self;
        for (a, b) in out.0.iter_mut().zip(other.0.iter()) {
            *a |= b;
        }
        out
    }

    /// Big-endian bytes, bit 255 first.
    pub fn to_bytes(&self) -> [u8; M / 8] {
        let mut out = [0u8; M / 8];
        for (i, w) in self.0.iter().rev().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&w.to_be_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8; M / 8]) -> Bits {
        let mut words = [0u64; WORDS];
        for (i, w) in words.iter_mut().rev().enumerate() {
            *w = u64::from_be_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
        }
        Bits(words)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkId(pub Bits);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ZFilter(pub Bits);

impl ZFilter {
    pub fn insert(&mut self, l: LinkId) {
        self.0 = self.0.union(&l.0);
    }

    pub fn fill_ratio(&self) -> f64 {
        f64::from(self.0.count_ones()) / M as f64
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `H` distinct bit positions drawn from a hash of (edge, seed, counter).
pub fn link_id(edge: Edge, seed: u64) -> LinkId {
    let base = splitmix(splitmix(splitmix(seed) ^ u64::from(edge.from)) ^ u64::from(edge.to));
    let mut bits = Bits::default();
    let mut placed = 0;
    let mut counter = 0u64;
    while placed < H {
        let pos = (splitmix(base ^ counter) % M as u64) as usize;
        counter += 1;
        if !bits.get(pos) {
            bits.set(pos);
            placed += 1;
        }
    }
    LinkId(bits)
}

pub fn build_zfilter<'a>(edges: impl IntoIterator<Item = &'a Edge>, seed: u64) -> ZFilter {
    let mut z = ZFilter::default();
    for e in edges {
        z.insert(link_id(*e, seed));
    }
    z
}

pub fn forward_match(z: &ZFilter, l: &LinkId) -> bool {
    z.0.contains(&l.0)
}

/// Closed-form false-positive probability for a filter of `n` links.
pub fn analytic_fp_rate(n: usize) -> f64 {
    let h = H as f64;
    (1.0 - (1.0 - 1.0 / M as f64).powf(h * n as f64)).powf(h)
}
