//! Named-data engine: names, packets, tables and the per-node forwarder.

pub mod forwarder;
pub mod name;
pub mod packet;
pub mod store;
pub mod tables;
pub mod trace;

pub use forwarder::{
    Action, CacheOutcome, Forwarder, ForwarderConfig, ForwarderStats, Producer, StoredObject, Strategy,
};
pub use name::{ChunkComponent, ChunkRequest, ContentName, NameError, NC_MARKER};
pub use packet::{DataPacket, Interest, Packet, PitKey, Selector, SignedInfo};
pub use store::{CacheGranularity, ContentStore, CsKey, Slot};
pub use tables::{FaceId, Fib, NonceMemory, Pit, PitEntry};
pub use trace::{TraceKind, TraceRecord};
