use crate::nc3n::{CodingMeta, DofDigest};
use crate::rlnc::{CodedChunk, GenId};

use super::name::{ChunkComponent, ContentName};

/// Interest selector: the NC flag plus the requester's received degrees of freedom.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selector {
    pub nc_flag: bool,
    pub dof_digest: Option<DofDigest>,
    pub order_required: bool,
}

impl Selector {
    pub fn plain() -> Self {
        Self::default()
    }

    pub fn ordered() -> Self {
        Self {
            order_required: true,
            ..Self::default()
        }
    }

    pub fn coded(digest: DofDigest) -> Self {
        Self {
            nc_flag: true,
            dof_digest: Some(digest),
            order_required: false,
        }
    }

    /// Digest only with the flag set, and ordered delivery turns coding off.
    pub fn is_well_formed(&self) -> bool {
        if self.dof_digest.is_some() && !self.nc_flag {
            return false;
        }
        if self.order_required && self.nc_flag {
            return false;
        }
        self.dof_digest.as_ref().is_none_or(DofDigest::is_valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interest {
    pub name: ContentName,
    pub selector: Selector,
    pub nonce: u64,
}

impl Interest {
    pub fn new(name: ContentName, nonce: u64) -> Self {
        Self {
            name,
            selector: Selector::plain(),
            nonce,
        }
    }

    /// Generation addressed by a coded request (0 when no digest is carried).
    pub fn generation(&self) -> Option<GenId> {
        if !self.selector.nc_flag {
            return None;
        }
        Some(self.selector.dof_digest.as_ref().map_or(0, |d| d.gen_id))
    }

    pub fn is_well_formed(&self) -> bool {
        let wants_coded = self.name.chunk() == Some(ChunkComponent::Coded);
        self.selector.is_well_formed() && wants_coded == self.selector.nc_flag
    }

    pub fn pit_key(&self) -> PitKey {
        PitKey {
            name: self.name.clone(),
            generation: self.generation(),
        }
    }
}

/// Either the plain chunk index or the coding metadata of the carried chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignedInfo {
    Plain { chunk: u32 },
    Coded(CodingMeta),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPacket {
    pub name: ContentName,
    /// Opaque placeholder; nothing is signed or verified.
    pub signature: Vec<u8>,
    pub signed_info: SignedInfo,
    pub payload: Vec<u8>,
}

impl DataPacket {
    pub fn plain(name: ContentName, chunk: u32, payload: Vec<u8>) -> Self {
        Self {
            name,
            signature: Vec::new(),
            signed_info: SignedInfo::Plain { chunk },
            payload,
        }
    }

    pub fn coded(name: ContentName, chunk: CodedChunk) -> Self {
        Self {
            name,
            signature: Vec::new(),
            signed_info: SignedInfo::Coded(CodingMeta {
                gen_id: chunk.gen_id,
                vector: chunk.vector,
            }),
            payload: chunk.payload,
        }
    }

    pub fn is_coded(&self) -> bool {
        matches!(self.signed_info, SignedInfo::Coded(_))
    }

    pub fn coding_meta(&self) -> Option<&CodingMeta> {
        match &self.signed_info {
            SignedInfo::Coded(m) => Some(m),
            SignedInfo::Plain { .. } => None,
        }
    }

    pub fn coded_chunk(&self) -> Option<CodedChunk> {
        self.coding_meta().map(|m| CodedChunk {
            gen_id: m.gen_id,
            vector: m.vector.clone(),
            payload: self.payload.clone(),
        })
    }

    pub fn pit_key(&self) -> PitKey {
        PitKey {
            name: self.name.clone(),
            generation: self.coding_meta().map(|m| m.gen_id),
        }
    }
}

/// Anything carried over a link by the named-data engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Interest(Interest),
    Data(DataPacket),
}

/// PIT entries are keyed on the full name, plus the generation for coded requests.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PitKey {
    pub name: ContentName,
    pub generation: Option<GenId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rlnc::CodingVector;

    fn name(s: &str) -> ContentName {
        s.parse().unwrap()
    }

    #[test]
    fn selector_invariants() {
        assert!(Selector::plain().is_well_formed());
        assert!(Selector::ordered().is_well_formed());
        let digest = DofDigest::empty(0, 2);
        assert!(Selector::coded(digest.clone()).is_well_formed());
        let bad = Selector {
            nc_flag: false,
            dof_digest: Some(digest.clone()),
            order_required: false,
        };
        assert!(!bad.is_well_formed());
        let ordered_coded = Selector {
            order_required: true,
            ..Selector::coded(digest)
        };
        assert!(!ordered_coded.is_well_formed());
    }

    #[test]
    fn nc_marker_requires_flag() {
        let mut i = Interest::new(name("a/b/NCChunk"), 1);
        assert!(!i.is_well_formed());
        i.selector = Selector::coded(DofDigest::empty(0, 2));
        assert!(i.is_well_formed());
        assert_eq!(i.generation(), Some(0));
        assert!(!Interest {
            name: name("a/b/C1"),
            ..i
        }
        .is_well_formed());
    }

    #[test]
    fn pit_keys_match_between_interest_and_data() {
        let mut i = Interest::new(name("a/NCChunk"), 7);
        i.selector = Selector::coded(DofDigest::empty(4, 2));
        let d = DataPacket::coded(
            name("a/NCChunk"),
            CodedChunk {
                gen_id: 4,
                vector: CodingVector::new(vec![1, 1]),
                payload: vec![0],
            },
        );
        assert_eq!(i.pit_key(), d.pit_key());
        let plain = Interest::new(name("a/C1"), 8);
        assert_eq!(plain.pit_key(), DataPacket::plain(name("a/C1"), 1, vec![]).pit_key());
        assert_ne!(plain.pit_key(), d.pit_key());
    }
}
