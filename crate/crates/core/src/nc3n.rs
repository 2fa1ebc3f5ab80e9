//! Coded request/response behaviour on top of the named-data engine.

use rand::Rng;
use thiserror::Error;

use crate::ccn::{ContentName, ContentStore, DataPacket, Interest, Selector};
use crate::gf256;
use crate::rlnc::{self, Basis, CodedChunk, CodingError, CodingVector, DecoderState, GenId, Generation};

/// Random draws a responder tries before falling back to an exact span check.
pub const RESPONSE_DRAWS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Nc3nError {
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("interest does not request coded content")]
    NotCoded,
    #[error("data packet carries no coding metadata")]
    NoCodingMeta,
    #[error("generation mismatch: holder has {held}, request names {requested}")]
    GenerationMismatch { held: GenId, requested: GenId },
    #[error("generation size mismatch: holder has {held}, request names {requested}")]
    SizeMismatch { held: usize, requested: usize },
    #[error("coding window must be at least 1")]
    EmptyWindow,
    #[error("malformed wire data: {0}")]
    Wire(&'static str),
}

pub type Result<T> = std::result::Result<T, Nc3nError>;

/// Degrees of freedom a requester already holds: its row-reduced basis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcInterestDigest {
    pub gen_id: GenId,
    pub k: usize,
    rows: Vec<CodingVector>,
}

pub type DofDigest = NcInterestDigest;

impl NcInterestDigest {
    pub fn empty(gen_id: GenId, k: usize) -> Self {
        Self {
            gen_id,
            k,
            rows: Vec::new(),
        }
    }

    pub fn from_state(state: &DecoderState) -> Self {
        Self {
            gen_id: state.gen_id(),
            k: state.k(),
            rows: state.basis(),
        }
    }

    /// Builds a digest from arbitrary rows; they must be independent.
    pub fn from_rows(gen_id: GenId, k: usize, rows: Vec<CodingVector>) -> Result<Self> {
        let d = Self { gen_id, k, rows };
        if !d.is_valid() {
            return Err(Nc3nError::Wire("digest rows are not independent"));
        }
        Ok(d)
    }

    pub fn rows(&self) -> &[CodingVector] {
        &self.rows
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_valid(&self) -> bool {
        self.rows.len() <= self.k
            && self.rows.iter().all(|r| r.len() == self.k)
            && Basis::from_vectors(self.k, &self.rows).is_ok_and(|b| b.rank() == self.rows.len())
    }

    pub fn basis(&self) -> Result<Basis> {
        Ok(Basis::from_vectors(self.k, &self.rows)?)
    }

    /// gen_id u64 BE, k u16 BE, rank u16 BE, then rank·k coefficients.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.rows.len() * self.k);
        out.extend_from_slice(&self.gen_id.to_be_bytes());
        out.extend_from_slice(&(self.k as u16).to_be_bytes());
        out.extend_from_slice(&(self.rows.len() as u16).to_be_bytes());
        for r in &self.rows {
            out.extend_from_slice(r.as_slice());
        }
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Nc3nError::Wire("digest header truncated"));
        }
        let gen_id = u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes"));
        let k = usize::from(u16::from_be_bytes([bytes[8], bytes[9]]));
        let r = usize::from(u16::from_be_bytes([bytes[10], bytes[11]]));
        let body = &bytes[12..];
        if body.len() != r * k {
            return Err(Nc3nError::Wire("digest body length"));
        }
        let rows = if k == 0 {
            Vec::new()
        } else {
            body.chunks(k).map(|c| CodingVector::new(c.to_vec())).collect()
        };
        Self::from_rows(gen_id, k, rows)
    }
}

/// Coding metadata carried in a coded Data packet's SignedInfo.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingMeta {
    pub gen_id: GenId,
    pub vector: CodingVector,
}

impl CodingMeta {
    /// gen_id u64 BE, k u16 BE, then k coefficients.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + self.vector.len());
        out.extend_from_slice(&self.gen_id.to_be_bytes());
        out.extend_from_slice(&(self.vector.len() as u16).to_be_bytes());
        out.extend_from_slice(self.vector.as_slice());
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 {
            return Err(Nc3nError::Wire("coding metadata truncated"));
        }
        let gen_id = u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes"));
        let k = usize::from(u16::from_be_bytes([bytes[8], bytes[9]]));
        if bytes.len() != 10 + k {
            return Err(Nc3nError::Wire("coding metadata length"));
        }
        Ok(Self {
            gen_id,
            vector: CodingVector::new(bytes[10..].to_vec()),
        })
    }
}

/// Outcome of absorbing a coded chunk into a cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheEffect {
    StoredInnovative,
    DroppedRedundant,
    Decoded,
}

/// Cached coded rows of one generation, decoded once full rank is reached.
#[derive(Debug, Clone)]
pub struct CodedStoreEntry {
    held: DecoderState,
    decoded: Option<Vec<Vec<u8>>>,
}

impl CodedStoreEntry {
    pub fn new(gen_id: GenId, k: usize) -> Self {
        Self {
            held: DecoderState::new(gen_id, k),
            decoded: None,
        }
    }

    pub fn gen_id(&self) -> GenId {
        self.held.gen_id()
    }

    pub fn k(&self) -> usize {
        self.held.k()
    }

    pub fn rank(&self) -> usize {
        self.held.rank()
    }

    pub fn held(&self) -> &DecoderState {
        &self.held
    }

    pub fn is_decoded(&self) -> bool {
        self.decoded.is_some()
    }

    /// Source chunk `index` (0-based within the generation), once decoded.
    pub fn decoded_chunk(&self, index: usize) -> Option<&[u8]> {
        self.decoded.as_ref()?.get(index).map(Vec::as_slice)
    }

    pub fn absorb(&mut self, chunk: &CodedChunk) -> Result<CacheEffect> {
        match self.held.add(chunk)? {
            rlnc::Absorb::Redundant => Ok(CacheEffect::DroppedRedundant),
            rlnc::Absorb::Innovative => {
                if self.held.is_complete() {
                    self.decoded = Some(self.held.decode()?);
                    Ok(CacheEffect::Decoded)
                } else {
                    Ok(CacheEffect::StoredInnovative)
                }
            }
        }
    }
}

/// Anything that can answer coded requests for one generation.
pub trait CodedSource {
    fn gen_id(&self) -> GenId;
    fn k(&self) -> usize;
    /// A fresh random combination of everything held.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CodedChunk>;
    /// Chunks spanning everything held.
    fn spanning_rows(&self) -> Result<Vec<CodedChunk>>;
}

impl CodedSource for Generation {
    fn gen_id(&self) -> GenId {
        Generation::gen_id(self)
    }

    fn k(&self) -> usize {
        Generation::k(self)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CodedChunk> {
        Ok(self.encode_random(rng))
    }

    fn spanning_rows(&self) -> Result<Vec<CodedChunk>> {
        (0..Generation::k(self))
            .map(|i| self.encode_systematic(i).map_err(Nc3nError::from))
            .collect()
    }
}

impl CodedSource for CodedStoreEntry {
    fn gen_id(&self) -> GenId {
        CodedStoreEntry::gen_id(self)
    }

    fn k(&self) -> usize {
        CodedStoreEntry::k(self)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CodedChunk> {
        Ok(self.held.recode(rng)?)
    }

    fn spanning_rows(&self) -> Result<Vec<CodedChunk>> {
        Ok(self.held.rows())
    }
}

/// Coded Interest for `name`'s object carrying `state`'s current basis.
pub fn make_nc_interest(name: &ContentName, state: &DecoderState, nonce: u64) -> Interest {
    Interest {
        name: name.object().with_nc_marker(),
        selector: Selector::coded(NcInterestDigest::from_state(state)),
        nonce,
    }
}

/// Answers a coded Interest with a combination innovative for the requester,
/// or `None` when the source holds nothing the requester lacks.
pub fn respond_nc<S: CodedSource, R: Rng + ?Sized>(
    source: &S,
    interest: &Interest,
    rng: &mut R,
) -> Result<Option<DataPacket>> {
    if !interest.selector.nc_flag {
        return Err(Nc3nError::NotCoded);
    }
    let requested = interest.generation().unwrap_or(0);
    if requested != source.gen_id() {
        return Err(Nc3nError::GenerationMismatch {
            held: source.gen_id(),
            requested,
        });
    }
    let digest = match &interest.selector.dof_digest {
        Some(d) => {
            if d.k != source.k() {
                return Err(Nc3nError::SizeMismatch {
                    held: source.k(),
                    requested: d.k,
                });
            }
            d.basis()?
        }
        None => Basis::new(source.k()),
    };
    if digest.rank() == source.k() {
        return Ok(None);
    }
    for _ in 0..RESPONSE_DRAWS {
        let c = source.draw(rng)?;
        if digest.is_innovative(&c.vector)? {
            return Ok(Some(DataPacket::coded(interest.name.clone(), c)));
        }
    }
    for row in source.spanning_rows()? {
        if digest.is_innovative(&row.vector)? {
            let s = rng.gen_range(1..=255u8);
            let vector = row.vector.as_slice().iter().map(|&x| gf256::mul(x, s)).collect();
            let mut payload = row.payload;
            gf256::scale_slice(&mut payload, s);
            let c = CodedChunk {
                gen_id: row.gen_id,
                vector: CodingVector::new(vector),
                payload,
            };
            return Ok(Some(DataPacket::coded(interest.name.clone(), c)));
        }
    }
    Ok(None)
}

/// Absorbs a coded Data packet into the node's Content Store.
pub fn cache_coded(cs: &mut ContentStore, data: &DataPacket) -> Result<CacheEffect> {
    let chunk = data.coded_chunk().ok_or(Nc3nError::NoCodingMeta)?;
    cs.absorb_coded(&data.name.object(), &chunk)
}

/// Splits an object into consecutive generations of `k` chunks. Every
/// generation uses the longest chunk of the object as its chunk size, and a
/// generation's id is the 0-based index of its first chunk.
pub fn coding_window(chunks: &[Vec<u8>], k: usize) -> Result<Vec<Generation>> {
    if k < 1 {
        return Err(Nc3nError::EmptyWindow);
    }
    let chunk_size = chunks.iter().map(Vec::len).max().unwrap_or(0);
    chunks
        .chunks(k)
        .enumerate()
        .map(|(g, group)| Generation::new((g * k) as GenId, chunk_size, group.to_vec()).map_err(Nc3nError::from))
        .collect()
}

/// Generation holding 0-based chunk offset `offset` when windows have size `k`.
pub fn generation_of(offset: u64, k: usize) -> GenId {
    offset / k as u64 * k as u64
}
