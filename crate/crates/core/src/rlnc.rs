//! Generation-based random linear network coding over GF(256).
//!
//! A [`Generation`] holds `k` equal-length source chunks. Encoders emit
//! [`CodedChunk`]s (systematic or random combinations), recoders combine
//! chunks they already hold without decoding, and [`DecoderState`] absorbs
//! chunks one Gaussian-elimination step at a time, keeping its rows in
//! reduced row-echelon form so innovativeness checks never mutate state.

use rand::Rng;
use thiserror::Error;

use crate::gf256;

/// Identifier of a generation within an object.
pub type GenId = u64;

/// Upper bound on `k` imposed by the 2-byte wire field.
pub const MAX_GENERATION_SIZE: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodingError {
    #[error("generation has no source chunks")]
    EmptyGeneration,
    #[error("generation size {0} exceeds the wire limit")]
    GenerationTooLarge(usize),
    #[error("source index {index} out of range for k = {k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("chunk of {len} bytes exceeds chunk size {chunk_size}")]
    ChunkTooLong { len: usize, chunk_size: usize },
    #[error("generation mismatch: expected {expected}, got {got}")]
    GenerationMismatch { expected: GenId, got: GenId },
    #[error("coding vector has length {got}, expected {expected}")]
    VectorLength { expected: usize, got: usize },
    #[error("payload has length {got}, expected {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("all-zero coding vector")]
    ZeroVector,
    #[error("no chunks to recode")]
    NothingToRecode,
    #[error("insufficient degrees of freedom: rank {rank} of {k}")]
    InsufficientDof { rank: usize, k: usize },
    #[error("malformed wire encoding: {0}")]
    Wire(&'static str),
}

pub type Result<T> = std::result::Result<T, CodingError>;

/// Coefficients of a coded chunk with respect to its generation's sources.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodingVector(Vec<u8>);

impl CodingVector {
    pub fn new(coefficients: Vec<u8>) -> Self {
        Self(coefficients)
    }

    /// The unit vector `e_index` of length `k`.
    pub fn unit(k: usize, index: usize) -> Self {
        let mut v = vec![0u8; k];
        v[index] = 1;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl From<Vec<u8>> for CodingVector {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

/// A group of `k` source chunks coded together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    gen_id: GenId,
    chunk_size: usize,
    sources: Vec<Vec<u8>>,
    lengths: Vec<usize>,
}

impl Generation {
    /// Builds a generation with a fixed chunk size; shorter chunks are
    /// zero-padded and their original lengths kept as metadata.
    pub fn new(gen_id: GenId, chunk_size: usize, chunks: Vec<Vec<u8>>) -> Result<Self> {
        if chunks.is_empty() {
            return Err(CodingError::EmptyGeneration);
        }
        if chunks.len() > MAX_GENERATION_SIZE {
            return Err(CodingError::GenerationTooLarge(chunks.len()));
        }
        let mut lengths = Vec::with_capacity(chunks.len());
        let mut sources = Vec::with_capacity(chunks.len());
        for mut c in chunks {
            if c.len() > chunk_size {
                return Err(CodingError::ChunkTooLong {
                    len: c.len(),
                    chunk_size,
                });
            }
            lengths.push(c.len());
            c.resize(chunk_size, 0);
            sources.push(c);
        }
        Ok(Self {
            gen_id,
            chunk_size,
            sources,
            lengths,
        })
    }

    /// Like [`Generation::new`] with the chunk size taken from the longest chunk.
    pub fn padded(gen_id: GenId, chunks: Vec<Vec<u8>>) -> Result<Self> {
        let size = chunks.iter().map(Vec::len).max().unwrap_or(0);
        Self::new(gen_id, size, chunks)
    }

    pub fn gen_id(&self) -> GenId {
        self.gen_id
    }

    pub fn k(&self) -> usize {
        self.sources.len()
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    /// Padded source chunks.
    pub fn sources(&self) -> &[Vec<u8>] {
        &self.sources
    }

    pub fn source(&self, index: usize) -> Option<&[u8]> {
        self.sources.get(index).map(Vec::as_slice)
    }

    /// Original (pre-padding) chunk lengths.
    pub fn original_lengths(&self) -> &[usize] {
        &self.lengths
    }

    /// Source chunk `index` with padding stripped.
    pub fn original(&self, index: usize) -> Option<&[u8]> {
        self.sources.get(index).map(|s| &s[..self.lengths[index]])
    }

    /// Encodes with an explicit coefficient vector.
    pub fn encode_with(&self, vector: CodingVector) -> Result<CodedChunk> {
        if vector.len() != self.k() {
            return Err(CodingError::VectorLength {
                expected: self.k(),
                got: vector.len(),
            });
        }
        if vector.is_zero() {
            return Err(CodingError::ZeroVector);
        }
        let mut payload = vec![0u8; self.chunk_size];
        for (src, &c) in self.sources.iter().zip(vector.as_slice()) {
            gf256::mul_add_slice(&mut payload, src, c);
        }
        Ok(CodedChunk {
            gen_id: self.gen_id,
            vector,
            payload,
        })
    }

    /// Random combination with uniform coefficients; all-zero draws are redrawn.
    pub fn encode_random<R: Rng + ?Sized>(&self, rng: &mut R) -> CodedChunk {
        let vector = random_nonzero_vector(self.k(), rng);
        self.encode_with(vector)
            .expect("vector length and nonzero-ness hold by construction")
    }

    /// Source `index` sent uncoded with the unit vector `e_index`.
    pub fn encode_systematic(&self, index: usize) -> Result<CodedChunk> {
        if index >= self.k() {
            return Err(CodingError::IndexOutOfRange { index, k: self.k() });
        }
        Ok(CodedChunk {
            gen_id: self.gen_id,
            vector: CodingVector::unit(self.k(), index),
            payload: self.sources[index].clone(),
        })
    }
}

/// Draws `k` uniform coefficients, redrawing the whole vector while it is zero.
pub fn random_nonzero_vector<R: Rng + ?Sized>(k: usize, rng: &mut R) -> CodingVector {
    assert!(k > 0, "cannot draw a vector of length zero");
    loop {
        let mut v = vec![0u8; k];
        rng.fill(&mut v[..]);
        if v.iter().any(|&c| c != 0) {
            return CodingVector(v);
        }
    }
}

/// A payload together with its coding vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedChunk {
    pub gen_id: GenId,
    pub vector: CodingVector,
    pub payload: Vec<u8>,
}

impl CodedChunk {
    pub fn k(&self) -> usize {
        self.vector.len()
    }

    /// `gen_id (8, BE) | k (2, BE) | chunk_size (4, BE) | k coefficients | payload`
    pub fn to_wire(&self) -> Vec<u8> {
        let k = self.vector.len();
        let mut out = Vec::with_capacity(14 + k + self.payload.len());
        out.extend_from_slice(&self.gen_id.to_be_bytes());
        out.extend_from_slice(&(k as u16).to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(self.vector.as_slice());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 14 {
            return Err(CodingError::Wire("header shorter than 14 bytes"));
        }
        let gen_id = u64::from_be_bytes(bytes[0..8].try_into().unwrap());
        let k = u16::from_be_bytes(bytes[8..10].try_into().unwrap()) as usize;
        let chunk_size = u32::from_be_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let body = &bytes[14..];
        if body.len() != k + chunk_size {
            return Err(CodingError::Wire("length does not match k and chunk size"));
        }
        Ok(Self {
            gen_id,
            vector: CodingVector(body[..k].to_vec()),
            payload: body[k..].to_vec(),
        })
    }
}

/// Random combination of `held` chunks; the result's vector lies in their span.
pub fn recode<R: Rng + ?Sized>(held: &[CodedChunk], rng: &mut R) -> Result<CodedChunk> {
    check_recode_input(held)?;
    // Dependent inputs can cancel out; retry a few times, then scale a
    // single nonzero input so the output is never the zero vector.
    for _ in 0..16 {
        let scalars: Vec<u8> = (0..held.len()).map(|_| rng.gen()).collect();
        let out = combine(held, &scalars);
        if !out.vector.is_zero() {
            return Ok(out);
        }
    }
    let pick = held
        .iter()
        .position(|c| !c.vector.is_zero())
        .ok_or(CodingError::ZeroVector)?;
    let mut scalars = vec![0u8; held.len()];
    scalars[pick] = rng.gen_range(1..=255);
    Ok(combine(held, &scalars))
}

/// Deterministic recoding with explicit scalars.
pub fn recode_with(held: &[CodedChunk], scalars: &[u8]) -> Result<CodedChunk> {
    check_recode_input(held)?;
    if scalars.len() != held.len() {
        return Err(CodingError::VectorLength {
            expected: held.len(),
            got: scalars.len(),
        });
    }
    let out = combine(held, scalars);
    if out.vector.is_zero() {
        return Err(CodingError::ZeroVector);
    }
    Ok(out)
}

fn check_recode_input(held: &[CodedChunk]) -> Result<()> {
    let first = held.first().ok_or(CodingError::NothingToRecode)?;
    for c in &held[1..] {
        if c.gen_id != first.gen_id {
            return Err(CodingError::GenerationMismatch {
                expected: first.gen_id,
                got: c.gen_id,
            });
        }
        if c.vector.len() != first.vector.len() {
            return Err(CodingError::VectorLength {
                expected: first.vector.len(),
                got: c.vector.len(),
            });
        }
        if c.payload.len() != first.payload.len() {
            return Err(CodingError::PayloadLength {
                expected: first.payload.len(),
                got: c.payload.len(),
            });
        }
    }
    Ok(())
}

fn combine(held: &[CodedChunk], scalars: &[u8]) -> CodedChunk {
    let first = &held[0];
    let mut vector = vec![0u8; first.vector.len()];
    let mut payload = vec![0u8; first.payload.len()];
    for (c, &s) in held.iter().zip(scalars) {
        gf256::mul_add_slice(&mut vector, c.vector.as_slice(), s);
        gf256::mul_add_slice(&mut payload, &c.payload, s);
    }
    CodedChunk {
        gen_id: first.gen_id,
        vector: CodingVector(vector),
        payload,
    }
}

/// Result of absorbing a chunk into a decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Absorb {
    Innovative,
    Redundant,
}

/// Rows in reduced row-echelon form over the first `k` columns. Columns past
/// `k` (payload bytes) are carried along by every row operation.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Echelon {
    k: usize,
    rows: Vec<Vec<u8>>,
    pivots: Vec<usize>,
}

impl Echelon {
    fn new(k: usize) -> Self {
        Self {
            k,
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Eliminates every pivot column from `v`. `v` may be a bare coefficient
    /// vector or a full augmented row.
    fn reduce(&self, v: &mut [u8]) {
        let w = v.len();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            let c = v[p];
            if c != 0 {
                gf256::mul_add_slice(v, &row[..w], c);
            }
        }
    }

    fn is_innovative(&self, coefficients: &[u8]) -> bool {
        let mut v = coefficients.to_vec();
        self.reduce(&mut v);
        v.iter().any(|&c| c != 0)
    }

    fn insert(&mut self, mut v: Vec<u8>) -> bool {
        self.reduce(&mut v);
        let Some(pivot) = v[..self.k].iter().position(|&c| c != 0) else {
            return false;
        };
        let scale = gf256::inv(v[pivot]).expect("pivot is nonzero");
        gf256::scale_slice(&mut v, scale);
        for row in &mut self.rows {
            let c = row[pivot];
            if c != 0 {
                gf256::mul_add_slice(row, &v, c);
            }
        }
        let at = self.pivots.partition_point(|&p| p < pivot);
        self.pivots.insert(at, pivot);
        self.rows.insert(at, v);
        true
    }
}

/// A vector space spanned by coding vectors, kept row-reduced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    inner: Echelon,
}

impl Basis {
    pub fn new(k: usize) -> Self {
        Self { inner: Echelon::new(k) }
    }

    pub fn from_vectors<'a>(k: usize, vectors: impl IntoIterator<Item = &'a CodingVector>) -> Result<Self> {
        let mut b = Self::new(k);
        for v in vectors {
            b.insert(v)?;
        }
        Ok(b)
    }

    pub fn k(&self) -> usize {
        self.inner.k
    }

    pub fn rank(&self) -> usize {
        self.inner.rank()
    }

    /// Adds `v` to the span; returns whether the rank grew.
    pub fn insert(&mut self, v: &CodingVector) -> Result<bool> {
        self.check_len(v)?;
        Ok(self.inner.insert(v.as_slice().to_vec()))
    }

    pub fn is_innovative(&self, v: &CodingVector) -> Result<bool> {
        self.check_len(v)?;
        Ok(self.inner.is_innovative(v.as_slice()))
    }

    pub fn rows(&self) -> Vec<CodingVector> {
        self.inner.rows.iter().map(|r| CodingVector(r.clone())).collect()
    }

    fn check_len(&self, v: &CodingVector) -> Result<()> {
        if v.len() != self.inner.k {
            return Err(CodingError::VectorLength {
                expected: self.inner.k,
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Incremental decoder for one generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderState {
    gen_id: GenId,
    chunk_size: Option<usize>,
    inner: Echelon,
}

impl DecoderState {
    pub fn new(gen_id: GenId, k: usize) -> Self {
        Self {
            gen_id,
            chunk_size: None,
            inner: Echelon::new(k),
        }
    }

    pub fn gen_id(&self) -> GenId {
        self.gen_id
    }

    pub fn k(&self) -> usize {
        self.inner.k
    }

    /// Degrees of freedom received so far.
    pub fn rank(&self) -> usize {
        self.inner.rank()
    }

    pub fn is_complete(&self) -> bool {
        self.rank() == self.k()
    }

    /// Payload length, known once the first chunk has been absorbed.
    pub fn chunk_size(&self) -> Option<usize> {
        self.chunk_size
    }

    /// One elimination step. The state is left untouched on error.
    pub fn add(&mut self, chunk: &CodedChunk) -> Result<Absorb> {
        if chunk.gen_id != self.gen_id {
            return Err(CodingError::GenerationMismatch {
                expected: self.gen_id,
                got: chunk.gen_id,
            });
        }
        if chunk.vector.len() != self.k() {
            return Err(CodingError::VectorLength {
                expected: self.k(),
                got: chunk.vector.len(),
            });
        }
        if let Some(size) = self.chunk_size {
            if chunk.payload.len() != size {
                return Err(CodingError::PayloadLength {
                    expected: size,
                    got: chunk.payload.len(),
                });
            }
        }
        if !self.inner.is_innovative(chunk.vector.as_slice()) {
            return Ok(Absorb::Redundant);
        }
        self.chunk_size = Some(chunk.payload.len());
        let mut row = Vec::with_capacity(self.k() + chunk.payload.len());
        row.extend_from_slice(chunk.vector.as_slice());
        row.extend_from_slice(&chunk.payload);
        let grew = self.inner.insert(row);
        debug_assert!(grew);
        Ok(Absorb::Innovative)
    }

    /// Pure span-membership test: true iff `vector` is outside the current span.
    pub fn is_innovative(&self, vector: &CodingVector) -> Result<bool> {
        if vector.len() != self.k() {
            return Err(CodingError::VectorLength {
                expected: self.k(),
                got: vector.len(),
            });
        }
        Ok(self.inner.is_innovative(vector.as_slice()))
    }

    /// Current row-reduced basis of received coding vectors.
    pub fn basis(&self) -> Vec<CodingVector> {
        let k = self.k();
        self.inner.rows.iter().map(|r| CodingVector(r[..k].to_vec())).collect()
    }

    pub fn to_basis(&self) -> Basis {
        let k = self.k();
        let mut inner = Echelon::new(k);
        inner.pivots = self.inner.pivots.clone();
        inner.rows = self.inner.rows.iter().map(|r| r[..k].to_vec()).collect();
        Basis { inner }
    }

    /// The stored rows as coded chunks; each is a valid combination of the sources.
    pub fn rows(&self) -> Vec<CodedChunk> {
        let k = self.k();
        self.inner
            .rows
            .iter()
            .map(|r| CodedChunk {
                gen_id: self.gen_id,
                vector: CodingVector(r[..k].to_vec()),
                payload: r[k..].to_vec(),
            })
            .collect()
    }

    /// Source `index` if it is already recoverable, i.e. some row has been
    /// reduced to the unit vector `e_index`.
    pub fn decoded_source(&self, index: usize) -> Option<&[u8]> {
        let k = self.k();
        let at = self.inner.pivots.iter().position(|&p| p == index)?;
        let row = &self.inner.rows[at];
        row[..k]
            .iter()
            .enumerate()
            .all(|(j, &c)| c == u8::from(j == index))
            .then(|| &row[k..])
    }

    /// All `k` sources in index order; fails while rank < k.
    pub fn decode(&self) -> Result<Vec<Vec<u8>>> {
        if !self.is_complete() {
            return Err(CodingError::InsufficientDof {
                rank: self.rank(),
                k: self.k(),
            });
        }
        let k = self.k();
        Ok(self.inner.rows.iter().map(|r| r[k..].to_vec()).collect())
    }

    /// A fresh random combination of the stored rows (recoding without decoding).
    pub fn recode<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CodedChunk> {
        recode(&self.rows(), rng)
    }
}
