use std::collections::BTreeMap;

use rand::Rng;

use crate::rlnc::{random_nonzero_vector, Basis, CodingVector, DecoderState, Generation};

use super::{Bits, BloomError, FlowId, NcBinding, ZFilter, M};

/// Length field value marking a padding slot in an underfull window.
pub const PAD_LENGTH: u16 = 0xFFFF;

/// A packet of one parent flow as published or restored at egress.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowPacket {
    pub flow: FlowId,
    pub seq: u64,
    /// Forwarding identifier the packet travels under.
    pub zfilter: ZFilter,
    pub payload: Vec<u8>,
}

/// Coded packet of the merged flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncapPacket {
    pub derived: FlowId,
    pub gen_seq: u32,
    pub k: u16,
    /// 2k coefficients: flow A's slots then flow B's.
    pub vector: CodingVector,
    pub parents: (FlowId, FlowId),
    pub parent_filters: (ZFilter, ZFilter),
    pub lengths: Vec<u16>,
    pub payload: Vec<u8>,
}

impl EncapPacket {
    /// derived (8), gen seq (4), k (2), 2k coefficients, parent ids (8+8),
    /// parent filters (32+32), 2k lengths (2 each), payload. Big-endian.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.derived.0.to_be_bytes());
        out.extend_from_slice(&self.gen_seq.to_be_bytes());
        out.extend_from_slice(&self.k.to_be_bytes());
        out.extend_from_slice(self.vector.as_slice());
        out.extend_from_slice(&self.parents.0 .0.to_be_bytes());
        out.extend_from_slice(&self.parents.1 .0.to_be_bytes());
        out.extend_from_slice(&self.parent_filters.0 .0.to_bytes());
        out.extend_from_slice(&self.parent_filters.1 .0.to_bytes());
        for l in &self.lengths {
            out.extend_from_slice(&l.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, BloomError> {
        let mut rest = bytes;
        let mut take = |n: usize| -> Result<&[u8], BloomError> {
            if rest.len() < n {
                return Err(BloomError::Wire("truncated"));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        let u64_at = |b: &[u8]| u64::from_be_bytes(b.try_into().expect("8 bytes"));
        let filter_at = |b: &[u8]| ZFilter(Bits::from_bytes(b.try_into().expect("32 bytes")));
        let derived = FlowId(u64_at(take(8)?));
        let gen_seq = u32::from_be_bytes(take(4)?.try_into().expect("4 bytes"));
        let k = u16::from_be_bytes(take(2)?.try_into().expect("2 bytes"));
        let n = 2 * usize::from(k);
        let vector = CodingVector::new(take(n)?.to_vec());
        let parents = (FlowId(u64_at(take(8)?)), FlowId(u64_at(take(8)?)));
        let parent_filters = (filter_at(take(M / 8)?), filter_at(take(M / 8)?));
        let lengths = take(2 * n)?
            .chunks(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        let payload = rest.to_vec();
        Ok(Self {
            derived,
            gen_seq,
            k,
            vector,
            parents,
            parent_filters,
            lengths,
            payload,
        })
    }
}

fn window_generation(
    window_a: &[Vec<u8>],
    window_b: &[Vec<u8>],
    k: usize,
    gen_seq: u32,
) -> Result<(Generation, Vec<u16>), BloomError> {
    for w in [window_a, window_b] {
        if w.len() > k {
            return Err(BloomError::WindowOverflow { got: w.len(), k });
        }
    }
    let mut sources = Vec::with_capacity(2 * k);
    let mut lengths = Vec::with_capacity(2 * k);
    for w in [window_a, window_b] {
        for i in 0..k {
            match w.get(i) {
                Some(p) => {
                    let len = u16::try_from(p.len())
                        .ok()
                        .filter(|l| *l != PAD_LENGTH)
                        .ok_or(BloomError::PacketTooLong(p.len()))?;
                    lengths.push(len);
                    sources.push(p.clone());
                }
                None => {
                    lengths.push(PAD_LENGTH);
                    sources.push(Vec::new());
                }
            }
        }
    }
    let chunk_size = sources.iter().map(Vec::len).max().unwrap_or(0);
    Ok((Generation::new(u64::from(gen_seq), chunk_size, sources)?, lengths))
}

/// Codes one window with caller-chosen vectors over the 2k sources.
pub fn nc_ingress_with(
    window_a: &[Vec<u8>],
    window_b: &[Vec<u8>],
    binding: &NcBinding,
    gen_seq: u32,
    vectors: &[CodingVector],
) -> Result<Vec<EncapPacket>, BloomError> {
    if binding.parents.0 == binding.parents.1 {
        return Err(BloomError::DegenerateBinding);
    }
    let (generation, lengths) = window_generation(window_a, window_b, binding.k, gen_seq)?;
    vectors
        .iter()
        .map(|v| {
            let c = generation.encode_with(v.clone())?;
            Ok(EncapPacket {
                derived: binding.derived,
                gen_seq,
                k: binding.k as u16,
                vector: c.vector,
                parents: binding.parents,
                parent_filters: (binding.filter_a_only, binding.filter_b_only),
                lengths: lengths.clone(),
                payload: c.payload,
            })
        })
        .collect()
}

/// Codes one window into 2k mutually independent random combinations.
pub fn nc_ingress<R: Rng + ?Sized>(
    window_a: &[Vec<u8>],
    window_b: &[Vec<u8>],
    binding: &NcBinding,
    gen_seq: u32,
    rng: &mut R,
) -> Result<Vec<EncapPacket>, BloomError> {
    let n = 2 * binding.k;
    let mut basis = Basis::new(n);
    let mut vectors = Vec::with_capacity(n);
    while vectors.len() < n {
        let v = random_nonzero_vector(n, rng);
        if basis.insert(&v)? {
            vectors.push(v);
        }
    }
    nc_ingress_with(window_a, window_b, binding, gen_seq, &vectors)
}

fn restore(
    binding: &NcBinding,
    gen_seq: u32,
    filters: (ZFilter, ZFilter),
    lengths: &[u16],
    decoded: &[Vec<u8>],
) -> (Vec<FlowPacket>, Vec<FlowPacket>) {
    let k = binding.k;
    let mut out = (Vec::new(), Vec::new());
    for (slot, (len, payload)) in lengths.iter().zip(decoded).enumerate() {
        if *len == PAD_LENGTH {
            continue;
        }
        let (flow, zfilter, list) = if slot < k {
            (binding.parents.0, filters.0, &mut out.0)
        } else {
            (binding.parents.1, filters.1, &mut out.1)
        };
        list.push(FlowPacket {
            flow,
            zfilter,
            seq: u64::from(gen_seq) * k as u64 + (slot % k) as u64,
            payload: payload[..usize::from(*len)].to_vec(),
        });
    }
    out
}

fn check_packet(binding: &NcBinding, p: &EncapPacket) -> Result<(), BloomError> {
    let n = 2 * binding.k;
    if p.derived != binding.derived || usize::from(p.k) != binding.k || p.lengths.len() != n || p.vector.len() != n {
        return Err(BloomError::ForeignPacket);
    }
    Ok(())
}

/// Decodes one generation's coded packets back into the two parent flows.
pub fn nc_egress(
    packets: &[EncapPacket],
    binding: &NcBinding,
) -> Result<(Vec<FlowPacket>, Vec<FlowPacket>), BloomError> {
    let n = 2 * binding.k;
    let Some(first) = packets.first() else {
        return Err(BloomError::RankDeficient { rank: 0, needed: n });
    };
    let mut state = DecoderState::new(u64::from(first.gen_seq), n);
    for p in packets {
        check_packet(binding, p)?;
        if p.gen_seq != first.gen_seq || p.lengths != first.lengths {
            return Err(BloomError::ForeignPacket);
        }
        state.add(&crate::rlnc::CodedChunk {
            gen_id: u64::from(p.gen_seq),
            vector: p.vector.clone(),
            payload: p.payload.clone(),
        })?;
    }
    if !state.is_complete() {
        return Err(BloomError::RankDeficient {
            rank: state.rank(),
            needed: n,
        });
    }
    Ok(restore(
        binding,
        first.gen_seq,
        first.parent_filters,
        &first.lengths,
        &state.decode()?,
    ))
}

#[derive(Debug, Clone, Default)]
struct PendingWindow {
    a: BTreeMap<u64, Vec<u8>>,
    b: BTreeMap<u64, Vec<u8>>,
    opened: f64,
}

/// Stateful ingress: buffers both flows into aligned windows and codes each
/// window once both halves are full, or pads it on flush.
#[derive(Debug, Clone)]
pub struct IngressCoder {
    binding: NcBinding,
    pending: BTreeMap<u32, PendingWindow>,
    pub generations: u64,
    pub padded_flushes: u64,
    /// Packets that arrived while the other flow's half of their window was short.
    pub stalled_packets: u64,
    pub max_buffered: usize,
}

impl IngressCoder {
    pub fn new(binding: NcBinding) -> Self {
        Self {
            binding,
            pending: BTreeMap::new(),
            generations: 0,
            padded_flushes: 0,
            stalled_packets: 0,
            max_buffered: 0,
        }
    }

    pub fn binding(&self) -> &NcBinding {
        &self.binding
    }

    pub fn buffered(&self) -> usize {
        self.pending.values().map(|w| w.a.len() + w.b.len()).sum()
    }

    /// Accepts a packet of either parent flow; returns coded packets when a window completes.
    pub fn push<R: Rng + ?Sized>(
        &mut self,
        packet: FlowPacket,
        now: f64,
        rng: &mut R,
    ) -> Result<Vec<EncapPacket>, BloomError> {
        let k = self.binding.k as u64;
        let gen_seq = u32::try_from(packet.seq / k).map_err(|_| BloomError::Wire("sequence overflow"))?;
        let is_a = if packet.flow == self.binding.parents.0 {
            true
        } else if packet.flow == self.binding.parents.1 {
            false
        } else {
            return Err(BloomError::ForeignPacket);
        };
        let w = self.pending.entry(gen_seq).or_insert_with(|| PendingWindow {
            opened: now,
            ..PendingWindow::default()
        });
        let slot = packet.seq % k;
        if is_a {
            w.a.insert(slot, packet.payload);
        } else {
            w.b.insert(slot, packet.payload);
        }
        let (mine, other) = if is_a {
            (w.a.len(), w.b.len())
        } else {
            (w.b.len(), w.a.len())
        };
        if other < mine {
            self.stalled_packets += 1;
        }
        let full = w.a.len() as u64 == k && w.b.len() as u64 == k;
        self.max_buffered = self.max_buffered.max(self.buffered());
        if full {
            return self.emit(gen_seq, rng);
        }
        Ok(Vec::new())
    }

    fn emit<R: Rng + ?Sized>(&mut self, gen_seq: u32, rng: &mut R) -> Result<Vec<EncapPacket>, BloomError> {
        let w = self.pending.remove(&gen_seq).unwrap_or_default();
        let k = self.binding.k as u64;
        let full = w.a.len() as u64 == k && w.b.len() as u64 == k;
        if !full {
            self.padded_flushes += 1;
        }
        // Missing slots inside a window are padded like missing tails.
        let fill = |m: &BTreeMap<u64, Vec<u8>>| -> Option<Vec<Vec<u8>>> {
            let v: Vec<Vec<u8>> = m.values().cloned().collect();
            m.keys().enumerate().all(|(i, s)| *s == i as u64).then_some(v)
        };
        let (Some(a), Some(b)) = (fill(&w.a), fill(&w.b)) else {
            return Err(BloomError::Wire("window has interior gaps"));
        };
        self.generations += 1;
        nc_ingress(&a, &b, &self.binding, gen_seq, rng)
    }

    /// Pads and codes every window opened at or before `now - timeout`.
    pub fn flush_expired<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        timeout: f64,
        rng: &mut R,
    ) -> Result<Vec<EncapPacket>, BloomError> {
        let due: Vec<u32> = self
            .pending
            .iter()
            .filter(|(_, w)| now - w.opened >= timeout)
            .map(|(g, _)| *g)
            .collect();
        let mut out = Vec::new();
        for g in due {
            out.extend(self.emit(g, rng)?);
        }
        Ok(out)
    }

    /// Pads and codes everything still buffered.
    pub fn flush_all<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<EncapPacket>, BloomError> {
        self.flush_expired(f64::INFINITY, 0.0, rng)
    }
}

#[derive(Debug, Clone)]
struct EgressWindow {
    state: DecoderState,
    lengths: Vec<u16>,
    filters: (ZFilter, ZFilter),
    first_seen: f64,
}

/// Restored packets of flow A and flow B.
pub type RestoredPair = (Vec<FlowPacket>, Vec<FlowPacket>);

/// Stateful egress: collects coded packets per generation and restores the
/// parent flows once full rank is reached.
#[derive(Debug, Clone)]
pub struct EgressDecoder {
    binding: NcBinding,
    windows: BTreeMap<u32, EgressWindow>,
    finished: std::collections::BTreeSet<u32>,
    pub decoded_generations: u64,
    pub lost_generations: u64,
    pub redundant_packets: u64,
}

impl EgressDecoder {
    pub fn new(binding: NcBinding) -> Self {
        Self {
            binding,
            windows: BTreeMap::new(),
            finished: Default::default(),
            decoded_generations: 0,
            lost_generations: 0,
            redundant_packets: 0,
        }
    }

    pub fn binding(&self) -> &NcBinding {
        &self.binding
    }

    /// Returns the restored packets of both parent flows once a generation decodes.
    pub fn absorb(&mut self, p: &EncapPacket, now: f64) -> Result<Option<RestoredPair>, BloomError> {
        check_packet(&self.binding, p)?;
        if self.finished.contains(&p.gen_seq) {
            self.redundant_packets += 1;
            return Ok(None);
        }
        let n = 2 * self.binding.k;
        let w = self.windows.entry(p.gen_seq).or_insert_with(|| EgressWindow {
            state: DecoderState::new(u64::from(p.gen_seq), n),
            lengths: p.lengths.clone(),
            filters: p.parent_filters,
            first_seen: now,
        });
        let absorbed = w.state.add(&crate::rlnc::CodedChunk {
            gen_id: u64::from(p.gen_seq),
            vector: p.vector.clone(),
            payload: p.payload.clone(),
        })?;
        if absorbed == crate::rlnc::Absorb::Redundant {
            self.redundant_packets += 1;
        }
        if !w.state.is_complete() {
            return Ok(None);
        }
        let w = self.windows.remove(&p.gen_seq).expect("present");
        self.finished.insert(p.gen_seq);
        self.decoded_generations += 1;
        Ok(Some(restore(
            &self.binding,
            p.gen_seq,
            w.filters,
            &w.lengths,
            &w.state.decode()?,
        )))
    }

    /// Drops generations first seen at or before `now - timeout`; returns how many.
    pub fn expire(&mut self, now: f64, timeout: f64) -> usize {
        let due: Vec<u32> = self
            .windows
            .iter()
            .filter(|(_, w)| now - w.first_seen >= timeout)
            .map(|(g, _)| *g)
            .collect();
        for g in &due {
            self.windows.remove(g);
            self.finished.insert(*g);
        }
        self.lost_generations += due.len() as u64;
        due.len()
    }

    pub fn pending(&self) -> usize {
        self.windows.len()
    }
}

#[cfg(test)]
mod tests {
    use super::super::{DeliveryTree, Edge};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binding(k: usize) -> NcBinding {
        let a = DeliveryTree {
            flow: FlowId(10),
            root: 0,
            edges: [Edge::new(0, 2), Edge::new(2, 3)].into(),
            subscribers: [3].into(),
        };
        let b = DeliveryTree {
            flow: FlowId(20),
            root: 1,
            edges: [Edge::new(1, 2), Edge::new(2, 3)].into(),
            subscribers: [3].into(),
        };
        NcBinding::new(&a, &b, [Edge::new(2, 3)].into(), 2, [3].into(), k, 5).unwrap()
    }

    #[test]
    fn k1_sum_of_both_flows() {
        let b = binding(1);
        let out = nc_ingress_with(&[vec![1, 2, 3]], &[vec![4, 5]], &b, 0, &[CodingVector::new(vec![1, 1])]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].payload, vec![1 ^ 4, 2 ^ 5, 3]);
        assert_eq!(out[0].vector.as_slice(), &[1, 1]);
        assert_eq!(out[0].lengths, vec![3, 2]);
    }

    #[test]
    fn k2_roundtrip_and_redundant_extra() {
        let b = binding(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wa = vec![vec![1u8; 5], vec![2u8; 3]];
        let wb = vec![vec![3u8; 4], vec![4u8; 1]];
        let coded = nc_ingress(&wa, &wb, &b, 7, &mut rng).unwrap();
        assert_eq!(coded.len(), 4);
        let (ra, rb) = nc_egress(&coded, &b).unwrap();
        assert_eq!(ra.iter().map(|p| p.payload.clone()).collect::<Vec<_>>(), wa);
        assert_eq!(rb.iter().map(|p| p.payload.clone()).collect::<Vec<_>>(), wb);
        assert_eq!(ra.iter().map(|p| p.seq).collect::<Vec<_>>(), [14, 15]);
        assert!(ra.iter().all(|p| p.flow == FlowId(10) && p.zfilter == b.filter_a_only));
        assert!(rb.iter().all(|p| p.flow == FlowId(20) && p.zfilter == b.filter_b_only));

        let mut dec = EgressDecoder::new(b.clone());
        let mut restored = None;
        for p in &coded {
            if let Some(r) = dec.absorb(p, 0.0).unwrap() {
                restored = Some(r);
            }
        }
        assert_eq!(restored, Some((ra, rb)));
        assert_eq!(dec.absorb(&coded[0], 0.0).unwrap(), None);
        assert_eq!(dec.redundant_packets, 1);
    }

    #[test]
    fn rank_deficit_is_a_loss() {
        let b = binding(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let coded = nc_ingress(&[vec![1], vec![2]], &[vec![3], vec![4]], &b, 0, &mut rng).unwrap();
        assert!(matches!(
            nc_egress(&coded[..3], &b),
            Err(BloomError::RankDeficient { rank: 3, needed: 4 })
        ));
        let mut dec = EgressDecoder::new(b);
        for p in &coded[..3] {
            assert_eq!(dec.absorb(p, 1.0).unwrap(), None);
        }
        assert_eq!(dec.expire(1.5, 1.0), 0);
        assert_eq!(dec.expire(2.0, 1.0), 1);
        assert_eq!(dec.lost_generations, 1);
        assert_eq!(dec.absorb(&coded[3], 2.1).unwrap(), None);
    }

    #[test]
    fn degenerate_binding_rejected() {
        let mut b = binding(1);
        b.parents.1 = b.parents.0;
        assert_eq!(
            nc_ingress_with(&[vec![1]], &[vec![2]], &b, 0, &[CodingVector::new(vec![1, 1])]),
            Err(BloomError::DegenerateBinding)
        );
    }

    #[test]
    fn coder_waits_for_slower_flow_and_pads_on_flush() {
        let b = binding(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut coder = IngressCoder::new(b.clone());
        let pkt = |flow, seq: u64| FlowPacket {
            flow: FlowId(flow),
            seq,
            zfilter: if flow == 10 { b.filter_a_only } else { b.filter_b_only },
            payload: vec![seq as u8 + 1; 2],
        };
        assert!(coder.push(pkt(10, 0), 0.0, &mut rng).unwrap().is_empty());
        assert!(coder.push(pkt(10, 1), 0.1, &mut rng).unwrap().is_empty());
        assert!(coder.push(pkt(20, 0), 0.2, &mut rng).unwrap().is_empty());
        assert_eq!(coder.stalled_packets, 2);
        let out = coder.push(pkt(20, 1), 0.3, &mut rng).unwrap();
        assert_eq!(out.len(), 4);
        assert!(coder.push(pkt(10, 2), 1.0, &mut rng).unwrap().is_empty());
        assert!(coder.flush_expired(1.5, 1.0, &mut rng).unwrap().is_empty());
        let flushed = coder.flush_expired(2.0, 1.0, &mut rng).unwrap();
        assert_eq!(flushed.len(), 4);
        assert_eq!(coder.padded_flushes, 1);
        assert_eq!(flushed[0].lengths, vec![2, PAD_LENGTH, PAD_LENGTH, PAD_LENGTH]);
        let (ra, rb) = nc_egress(&flushed, &b).unwrap();
        assert_eq!(ra, vec![pkt(10, 2)]);
        assert!(rb.is_empty());
    }

    #[test]
    fn golden_encapsulation() {
        let b = binding(1);
        let p = EncapPacket {
            derived: FlowId(0x0102_0304_0506_0708),
            gen_seq: 9,
            k: 1,
            vector: CodingVector::new(vec![1, 1]),
            parents: (FlowId(10), FlowId(20)),
            parent_filters: (ZFilter::default(), ZFilter::default()),
            lengths: vec![3, PAD_LENGTH],
            payload: vec![0xAB],
        };
        let w = p.to_wire();
        assert_eq!(w.len(), 8 + 4 + 2 + 2 + 16 + 64 + 4 + 1);
        assert_eq!(&w[..16], &[1, 2, 3, 4, 5, 6, 7, 8, 0, 0, 0, 9, 0, 1, 1, 1]);
        assert_eq!(&w[16..24], &10u64.to_be_bytes());
        assert_eq!(&w[24..32], &20u64.to_be_bytes());
        assert!(w[32..96].iter().all(|&x| x == 0));
        assert_eq!(&w[96..], &[0, 3, 0xFF, 0xFF, 0xAB]);
        assert_eq!(EncapPacket::from_wire(&w).unwrap(), p);
        assert!(EncapPacket::from_wire(&w[..20]).is_err());
        let real = nc_ingress_with(&[vec![7]], &[vec![8]], &b, 0, &[CodingVector::new(vec![2, 3])]).unwrap();
        assert_eq!(EncapPacket::from_wire(&real[0].to_wire()).unwrap(), real[0]);
    }
}
