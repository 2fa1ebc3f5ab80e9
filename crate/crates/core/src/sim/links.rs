use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Physical properties of one bidirectional link between node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub a: usize,
    pub b: usize,
    pub latency: f64,
    /// Chunks per second; `None` means no serialization delay.
    pub capacity: Option<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DirectionState {
    pub busy_until: f64,
    pub sent: u64,
    pub lost: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TxOutcome {
    Arrives(f64),
    Lost,
}

/// All links of a run with per-direction FIFO serialization and loss.
#[derive(Debug, Clone)]
pub struct LinkTable {
    params: Vec<LinkParams>,
    state: Vec<[DirectionState; 2]>,
    /// (link, direction, 1-based ordinal) of packets to drop.
    scripted: BTreeSet<(usize, usize, u64)>,
    rng: ChaCha8Rng,
}

impl LinkTable {
    pub fn new(params: Vec<LinkParams>, scripted: BTreeSet<(usize, usize, u64)>, seed: u64) -> Self {
        let state = params.iter().map(|_| Default::default()).collect();
        Self {
            params,
            state,
            scripted,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self, link: usize) -> &LinkParams {
        &self.params[link]
    }

    pub fn state(&self, link: usize, dir: usize) -> &DirectionState {
        &self.state[link][dir]
    }

    /// Direction 0 runs a→b, direction 1 runs b→a.
    pub fn endpoints(&self, link: usize, dir: usize) -> (usize, usize) {
        let p = &self.params[link];
        if dir == 0 {
            (p.a, p.b)
        } else {
            (p.b, p.a)
        }
    }

    /// Queues a packet of `size` chunks behind earlier ones on the same direction.
    pub fn transmit(&mut self, link: usize, dir: usize, now: f64, size: f64, bytes: u64) -> TxOutcome {
        let p = &self.params[link];
        let st = &mut self.state[link][dir];
        let start = now.max(st.busy_until);
        let done = match p.capacity {
            Some(c) => start + size / c,
            None => start,
        };
        st.busy_until = done;
        st.sent += 1;
        st.bytes += bytes;
        let scripted = self.scripted.contains(&(link, dir, st.sent));
        let random = p.loss > 0.0 && (p.loss >= 1.0 || self.rng.gen_bool(p.loss));
        if scripted || random {
            st.lost += 1;
            TxOutcome::Lost
        } else {
            TxOutcome::Arrives(done + p.latency)
        }
    }
}
