use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SimError;

struct Pending<E> {
    time: f64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Pending<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Pending<E> {}

impl<E> PartialOrd for Pending<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Pending<E> {
    // Reversed so the max-heap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Event queue ordered by (time, scheduling sequence).
pub struct Scheduler<E> {
    now: f64,
    seq: u64,
    dispatched: u64,
    heap: BinaryHeap<Pending<E>>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            now: 0.0,
            seq: 0,
            dispatched: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn schedule(&mut self, at: f64, event: E) -> Result<(), SimError> {
        if at.is_nan() || at < self.now {
            return Err(SimError::Internal(format!(
                "event scheduled at {at} before current time {}",
                self.now
            )));
        }
        self.heap.push(Pending {
            time: at,
            seq: self.seq,
            event,
        });
        self.seq += 1;
        Ok(())
    }

    /// Pops the next event at or before `t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: f64) -> Option<(f64, E)> {
        if self.heap.peek()?.time > t_end {
            return None;
        }
        let p = self.heap.pop()?;
        self.now = p.time;
        self.dispatched += 1;
        Some((p.time, p.event))
    }

    /// Dispatches every event up to `t_end` to `handler`.
    pub fn run_until<F>(&mut self, t_end: f64, mut handler: F) -> Result<(), SimError>
    where
        F: FnMut(&mut Self, f64, E) -> Result<(), SimError>,
    {
        while let Some((t, e)) = self.pop_until(t_end) {
            handler(self, t, e)?;
        }
        Ok(())
    }
}
