//! Simulated time and the pending-event queue.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

/// Simulated time in microseconds.
pub type SimTime = u64;

pub const MS: SimTime = 1_000;
pub const SEC: SimTime = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event cap of {cap} exceeded at t={at_us}us")]
pub struct EventCapExceeded {
    pub cap: u64,
    pub at_us: SimTime,
}

struct Entry<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Events fire in `(time, insertion sequence)` order; time never goes back.
pub struct Clock<E> {
    now: SimTime,
    next_seq: u64,
    fired: u64,
    cap: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
}

impl<E> Clock<E> {
    pub fn new(cap: u64) -> Self {
        Self {
            now: 0,
            next_seq: 0,
            fired: 0,
            cap,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn fired(&self) -> u64 {
        self.fired
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Schedules `event` at `at`, clamped to the present.
    pub fn schedule(&mut self, at: SimTime, event: E) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Entry {
            at: at.max(self.now),
            seq,
            event,
        }));
    }

    pub fn schedule_in(&mut self, delay: SimTime, event: E) {
        self.schedule(self.now.saturating_add(delay), event);
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(e)| e.at)
    }

    /// Pops the next event due at or before `until`, advancing time to it.
    pub fn pop_until(&mut self, until: SimTime) -> Result<Option<(SimTime, E)>, EventCapExceeded> {
        match self.queue.peek() {
            Some(Reverse(e)) if e.at <= until => {}
            _ => return Ok(None),
        }
        if self.fired >= self.cap {
            return Err(EventCapExceeded {
                cap: self.cap,
                at_us: self.now,
            });
        }
        let Reverse(entry) = self.queue.pop().expect("peeked");
        self.now = entry.at;
        self.fired += 1;
        Ok(Some((entry.at, entry.event)))
    }

    pub fn pop(&mut self) -> Result<Option<(SimTime, E)>, EventCapExceeded> {
        self.pop_until(SimTime::MAX)
    }

    /// Moves time forward to `t` once every earlier event has fired.
    pub fn advance_to(&mut self, t: SimTime) {
        if self.peek_time().is_none_or(|next| next > t) {
            self.now = self.now.max(t);
        }
    }

    /// Fires events in order through `handler` until the queue is empty.
    /// Returns the final time.
    pub fn run_until_idle(
        &mut self,
        mut handler: impl FnMut(&mut Self, E),
    ) -> Result<SimTime, EventCapExceeded> {
        while let Some((_, ev)) = self.pop()? {
            handler(self, ev);
        }
        Ok(self.now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_times_fire_in_insertion_order() {
        let mut c = Clock::new(100);
        c.schedule(5, "b");
        c.schedule(5, "c");
        c.schedule(1, "a");
        let mut order = Vec::new();
        c.run_until_idle(|_, e| order.push(e)).unwrap();
        assert_eq!(order, ["a", "b", "c"]);
        assert_eq!(c.now(), 5);
    }

    #[test]
    fn empty_queue_returns_immediately() {
        let mut c: Clock<()> = Clock::new(10);
        assert_eq!(c.run_until_idle(|_, _| {}).unwrap(), 0);
    }

    #[test]
    fn self_rescheduling_hits_cap() {
        let mut c = Clock::new(10_000);
        c.schedule(0, ());
        let err = c.run_until_idle(|c, ()| c.schedule_in(1, ())).unwrap_err();
        assert_eq!(err.cap, 10_000);
        assert_eq!(c.fired(), 10_000);
    }

    #[test]
    fn past_events_clamp_to_now() {
        let mut c = Clock::new(10);
        c.schedule(10, 1);
        c.pop().unwrap();
        c.schedule(3, 2);
        assert_eq!(c.pop().unwrap(), Some((10, 2)));
    }
}
