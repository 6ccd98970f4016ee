use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::time::SimTime;

/// An event with its firing time and insertion sequence number.
#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub payload: P,
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.sequence == other.sequence
    }
}

impl<P> Eq for Event<P> {}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Event<P> {
    // reversed so that BinaryHeap pops the earliest (fire_at, sequence)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Min-queue of events ordered by `(fire_at, sequence)`.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Event<P>>,
    next_sequence: u64,
    now: SimTime,
    processed: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_sequence: 0,
            now: SimTime::ZERO,
            processed: 0,
        }
    }

    /// Current clock: the firing time of the last popped event.
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules `payload` at `fire_at`.
    ///
    /// Panics if `fire_at` lies before the current clock: that is a logic
    /// error in the caller, never a modeled outcome.
    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> u64 {
        assert!(
            fire_at >= self.now,
            "event scheduled in the past: fire_at={} now={}",
            fire_at,
            self.now
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event {
            fire_at,
            sequence,
            payload,
        });
        sequence
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.fire_at)
    }

    /// Pops the next event if it fires at or before `until`, advancing the clock.
    pub fn pop_until(&mut self, until: SimTime) -> Option<Event<P>> {
        if self.heap.peek()?.fire_at > until {
            return None;
        }
        let ev = self.heap.pop()?;
        debug_assert!(ev.fire_at >= self.now);
        self.now = ev.fire_at;
        self.processed += 1;
        Some(ev)
    }

    pub fn pop(&mut self) -> Option<Event<P>> {
        self.pop_until(SimTime::MAX)
    }
}
