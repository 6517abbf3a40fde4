//! Time sources.
//!
//! [`VirtualClock`] is a discrete-event scheduler: time only moves when an
//! event is popped or a latency is charged, so identical schedules always
//! produce identical timestamps. [`WallClock`] measures real elapsed time for
//! live sessions.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::types::Timestamp;

pub trait Clock {
    fn now(&self) -> Timestamp;
}

#[derive(Debug)]
struct Entry<E> {
    at: Timestamp,
    lane: u8,
    seq: u64,
    event: E,
}

impl<E> Entry<E> {
    fn key(&self) -> (Timestamp, u8, u64) {
        (self.at, self.lane, self.seq)
    }
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
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
        self.key().cmp(&other.key())
    }
}

/// Deterministic virtual clock with an attached event schedule.
///
/// Events due at the same instant are ordered by `lane` (lower first), then
/// by insertion order.
#[derive(Debug)]
pub struct VirtualClock<E = ()> {
    now: Timestamp,
    seq: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
}

impl<E> Default for VirtualClock<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> VirtualClock<E> {
    pub fn new() -> Self {
        Self { now: Timestamp::ZERO, seq: 0, queue: BinaryHeap::new() }
    }

    pub fn starting_at(now: Timestamp) -> Self {
        Self { now, ..Self::new() }
    }

    /// Schedules `event` to fire `delay_ms` after the current instant.
    pub fn schedule(&mut self, delay_ms: u64, event: E) {
        self.schedule_in_lane(delay_ms, 0, event);
    }

    pub fn schedule_in_lane(&mut self, delay_ms: u64, lane: u8, event: E) {
        let at = self.now.after(delay_ms);
        self.schedule_at(at, lane, event);
    }

    /// Schedules at an absolute instant. Instants in the past fire at `now`.
    pub fn schedule_at(&mut self, at: Timestamp, lane: u8, event: E) {
        let at = at.max(self.now);
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Entry { at, lane, seq, event }));
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.queue.peek().map(|Reverse(e)| e.at)
    }

    /// Pops the next due event and moves the clock to its instant.
    pub fn pop(&mut self) -> Option<(Timestamp, E)> {
        let Reverse(entry) = self.queue.pop()?;
        self.now = self.now.max(entry.at);
        Some((entry.at, entry.event))
    }

    /// Drops every pending event for which `keep` returns false. Time does not move.
    pub fn retain(&mut self, mut keep: impl FnMut(&E) -> bool) {
        self.queue.retain(|Reverse(e)| keep(&e.event));
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn advance_by(&mut self, ms: u64) {
        self.now = self.now.after(ms);
    }

    /// Moves time forward to `at`; never moves it backwards.
    pub fn advance_to(&mut self, at: Timestamp) {
        self.now = self.now.max(at);
    }
}

impl<E> Clock for VirtualClock<E> {
    fn now(&self) -> Timestamp {
        self.now
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    origin: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl WallClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }

    /// Blocks until the clock reads at least `at`.
    pub fn sleep_until(&self, at: Timestamp) {
        let now = self.now();
        if at > now {
            std::thread::sleep(Duration::from_millis(at - now));
        }
    }
}

impl Clock for WallClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.origin.elapsed().as_millis() as u64)
    }
}
