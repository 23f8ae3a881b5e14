//! Deterministic discrete-event engine.
//!
//! Time is kept in integer microseconds. Events are ordered by `(time, seq)`
//! where `seq` is a per-engine insertion counter, so equal-time events always
//! dispatch in the order they were scheduled. Cancelled events are skipped
//! lazily when they reach the head of the queue.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Simulation time in microseconds.
pub type Micros = u64;

/// Opaque handle returned by [`Engine::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

/// A dispatched event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub time: Micros,
    pub seq: u64,
    pub payload: P,
}

struct Queued<P> {
    time: Micros,
    seq: u64,
    payload: P,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// Priority-ordered event queue with a monotone clock.
pub struct Engine<P> {
    now: Micros,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    live: HashSet<u64>,
    cancelled: HashSet<u64>,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            live: HashSet::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    /// Number of live (not cancelled) events still queued.
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    /// Enqueues `payload` for dispatch at `time`.
    ///
    /// Scheduling before the current clock is a contract violation and is
    /// reported as [`Error::ScheduleInPast`].
    pub fn schedule(&mut self, time: Micros, payload: P) -> Result<EventHandle> {
        if time < self.now {
            return Err(Error::ScheduleInPast {
                at: time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live.insert(seq);
        self.queue.push(Reverse(Queued { time, seq, payload }));
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` microseconds after the current clock.
    pub fn schedule_in(&mut self, delay: Micros, payload: P) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, payload)
            .expect("a non-negative delay never lands in the past")
    }

    /// Cancels a pending event. Returns `false` if it was already dispatched
    /// or cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if !self.live.remove(&handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    fn skip_cancelled(&mut self) {
        while let Some(Reverse(head)) = self.queue.peek() {
            if self.cancelled.remove(&head.seq) {
                self.queue.pop();
            } else {
                break;
            }
        }
    }

    /// Time of the next live event, if any.
    pub fn peek_time(&mut self) -> Option<Micros> {
        self.skip_cancelled();
        self.queue.peek().map(|Reverse(q)| q.time)
    }

    /// Pops the next live event with `time <= limit`, advancing the clock.
    pub fn pop_until(&mut self, limit: Micros) -> Option<Event<P>> {
        self.skip_cancelled();
        match self.queue.peek() {
            Some(Reverse(head)) if head.time <= limit => {}
            _ => return None,
        }
        let Reverse(q) = self.queue.pop()?;
        self.live.remove(&q.seq);
        self.now = q.time;
        Some(Event {
            time: q.time,
            seq: q.seq,
            payload: q.payload,
        })
    }

    /// Dispatches every event with `time <= t_end` through `handler`, then
    /// sets the clock to `t_end`. Returns the number of events dispatched.
    ///
    /// The handler receives the engine itself so it can schedule follow-up
    /// events (including zero-delay ones, which dispatch in the same run).
    pub fn run_until<F>(&mut self, t_end: Micros, mut handler: F) -> Result<usize>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if t_end < self.now {
            return Err(Error::ScheduleInPast {
                at: t_end,
                now: self.now,
            });
        }
        let mut dispatched = 0;
        while let Some(ev) = self.pop_until(t_end) {
            dispatched += 1;
            handler(self, ev);
        }
        self.now = t_end;
        Ok(dispatched)
    }

    /// Moves the clock forward without dispatching. Used by drivers that pop
    /// events themselves.
    pub fn advance_to(&mut self, t: Micros) {
        debug_assert!(t >= self.now);
        self.now = self.now.max(t);
    }
}

/// Identifier of a per-node random substream.
pub type StreamId = u64;

/// Seeded pseudo-random stream.
///
/// The generator is ChaCha with 8 rounds. The 256-bit key holds `seed` in its
/// first 8 bytes (little-endian) and zeros elsewhere; the 64-bit stream word
/// is the node id, and the block counter starts at zero. Every `u64` is made
/// of two consecutive little-endian output words, low word first. This fixes
/// the sequence independently of platform and of the `rand` crate's
/// higher-level sampling code.
#[derive(Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    seed: u64,
    id: StreamId,
}

impl fmt::Debug for RandomStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomStream")
            .field("seed", &self.seed)
            .field("id", &self.id)
            .finish()
    }
}

impl RandomStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(id);
        RandomStream { rng, seed, id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer in `[lo, hi]` by rejection sampling on 64-bit words.
    pub fn uniform_int(&mut self, lo: u64, hi: u64) -> Result<u64> {
        if lo > hi {
            return Err(Error::EmptyRange { lo, hi });
        }
        let span = hi - lo;
        if span == u64::MAX {
            return Ok(self.next_u64());
        }
        let range = span + 1;
        // Accepting exactly `2^64 - (2^64 mod range)` words keeps every
        // residue equally likely.
        let zone = u64::MAX - (u64::MAX - range + 1) % range;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return Ok(lo + x % range);
            }
        }
    }

    /// Uniform real in `[0, 1)` with 53 bits of precision.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli trial with success probability `p` (clamped to `[0, 1]`).
    /// Consumes no randomness when the outcome is certain.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform_f64() < p
        }
    }
}

/// Free-function form of [`RandomStream::uniform_int`].
pub fn draw_uniform_int(stream: &mut RandomStream, lo: u64, hi: u64) -> Result<u64> {
    stream.uniform_int(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_delay_event_dispatches_next() {
        let mut e: Engine<&str> = Engine::new();
        e.schedule(0, "now").unwrap();
        let ev = e.pop_until(0).unwrap();
        assert_eq!(ev.payload, "now");
        assert_eq!(ev.time, 0);
    }

    #[test]
    fn equal_times_dispatch_in_insertion_order() {
        let mut e: Engine<u32> = Engine::new();
        for i in 0..5 {
            e.schedule(7, i).unwrap();
        }
        let mut seen = Vec::new();
        e.run_until(10, |_, ev| seen.push(ev.payload)).unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn scheduling_in_the_past_fails() {
        let mut e: Engine<()> = Engine::new();
        e.run_until(10, |_, _| {}).unwrap();
        assert_eq!(
            e.schedule(9, ()),
            Err(Error::ScheduleInPast { at: 9, now: 10 })
        );
        assert!(e.schedule(10, ()).is_ok());
    }

    #[test]
    fn run_until_on_empty_queue_advances_clock() {
        let mut e: Engine<()> = Engine::new();
        assert_eq!(e.run_until(100, |_, _| {}).unwrap(), 0);
        assert_eq!(e.now(), 100);
    }

    #[test]
    fn run_until_stops_at_the_limit() {
        let mut e: Engine<u32> = Engine::new();
        for t in [10, 20, 30] {
            e.schedule(t, t as u32).unwrap();
        }
        assert_eq!(e.run_until(25, |_, _| {}).unwrap(), 2);
        assert_eq!(e.now(), 25);
        assert_eq!(e.run_until(30, |_, _| {}).unwrap(), 1);
    }

    #[test]
    fn cancelled_event_never_dispatches() {
        let mut e: Engine<u32> = Engine::new();
        let a = e.schedule(5, 1).unwrap();
        e.schedule(6, 2).unwrap();
        assert!(e.cancel(a));
        assert!(!e.cancel(a));
        let mut seen = Vec::new();
        e.run_until(10, |_, ev| seen.push(ev.payload)).unwrap();
        assert_eq!(seen, vec![2]);
        assert!(!e.cancel(a));
    }

    #[test]
    fn handler_can_schedule_zero_delay_followups() {
        let mut e: Engine<u32> = Engine::new();
        e.schedule(1, 0).unwrap();
        let mut seen = Vec::new();
        e.run_until(5, |eng, ev| {
            seen.push((ev.time, ev.payload));
            if ev.payload < 3 {
                eng.schedule_in(0, ev.payload + 1);
            }
        })
        .unwrap();
        assert_eq!(seen, vec![(1, 0), (1, 1), (1, 2), (1, 3)]);
    }

    #[test]
    fn degenerate_and_inverted_ranges() {
        let mut s = RandomStream::new(1, 0);
        assert_eq!(s.uniform_int(0, 0).unwrap(), 0);
        assert_eq!(s.uniform_int(3, 2), Err(Error::EmptyRange { lo: 3, hi: 2 }));
    }

    #[test]
    fn backoff_range_for_cw16() {
        let mut s = RandomStream::new(9, 4);
        for _ in 0..1000 {
            assert!(s.uniform_int(0, 15).unwrap() <= 15);
        }
    }

    #[test]
    fn substreams_differ_and_repeat() {
        let a: Vec<u64> = {
            let mut s = RandomStream::new(5, 1);
            (0..8).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = RandomStream::new(5, 2);
            (0..8).map(|_| s.next_u64()).collect()
        };
        let a2: Vec<u64> = {
            let mut s = RandomStream::new(5, 1);
            (0..8).map(|_| s.next_u64()).collect()
        };
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
