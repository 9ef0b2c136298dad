//! Discrete-event core: an integer-nanosecond clock, a (time, sequence)
//! ordered event queue and a seeded random source.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;

/// A point in (or span of) simulated time, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e9).round().max(0.0) as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_add(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_add(rhs.0).map(SimTime)
    }

    /// Time to clock `bytes` onto a link of `rate_bps`, rounded up.
    pub fn serialization(bytes: u64, rate_bps: u64) -> SimTime {
        let bits = bytes as u128 * 8 * 1_000_000_000;
        SimTime(bits.div_ceil(rate_bps as u128) as u64)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ns = self.0;
        if ns % 1_000_000_000 == 0 {
            write!(f, "{}s", ns / 1_000_000_000)
        } else if ns % 1_000_000 == 0 {
            write!(f, "{}ms", ns / 1_000_000)
        } else if ns % 1_000 == 0 {
            write!(f, "{}us", ns / 1_000)
        } else {
            write!(f, "{ns}ns")
        }
    }
}

struct Scheduled<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed so the max-heap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// An event popped from the queue, with the ordering key it fired under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fired<E> {
    pub at: SimTime,
    pub seq: u64,
    pub event: E,
}

/// Virtual clock plus pending events. Events with equal fire times fire in
/// the order they were scheduled.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Scheduled<E>>,
    fired: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            fired: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn fired(&self) -> u64 {
        self.fired
    }

    /// Queues `event` at `at`, returning its tie-break sequence number.
    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<u64, SimError> {
        if at < self.now {
            return Err(SimError::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { at, seq, event });
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, event: E) -> Result<u64, SimError> {
        self.schedule(self.now + delay, event)
    }

    /// Pops the next event due at or before `limit`, advancing the clock to
    /// its fire time.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<Fired<E>> {
        match self.heap.peek() {
            Some(head) if head.at <= limit => {}
            _ => return None,
        }
        let Scheduled { at, seq, event } = self.heap.pop()?;
        debug_assert!(at >= self.now);
        self.now = at;
        self.fired += 1;
        Some(Fired { at, seq, event })
    }

    /// Fires every event due at or before `t`; handlers may schedule more.
    /// Leaves the clock at `t`.
    pub fn run_until<F>(&mut self, t: SimTime, mut handler: F) -> Result<(), SimError>
    where
        F: FnMut(&mut Self, Fired<E>) -> Result<(), SimError>,
    {
        if t < self.now {
            return Err(SimError::ScheduleInPast { at: t, now: self.now });
        }
        while let Some(fired) = self.pop_until(t) {
            handler(self, fired)?;
        }
        self.now = t;
        Ok(())
    }
}

/// Seeded pseudo-random stream. ChaCha8 keeps draw sequences identical
/// across platforms for a given seed.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform01(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform01() < p
    }
}
