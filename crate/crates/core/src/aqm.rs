//! FIFO bottleneck with a constant drain rate and ECN marking on dequeue.
//!
//! The marking decision is driven by one of two delay metrics:
//!
//! * sojourn time: how long the departing packet waited, i.e. the queue
//!   that was in front of it when it arrived;
//! * expected service time (EST): how long the backlog left *behind* the
//!   departing packet will take to drain at the link rate.
//!
//! Either metric feeds a step (threshold) or a linear ramp. Ramp marks are
//! Bernoulli draws from the scenario's [`RandomSource`].

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{RandomSource, SimTime};
use crate::error::{Result, SimError};

pub const DEFAULT_PACKET_BYTES: u32 = 1500;
pub const DEFAULT_DROP_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One data segment on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub flow: FlowId,
    pub seq: u64,
    pub size_bytes: u32,
    /// When the sender handed the segment to its NIC; echoed on the ack for
    /// RTT sampling.
    pub sent_at: SimTime,
    pub enqueue_time: SimTime,
    pub ce: bool,
}

impl PacketRecord {
    pub fn new(flow: FlowId, seq: u64, sent_at: SimTime) -> Self {
        PacketRecord {
            flow,
            seq,
            size_bytes: DEFAULT_PACKET_BYTES,
            sent_at,
            enqueue_time: sent_at,
            ce: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayMetric {
    Sojourn,
    Est,
}

impl fmt::Display for DelayMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DelayMetric::Sojourn => "SOJ",
            DelayMetric::Est => "EST",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkShape {
    /// Mark every packet whose delay strictly exceeds the threshold.
    Step { threshold: SimTime },
    /// Mark with probability rising linearly from 0 at `min` to 1 at `max`.
    Ramp { min: SimTime, max: SimTime },
}

impl MarkShape {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MarkShape::Step { threshold } if threshold == SimTime::ZERO => {
                Err(SimError::config("step threshold must be positive"))
            }
            MarkShape::Ramp { min, max } if min == SimTime::ZERO || max <= min => Err(
                SimError::config(format!("ramp needs 0 < min < max, got {min}..{max}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AqmConfig {
    pub metric: DelayMetric,
    pub shape: MarkShape,
    pub drop_cap_pkts: usize,
}

impl AqmConfig {
    pub fn step(metric: DelayMetric, threshold: SimTime) -> Self {
        AqmConfig {
            metric,
            shape: MarkShape::Step { threshold },
            drop_cap_pkts: DEFAULT_DROP_CAP,
        }
    }

    pub fn ramp(metric: DelayMetric, min: SimTime, max: SimTime) -> Self {
        AqmConfig {
            metric,
            shape: MarkShape::Ramp { min, max },
            drop_cap_pkts: DEFAULT_DROP_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.drop_cap_pkts == 0 {
            return Err(SimError::config("drop_cap_pkts must be at least 1"));
        }
        self.shape.validate()
    }
}

/// Marking probability for a measured delay.
pub fn marking_probability(delay: SimTime, shape: MarkShape) -> f64 {
    match shape {
        MarkShape::Step { threshold } => {
            if delay > threshold {
                1.0
            } else {
                0.0
            }
        }
        MarkShape::Ramp { min, max } => {
            if delay <= min {
                0.0
            } else if delay >= max {
                1.0
            } else {
                (delay - min).as_nanos() as f64 / (max - min).as_nanos() as f64
            }
        }
    }
}

/// Everything observed about one packet as it leaves the queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Dequeued {
    pub packet: PacketRecord,
    pub sojourn: SimTime,
    pub est: SimTime,
    pub probability: f64,
    pub marked: bool,
    /// Serialization time of this packet on the bottleneck.
    pub tx_time: SimTime,
}

#[derive(Debug, Clone)]
pub struct BottleneckQueue {
    cfg: AqmConfig,
    drain_rate_bps: u64,
    fifo: VecDeque<PacketRecord>,
    backlog_bytes: u64,
    drops: u64,
    marks: u64,
    dequeued: u64,
}

impl BottleneckQueue {
    pub fn new(cfg: AqmConfig, drain_rate_bps: u64) -> Result<Self> {
        cfg.validate()?;
        if drain_rate_bps == 0 {
            return Err(SimError::config("bottleneck rate must be positive"));
        }
        Ok(BottleneckQueue {
            cfg,
            drain_rate_bps,
            fifo: VecDeque::new(),
            backlog_bytes: 0,
            drops: 0,
            marks: 0,
            dequeued: 0,
        })
    }

    pub fn config(&self) -> &AqmConfig {
        &self.cfg
    }

    pub fn drain_rate_bps(&self) -> u64 {
        self.drain_rate_bps
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn backlog_bytes(&self) -> u64 {
        self.backlog_bytes
    }

    pub fn drops(&self) -> u64 {
        self.drops
    }

    pub fn marks(&self) -> u64 {
        self.marks
    }

    pub fn dequeued(&self) -> u64 {
        self.dequeued
    }

    /// Time to drain the current backlog at the link rate.
    pub fn backlog_delay(&self) -> SimTime {
        SimTime::serialization(self.backlog_bytes, self.drain_rate_bps)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PacketRecord> {
        self.fifo.iter()
    }

    /// Appends `pkt` stamped with `now`, or drops it when the queue is at
    /// its packet cap. Returns whether the packet was accepted.
    pub fn enqueue(&mut self, mut pkt: PacketRecord, now: SimTime) -> bool {
        debug_assert!(!pkt.ce, "senders never pre-mark");
        if self.fifo.len() >= self.cfg.drop_cap_pkts {
            self.drops += 1;
            return false;
        }
        pkt.enqueue_time = now;
        self.backlog_bytes += u64::from(pkt.size_bytes);
        self.fifo.push_back(pkt);
        true
    }

    /// The configured delay metric for `head`, which must already have been
    /// removed from the backlog.
    pub fn delay_metric(&self, head: &PacketRecord, now: SimTime) -> SimTime {
        match self.cfg.metric {
            DelayMetric::Sojourn => now.saturating_sub(head.enqueue_time),
            DelayMetric::Est => self.backlog_delay(),
        }
    }

    /// Removes the head packet and decides its CE mark.
    pub fn dequeue(&mut self, now: SimTime, rng: &mut RandomSource) -> Result<Dequeued> {
        let mut packet = self.fifo.pop_front().ok_or(SimError::QueueEmpty)?;
        self.backlog_bytes -= u64::from(packet.size_bytes);
        self.dequeued += 1;

        let sojourn = now.saturating_sub(packet.enqueue_time);
        let est = self.backlog_delay();
        let delay = match self.cfg.metric {
            DelayMetric::Sojourn => sojourn,
            DelayMetric::Est => est,
        };
        let probability = marking_probability(delay, self.cfg.shape);
        // Only draw when the outcome is genuinely random so step runs never
        // consume the stream.
        let marked = if probability >= 1.0 {
            true
        } else if probability <= 0.0 {
            false
        } else {
            rng.bernoulli(probability)
        };
        if marked {
            packet.ce = true;
            self.marks += 1;
        }
        let tx_time = SimTime::serialization(u64::from(packet.size_bytes), self.drain_rate_bps);
        Ok(Dequeued {
            packet,
            sojourn,
            est,
            probability,
            marked,
            tx_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MBPS: u64 = 1_000_000;

    fn pkt(flow: u32, seq: u64) -> PacketRecord {
        PacketRecord::new(FlowId(flow), seq, SimTime::ZERO)
    }

    fn step(metric: DelayMetric, ms: f64) -> AqmConfig {
        AqmConfig::step(metric, SimTime::from_secs_f64(ms / 1e3))
    }

    #[test]
    fn enqueue_updates_backlog() {
        let mut q = BottleneckQueue::new(step(DelayMetric::Sojourn, 2.0), 100 * MBPS).unwrap();
        assert!(q.enqueue(pkt(0, 0), SimTime::ZERO));
        assert_eq!(q.backlog_bytes(), 1500);
    }

    #[test]
    fn enqueue_at_cap_drops_and_counts() {
        let mut cfg = step(DelayMetric::Sojourn, 2.0);
        cfg.drop_cap_pkts = 2;
        let mut q = BottleneckQueue::new(cfg, 100 * MBPS).unwrap();
        assert!(q.enqueue(pkt(0, 0), SimTime::ZERO));
        assert!(q.enqueue(pkt(0, 1), SimTime::ZERO));
        assert!(!q.enqueue(pkt(0, 2), SimTime::ZERO));
        assert_eq!(q.drops(), 1);
        assert_eq!(q.len(), 2);
        assert_eq!(q.backlog_bytes(), 3000);
    }

    #[test]
    fn fifo_order() {
        let mut q = BottleneckQueue::new(step(DelayMetric::Sojourn, 2.0), 100 * MBPS).unwrap();
        let mut rng = RandomSource::new(1);
        q.enqueue(pkt(0, 0), SimTime::ZERO);
        q.enqueue(pkt(1, 0), SimTime::ZERO);
        assert_eq!(q.dequeue(SimTime::ZERO, &mut rng).unwrap().packet.flow, FlowId(0));
        assert_eq!(q.dequeue(SimTime::ZERO, &mut rng).unwrap().packet.flow, FlowId(1));
    }

    #[test]
    fn sojourn_is_wait_time() {
        let q = BottleneckQueue::new(step(DelayMetric::Sojourn, 2.0), 100 * MBPS).unwrap();
        let mut head = pkt(0, 0);
        head.enqueue_time = SimTime::from_millis(1);
        let d = q.delay_metric(&head, SimTime::from_micros(3_500));
        assert_eq!(d, SimTime::from_micros(2_500));
    }

    #[test]
    fn est_is_backlog_behind_head() {
        let mut q = BottleneckQueue::new(step(DelayMetric::Est, 2.0), 100 * MBPS).unwrap();
        let head = pkt(0, 0);
        assert_eq!(q.delay_metric(&head, SimTime::ZERO), SimTime::ZERO);
        // 25 000 B behind the head: 20 packets of 1250 B.
        for i in 0..20 {
            let mut p = pkt(1, i);
            p.size_bytes = 1250;
            q.enqueue(p, SimTime::ZERO);
        }
        assert_eq!(q.delay_metric(&head, SimTime::ZERO), SimTime::from_millis(2));
    }

    #[test]
    fn step_and_ramp_probabilities() {
        let step = MarkShape::Step {
            threshold: SimTime::from_millis(2),
        };
        assert_eq!(marking_probability(SimTime::from_micros(1_900), step), 0.0);
        assert_eq!(marking_probability(SimTime::from_millis(2), step), 0.0);
        assert_eq!(marking_probability(SimTime::from_micros(2_001), step), 1.0);

        let ramp = MarkShape::Ramp {
            min: SimTime::from_millis(2),
            max: SimTime::from_millis(4),
        };
        assert_eq!(marking_probability(SimTime::from_millis(3), ramp), 0.5);
        assert_eq!(marking_probability(SimTime::from_millis(5), ramp), 1.0);
        assert_eq!(marking_probability(SimTime::from_millis(1), ramp), 0.0);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(MarkShape::Ramp {
            min: SimTime::from_millis(4),
            max: SimTime::from_millis(2)
        }
        .validate()
        .is_err());
        assert!(MarkShape::Step {
            threshold: SimTime::ZERO
        }
        .validate()
        .is_err());
        assert!(BottleneckQueue::new(step(DelayMetric::Est, 1.0), 0).is_err());
    }

    #[test]
    fn dequeue_empty_is_an_error() {
        let mut q = BottleneckQueue::new(step(DelayMetric::Sojourn, 2.0), 100 * MBPS).unwrap();
        let mut rng = RandomSource::new(1);
        assert!(matches!(
            q.dequeue(SimTime::ZERO, &mut rng),
            Err(SimError::QueueEmpty)
        ));
    }

    #[test]
    fn step_marks_deterministically_above_threshold() {
        let mut q = BottleneckQueue::new(step(DelayMetric::Sojourn, 2.0), 100 * MBPS).unwrap();
        let mut rng = RandomSource::new(1);
        q.enqueue(pkt(0, 0), SimTime::ZERO);
        let d = q.dequeue(SimTime::from_millis(3), &mut rng).unwrap();
        assert!(d.marked && d.packet.ce);
        assert_eq!(q.marks(), 1);
    }

    #[test]
    fn ramp_marks_reproducible_for_a_seed() {
        let cfg = AqmConfig::ramp(
            DelayMetric::Sojourn,
            SimTime::from_millis(2),
            SimTime::from_millis(4),
        );
        let run = |seed| {
            let mut q = BottleneckQueue::new(cfg, 100 * MBPS).unwrap();
            let mut rng = RandomSource::new(seed);
            (0..200)
                .map(|i| {
                    q.enqueue(pkt(0, i), SimTime::ZERO);
                    q.dequeue(SimTime::from_millis(3), &mut rng).unwrap().marked
                })
                .collect::<Vec<_>>()
        };
        let a = run(9);
        assert_eq!(a, run(9));
        let frac = a.iter().filter(|m| **m).count() as f64 / a.len() as f64;
        assert!((0.35..0.65).contains(&frac), "mark fraction {frac}");
    }

    #[test]
    fn back_to_back_burst_self_delay_stays_below_step() {
        // Ten packets land at once on an idle 100 Mb/s link; each waits for
        // the ones ahead of it to serialize.
        let mut q = BottleneckQueue::new(step(DelayMetric::Sojourn, 2.0), 100 * MBPS).unwrap();
        let mut rng = RandomSource::new(1);
        for i in 0..10 {
            q.enqueue(pkt(0, i), SimTime::ZERO);
        }
        let mut now = SimTime::ZERO;
        let mut sojourns = Vec::new();
        while !q.is_empty() {
            let d = q.dequeue(now, &mut rng).unwrap();
            assert!(!d.marked);
            sojourns.push(d.sojourn);
            now += d.tx_time;
        }
        assert_eq!(sojourns[0], SimTime::ZERO);
        assert_eq!(sojourns[9], SimTime::from_micros(1_080));
        // A smooth packet arriving as the burst lands waits for all of it.
        q.enqueue(pkt(1, 0), SimTime::ZERO);
        let d = q.dequeue(now, &mut rng).unwrap();
        assert!(d.sojourn >= SimTime::from_micros(1_200));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn backlog_matches_queued_sizes(ops in proptest::collection::vec((any::<bool>(), 40u32..1501), 1..300)) {
                let mut q = BottleneckQueue::new(step(DelayMetric::Est, 1.0), 10 * MBPS).unwrap();
                let mut rng = RandomSource::new(3);
                for (i, (push, size)) in ops.into_iter().enumerate() {
                    if push || q.is_empty() {
                        let mut p = pkt(0, i as u64);
                        p.size_bytes = size;
                        q.enqueue(p, SimTime::from_nanos(i as u64));
                    } else {
                        q.dequeue(SimTime::from_nanos(i as u64), &mut rng).unwrap();
                    }
                    let sum: u64 = q.iter().map(|p| u64::from(p.size_bytes)).sum();
                    prop_assert_eq!(sum, q.backlog_bytes());
                }
            }

            #[test]
            fn ramp_probability_is_clamped_and_monotone(a in 0u64..10_000_000, b in 0u64..10_000_000) {
                let ramp = MarkShape::Ramp { min: SimTime::from_millis(2), max: SimTime::from_millis(4) };
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let pl = marking_probability(SimTime::from_nanos(lo), ramp);
                let ph = marking_probability(SimTime::from_nanos(hi), ramp);
                prop_assert!((0.0..=1.0).contains(&pl));
                prop_assert!(pl <= ph);
            }
        }
    }
}
