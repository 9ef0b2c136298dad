//! Scenario execution.
//!
//! Topology: each sender has its own NIC feeding the bottleneck queue
//! directly, so all base RTT is on the return path. The receiver acks every
//! segment as it leaves the bottleneck, echoing that segment's CE bit. A
//! segment dropped at the queue cap is reported to its sender at once.
//!
//! Metrics are sampled every `sample_window` base RTTs. Summary figures
//! cover samples ending in `(warmup, warmup + measure]`.

use crate::aqm::{BottleneckQueue, FlowId, PacketRecord};
use crate::engine::{Fired, RandomSource, Scheduler, SimTime};
use crate::error::{Result, SimError};
use crate::metrics::{geo_mean_ratio, jain_index, mean, percentile};
use crate::scenario::ScenarioConfig;
use crate::sender::{AckRecord, CwrEpisode, Emission, FlowCounters, Sender, SenderConfig, SenderTrace};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Collect per-ack, per-round and per-dequeue trace rows.
    pub trace: bool,
}

/// One `timeseries.csv` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeseriesRow {
    pub time: SimTime,
    pub flow: FlowId,
    pub cwnd: u64,
    pub alpha: f64,
    pub throughput_bps: f64,
    pub marks: u64,
    pub queue_delay_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueSample {
    pub time: SimTime,
    /// Mean sojourn of packets dequeued during the sample window.
    pub mean_delay_us: f64,
    pub backlog_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DequeueTraceRow {
    pub time: SimTime,
    pub flow: FlowId,
    pub sojourn: SimTime,
    pub est: SimTime,
    pub marked: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub dequeue: Vec<DequeueTraceRow>,
    pub senders: Vec<SenderTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSummary {
    pub flow: FlowId,
    pub code: String,
    pub start: SimTime,
    pub delivered: u64,
    pub marks_delivered: u64,
    /// Mean goodput over the measurement period.
    pub mean_rate_bps: f64,
    pub counters: FlowCounters,
    pub episodes: Vec<CwrEpisode>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub jain: Option<f64>,
    pub geo_ratio: Option<f64>,
    pub geo_excluded: usize,
    /// Delivered frames over what the link could carry in the period.
    pub utilization: f64,
    pub mean_queue_us: f64,
    pub p99_queue_us: f64,
    pub windows: usize,
    pub drops: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub seed: u64,
    pub timeseries: Vec<TimeseriesRow>,
    pub queue_series: Vec<QueueSample>,
    pub flows: Vec<FlowSummary>,
    pub summary: Summary,
    pub trace: Option<RunTrace>,
}

impl RunResult {
    /// Timeseries rows of one flow inside the measurement period.
    pub fn measured_rows(&self, flow: FlowId, warmup: SimTime) -> impl Iterator<Item = &TimeseriesRow> {
        self.timeseries
            .iter()
            .filter(move |r| r.flow == flow && r.time > warmup)
    }
}

#[derive(Debug)]
enum Event {
    Start(usize),
    Arrive(PacketRecord),
    TxDone,
    Ack(AckRecord),
    Sample,
}

#[derive(Debug, Default, Clone)]
struct FlowTally {
    arrived: u64,
    delivered: u64,
    marks_delivered: u64,
    win_delivered: u64,
    win_marks: u64,
    measured_delivered: u64,
    started: bool,
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    queue: BottleneckQueue,
    rng: RandomSource,
    /// Separate stream so jitter leaves ramp marking draws untouched.
    jitter_rng: RandomSource,
    last_ack: Vec<SimTime>,
    senders: Vec<Sender>,
    tally: Vec<FlowTally>,
    in_service: Option<PacketRecord>,
    emissions: Vec<Emission>,
    measure_start: SimTime,
    measure_end: SimTime,
    win_sojourn_sum: f64,
    win_sojourn_n: u64,
    measured_sojourns_us: Vec<f64>,
    measured_frames: u64,
    window_jain: Vec<f64>,
    window_pairs: Vec<(f64, f64)>,
    timeseries: Vec<TimeseriesRow>,
    queue_series: Vec<QueueSample>,
    dequeue_trace: Option<Vec<DequeueTraceRow>>,
}

impl World<'_> {
    fn in_measure(&self, t: SimTime) -> bool {
        t > self.measure_start && t <= self.measure_end
    }

    fn handle(&mut self, sched: &mut Scheduler<Event>, fired: Fired<Event>) -> Result<()> {
        let now = fired.at;
        match fired.event {
            Event::Start(i) => {
                self.tally[i].started = true;
                self.senders[i].start(now, &mut self.emissions);
                self.flush_emissions(sched)?;
            }
            Event::Arrive(pkt) => {
                let f = pkt.flow.0 as usize;
                self.tally[f].arrived += 1;
                if !self.queue.enqueue(pkt, now) {
                    self.senders[f].on_drop();
                } else if self.in_service.is_none() {
                    self.start_service(sched, now)?;
                }
            }
            Event::TxDone => {
                let pkt = self
                    .in_service
                    .take()
                    .ok_or_else(|| SimError::Invariant("transmission finished on an idle link".into()))?;
                let measured = self.in_measure(now);
                let t = &mut self.tally[pkt.flow.0 as usize];
                t.delivered += 1;
                t.win_delivered += 1;
                if pkt.ce {
                    t.marks_delivered += 1;
                    t.win_marks += 1;
                }
                if measured {
                    t.measured_delivered += 1;
                    self.measured_frames += 1;
                }
                let ack = AckRecord {
                    flow: pkt.flow,
                    seq: pkt.seq,
                    ce: pkt.ce,
                    sent_at: pkt.sent_at,
                };
                let mut at = now + self.cfg.base_rtt;
                if self.cfg.ack_jitter > SimTime::ZERO {
                    let j = self.jitter_rng.uniform01() * self.cfg.ack_jitter.as_nanos() as f64;
                    let f = pkt.flow.0 as usize;
                    at = (at + SimTime::from_nanos(j as u64)).max(self.last_ack[f]);
                    self.last_ack[f] = at;
                }
                sched.schedule(at, Event::Ack(ack))?;
                if !self.queue.is_empty() {
                    self.start_service(sched, now)?;
                }
            }
            Event::Ack(ack) => {
                self.senders[ack.flow.0 as usize].on_ack(&ack, now, &mut self.emissions)?;
                self.flush_emissions(sched)?;
            }
            Event::Sample => {
                self.sample(now);
                let next = now + self.cfg.sample_period();
                if next <= self.measure_end {
                    sched.schedule(next, Event::Sample)?;
                }
            }
        }
        Ok(())
    }

    fn flush_emissions(&mut self, sched: &mut Scheduler<Event>) -> Result<()> {
        for e in self.emissions.drain(..) {
            sched.schedule(e.arrive_at, Event::Arrive(e.packet))?;
        }
        Ok(())
    }

    fn start_service(&mut self, sched: &mut Scheduler<Event>, now: SimTime) -> Result<()> {
        let d = self.queue.dequeue(now, &mut self.rng)?;
        let sojourn_us = d.sojourn.as_micros_f64();
        self.win_sojourn_sum += sojourn_us;
        self.win_sojourn_n += 1;
        if self.in_measure(now) {
            self.measured_sojourns_us.push(sojourn_us);
        }
        if let Some(trace) = self.dequeue_trace.as_mut() {
            trace.push(DequeueTraceRow {
                time: now,
                flow: d.packet.flow,
                sojourn: d.sojourn,
                est: d.est,
                marked: d.marked,
            });
        }
        self.in_service = Some(d.packet);
        sched.schedule(now + d.tx_time, Event::TxDone)?;
        Ok(())
    }

    fn sample(&mut self, now: SimTime) {
        let period = self.cfg.sample_period().as_secs_f64();
        let payload_bits = f64::from(self.cfg.payload_bytes()) * 8.0;
        let queue_delay_us = if self.win_sojourn_n == 0 {
            0.0
        } else {
            self.win_sojourn_sum / self.win_sojourn_n as f64
        };
        let mut rates = Vec::with_capacity(self.senders.len());
        for (i, s) in self.senders.iter().enumerate() {
            let t = &mut self.tally[i];
            if !t.started {
                continue;
            }
            let throughput_bps = t.win_delivered as f64 * payload_bits / period;
            self.timeseries.push(TimeseriesRow {
                time: now,
                flow: s.flow(),
                cwnd: s.cwnd(),
                alpha: s.alpha_fraction(),
                throughput_bps,
                marks: t.win_marks,
                queue_delay_us,
            });
            // Flows that start mid-window are left out of that window's
            // fairness figures.
            if self.cfg.flows[i].start + self.cfg.sample_period() <= now {
                rates.push(throughput_bps);
            }
            t.win_delivered = 0;
            t.win_marks = 0;
        }
        self.queue_series.push(QueueSample {
            time: now,
            mean_delay_us: queue_delay_us,
            backlog_bytes: self.queue.backlog_bytes(),
        });
        self.win_sojourn_sum = 0.0;
        self.win_sojourn_n = 0;

        if self.in_measure(now) {
            if let Some(j) = jain_index(&rates) {
                self.window_jain.push(j);
            }
            if rates.len() >= 2 && self.senders.len() >= 2 {
                self.window_pairs.push((rates[0], rates[1]));
            }
        }
    }

    /// Every segment a sender counts as in flight is on the NIC, in the
    /// queue, on the link or acknowledged but not yet back.
    fn check_conservation(&self) -> Result<()> {
        for (i, s) in self.senders.iter().enumerate() {
            let flow = FlowId(i as u32);
            let t = &self.tally[i];
            let c = s.counters();
            let in_queue = self.queue.iter().filter(|p| p.flow == flow).count() as u64;
            let on_link = u64::from(self.in_service.as_ref().is_some_and(|p| p.flow == flow));
            let on_nic = c.sent - t.arrived;
            let acks_in_transit = t.delivered - c.acked;
            let located = on_nic + in_queue + on_link + acks_in_transit;
            if located != s.inflight() || t.arrived != t.delivered + in_queue + on_link + c.dropped {
                return Err(SimError::Invariant(format!(
                    "flow {flow}: inflight {} but located {located}; arrived {} delivered {} queued {in_queue} dropped {}",
                    s.inflight(),
                    t.arrived,
                    t.delivered,
                    c.dropped
                )));
            }
        }
        Ok(())
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    run_scenario_with(cfg, RunOptions::default())
}

pub fn run_scenario_with(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunResult> {
    cfg.validate()?;
    let mut senders = Vec::with_capacity(cfg.flows.len());
    for (i, f) in cfg.flows.iter().enumerate() {
        let mut sc = SenderConfig::new(FlowId(i as u32), f.variant, cfg.nic_rate_bps());
        sc.packet_bytes = cfg.packet_bytes;
        sc.initial_cwnd = cfg.initial_cwnd;
        sc.tso_win_divisor = cfg.tso_win_divisor;
        let mut s = Sender::new(sc)?;
        if opts.trace {
            s.enable_trace();
        }
        senders.push(s);
    }

    let mut world = World {
        cfg,
        queue: BottleneckQueue::new(cfg.aqm, cfg.capacity_bps)?,
        rng: RandomSource::new(cfg.seed),
        jitter_rng: RandomSource::new(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
        last_ack: vec![SimTime::ZERO; senders.len()],
        tally: vec![FlowTally::default(); senders.len()],
        senders,
        in_service: None,
        emissions: Vec::new(),
        measure_start: cfg.warmup,
        measure_end: cfg.run_length(),
        win_sojourn_sum: 0.0,
        win_sojourn_n: 0,
        measured_sojourns_us: Vec::new(),
        measured_frames: 0,
        window_jain: Vec::new(),
        window_pairs: Vec::new(),
        timeseries: Vec::new(),
        queue_series: Vec::new(),
        dequeue_trace: opts.trace.then(Vec::new),
    };

    let mut sched = Scheduler::new();
    for (i, f) in cfg.flows.iter().enumerate() {
        sched.schedule(f.start, Event::Start(i))?;
    }
    sched.schedule(cfg.sample_period(), Event::Sample)?;
    sched.run_until(cfg.run_length(), |s, fired| world.handle(s, fired))?;
    world.check_conservation()?;

    let measure_s = cfg.measure.as_secs_f64();
    let payload_bits = f64::from(cfg.payload_bytes()) * 8.0;
    let frame_bits = f64::from(cfg.packet_bytes) * 8.0;
    let utilization = world.measured_frames as f64 * frame_bits / (cfg.capacity_bps as f64 * measure_s);
    let geo = geo_mean_ratio(&world.window_pairs);
    let mean_queue_us = mean(&world.measured_sojourns_us).unwrap_or(0.0);
    let p99_queue_us = percentile(&mut world.measured_sojourns_us, 99.0).unwrap_or(0.0);

    let flows = world
        .senders
        .iter_mut()
        .zip(&world.tally)
        .zip(&cfg.flows)
        .map(|((s, t), spec)| FlowSummary {
            flow: s.flow(),
            code: spec.variant.code(),
            start: spec.start,
            delivered: t.delivered,
            marks_delivered: t.marks_delivered,
            mean_rate_bps: t.measured_delivered as f64 * payload_bits / measure_s,
            counters: *s.counters(),
            episodes: s.episodes().to_vec(),
        })
        .collect();

    let trace = opts.trace.then(|| RunTrace {
        dequeue: world.dequeue_trace.take().unwrap_or_default(),
        senders: world.senders.iter_mut().filter_map(Sender::take_trace).collect(),
    });

    Ok(RunResult {
        name: cfg.name.clone(),
        seed: cfg.seed,
        summary: Summary {
            jain: mean(&world.window_jain),
            geo_ratio: geo.ratio,
            geo_excluded: geo.excluded,
            utilization,
            mean_queue_us,
            p99_queue_us,
            windows: world.window_jain.len(),
            drops: world.queue.drops(),
        },
        timeseries: world.timeseries,
        queue_series: world.queue_series,
        flows,
        trace,
    })
}
