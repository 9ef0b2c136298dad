//! Per-flow sender: ack clocking, SRTT, TSO burst sizing and deferral, and
//! CWR bookkeeping. Window decisions are delegated to [`Cca`] and pacing
//! during a reduction to [`PrrState`].
//!
//! The model is segment based with one ack per delivered segment carrying
//! that segment's exact CE state. Data is always available to send.
//!
//! TSO deferral follows the shape of `tcp_tso_should_defer()`: a sender
//! holds back when the usable window is smaller than one burst, unless
//! nothing is in flight or the usable window already exceeds
//! `cwnd / win_divisor`. Deferral is only re-evaluated on ack arrival.

use crate::alpha::AlphaUpdate;
use crate::aqm::{FlowId, PacketRecord, DEFAULT_PACKET_BYTES};
use crate::cca::{Cca, Window};
use crate::engine::SimTime;
use crate::error::{Result, SimError};
use crate::prr::{PrrMode, PrrState};
use crate::variant::FlowVariant;

pub const DEFAULT_INITIAL_CWND: u64 = 10;
pub const DEFAULT_TSO_WIN_DIVISOR: u64 = 3;
pub const MIN_CWND: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BurstPolicy {
    pub max_burst: SimTime,
    pub cap_segments: u64,
}

impl BurstPolicy {
    /// Linux's 1 ms autosizing target with a 64 KB frame ceiling.
    pub const LINUX_DEFAULT: BurstPolicy = BurstPolicy {
        max_burst: SimTime::from_millis(1),
        cap_segments: 44,
    };
    /// 2^-10 s.
    pub const PRAGUE_1MS: BurstPolicy = BurstPolicy {
        max_burst: SimTime::from_nanos(976_563),
        cap_segments: 44,
    };
    /// 2^-12 s, Prague's default.
    pub const PRAGUE_250US: BurstPolicy = BurstPolicy {
        max_burst: SimTime::from_nanos(244_141),
        cap_segments: 44,
    };
    /// 2^-20 s, which keeps bursts at one segment at these rates.
    pub const PRAGUE_NO_BURST: BurstPolicy = BurstPolicy {
        max_burst: SimTime::from_nanos(954),
        cap_segments: 44,
    };

    pub fn validate(&self) -> Result<()> {
        if self.max_burst == SimTime::ZERO || self.cap_segments == 0 {
            return Err(SimError::config("burst policy needs max_burst > 0 and cap >= 1"));
        }
        Ok(())
    }
}

impl Default for BurstPolicy {
    fn default() -> Self {
        BurstPolicy::LINUX_DEFAULT
    }
}

/// Segments per TSO burst: the max burst time times the packet rate
/// `cwnd / srtt`, clamped to `[1, cap_segments]`.
pub fn burst_size(cwnd: u64, srtt: SimTime, policy: &BurstPolicy) -> u64 {
    let srtt_ns = u128::from(srtt.as_nanos().max(1));
    let segs = u128::from(policy.max_burst.as_nanos()) * u128::from(cwnd) / srtt_ns;
    (segs.min(u128::from(policy.cap_segments)) as u64).max(1)
}

/// Acknowledgement for one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckRecord {
    pub flow: FlowId,
    pub seq: u64,
    pub ce: bool,
    pub sent_at: SimTime,
}

/// A segment leaving the sender's NIC, with the time it reaches the
/// bottleneck.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub arrive_at: SimTime,
    pub packet: PacketRecord,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenderConfig {
    pub flow: FlowId,
    pub variant: FlowVariant,
    pub nic_rate_bps: u64,
    pub packet_bytes: u32,
    pub initial_cwnd: u64,
    pub tso_win_divisor: u64,
}

impl SenderConfig {
    pub fn new(flow: FlowId, variant: FlowVariant, nic_rate_bps: u64) -> Self {
        SenderConfig {
            flow,
            variant,
            nic_rate_bps,
            packet_bytes: DEFAULT_PACKET_BYTES,
            initial_cwnd: DEFAULT_INITIAL_CWND,
            tso_win_divisor: DEFAULT_TSO_WIN_DIVISOR,
        }
    }
}

/// One CWR episode, from the reaction to the ack that ends it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwrEpisode {
    pub start: SimTime,
    pub end: Option<SimTime>,
    pub prior_cwnd: u64,
    pub pipe_at_entry: u64,
    pub ssthresh: u64,
    pub min_cwnd: u64,
    /// cwnd just before the exit reset to ssthresh.
    pub exit_cwnd: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlowCounters {
    pub sent: u64,
    pub acked: u64,
    pub ce_acked: u64,
    pub dropped: u64,
    pub alpha_rounds: u64,
    pub black_holed_rounds: u64,
    pub cwr_entries: u64,
    pub cwnd_floor_hits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenderTraceRow {
    pub time: SimTime,
    pub flow: FlowId,
    pub cwnd: u64,
    pub ssthresh: u64,
    pub pipe: u64,
    pub srtt: SimTime,
    pub burst_size: u64,
    pub deferred: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrrTraceRow {
    pub time: SimTime,
    pub flow: FlowId,
    pub mode: PrrMode,
    pub pipe: u64,
    pub ssthresh: u64,
    pub sndcnt: u64,
    pub prr_delivered: u64,
    pub prr_out: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaTraceRow {
    pub time: SimTime,
    pub flow: FlowId,
    pub raw: u64,
    pub alpha: f64,
    pub delivered: u64,
    pub delivered_ce: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SenderTrace {
    pub sender: Vec<SenderTraceRow>,
    pub prr: Vec<PrrTraceRow>,
    pub alpha: Vec<AlphaTraceRow>,
}

#[derive(Debug, Clone)]
pub struct Sender {
    cfg: SenderConfig,
    burst: BurstPolicy,
    cca: Cca,
    window: Window,
    srtt: Option<SimTime>,
    snd_nxt: u64,
    snd_una: u64,
    inflight: u64,
    in_cwr: bool,
    cwr_exit_seq: u64,
    /// Goal of a reduction when PRR is off.
    cwr_target: u64,
    prr: Option<PrrState>,
    deferred: u64,
    nic_free: SimTime,
    nic_tx: SimTime,
    counters: FlowCounters,
    episodes: Vec<CwrEpisode>,
    trace: Option<SenderTrace>,
}

impl Sender {
    pub fn new(cfg: SenderConfig) -> Result<Self> {
        cfg.variant.validate()?;
        if cfg.nic_rate_bps == 0 || cfg.initial_cwnd < MIN_CWND || cfg.tso_win_divisor == 0 {
            return Err(SimError::config(format!(
                "flow {}: nic rate, initial cwnd (>= 2) and win divisor must be positive",
                cfg.flow
            )));
        }
        Ok(Sender {
            burst: cfg.variant.burst_policy(),
            cca: Cca::new(&cfg.variant.cca, 0)?,
            window: Window::new(cfg.initial_cwnd),
            srtt: None,
            snd_nxt: 0,
            snd_una: 0,
            inflight: 0,
            in_cwr: false,
            cwr_exit_seq: 0,
            cwr_target: 0,
            prr: None,
            deferred: 0,
            nic_free: SimTime::ZERO,
            nic_tx: SimTime::serialization(u64::from(cfg.packet_bytes), cfg.nic_rate_bps),
            counters: FlowCounters::default(),
            episodes: Vec::new(),
            trace: None,
            cfg,
        })
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(SenderTrace::default());
    }

    pub fn take_trace(&mut self) -> Option<SenderTrace> {
        self.trace.take()
    }

    pub fn flow(&self) -> FlowId {
        self.cfg.flow
    }

    pub fn config(&self) -> &SenderConfig {
        &self.cfg
    }

    pub fn cwnd(&self) -> u64 {
        self.window.cwnd
    }

    pub fn ssthresh(&self) -> u64 {
        self.window.ssthresh
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn inflight(&self) -> u64 {
        self.inflight
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.srtt
    }

    pub fn in_cwr(&self) -> bool {
        self.in_cwr
    }

    pub fn deferred(&self) -> u64 {
        self.deferred
    }

    pub fn alpha_fraction(&self) -> f64 {
        self.cca.alpha_fraction()
    }

    pub fn cca(&self) -> &Cca {
        &self.cca
    }

    pub fn prr(&self) -> Option<&PrrState> {
        self.prr.as_ref()
    }

    pub fn counters(&self) -> &FlowCounters {
        &self.counters
    }

    pub fn episodes(&self) -> &[CwrEpisode] {
        &self.episodes
    }

    /// Current TSO burst size in segments.
    pub fn burst_size(&self) -> u64 {
        match self.srtt {
            Some(srtt) => burst_size(self.window.cwnd, srtt, &self.burst),
            None => self.burst.cap_segments,
        }
    }

    /// Sends the initial window.
    pub fn start(&mut self, now: SimTime, out: &mut Vec<Emission>) {
        self.try_transmit(now, out);
    }

    /// The bottleneck dropped one of this flow's segments. Loss recovery is
    /// not modelled; the segment simply leaves the pipe.
    pub fn on_drop(&mut self) {
        self.inflight = self.inflight.saturating_sub(1);
        self.counters.dropped += 1;
    }

    pub fn on_ack(&mut self, ack: &AckRecord, now: SimTime, out: &mut Vec<Emission>) -> Result<()> {
        debug_assert_eq!(ack.flow, self.cfg.flow);
        let sample = now.saturating_sub(ack.sent_at);
        self.srtt = Some(match self.srtt {
            None => sample,
            Some(s) => SimTime::from_nanos(s.as_nanos() - s.as_nanos() / 8 + sample.as_nanos() / 8),
        });
        self.inflight = self.inflight.saturating_sub(1);
        self.snd_una = self.snd_una.max(ack.seq + 1);
        self.counters.acked += 1;
        if ack.ce {
            self.counters.ce_acked += 1;
        }

        if let Some(update) = self.cca.on_ack_round(ack.ce, self.snd_una, self.snd_nxt)? {
            self.record_alpha(now, &update);
        }

        if self.in_cwr && ack.seq >= self.cwr_exit_seq {
            self.exit_cwr(now);
        }
        if ack.ce && !self.in_cwr {
            self.enter_cwr(now);
        }

        if self.in_cwr {
            self.cwr_ack(ack.ce, now);
        } else if self.window.in_slow_start() {
            self.window.cwnd += 1;
        } else {
            self.cca.increase(&mut self.window, ack.ce, now);
        }

        self.try_transmit(now, out);
        let burst_size = self.burst_size();
        if let Some(trace) = self.trace.as_mut() {
            trace.sender.push(SenderTraceRow {
                time: now,
                flow: self.cfg.flow,
                cwnd: self.window.cwnd,
                ssthresh: self.window.ssthresh,
                pipe: self.inflight,
                srtt: self.srtt.unwrap_or_default(),
                burst_size,
                deferred: self.deferred,
            });
        }
        Ok(())
    }

    fn record_alpha(&mut self, now: SimTime, u: &AlphaUpdate) {
        self.counters.alpha_rounds += 1;
        if u.black_holed() {
            self.counters.black_holed_rounds += 1;
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.alpha.push(AlphaTraceRow {
                time: now,
                flow: self.cfg.flow,
                raw: u.after,
                alpha: self.cca.alpha_fraction(),
                delivered: u.delivered,
                delivered_ce: u.delivered_ce,
            });
        }
    }

    fn enter_cwr(&mut self, now: SimTime) {
        let prior_cwnd = self.window.cwnd;
        let reaction = self.cca.react(&mut self.window);
        debug_assert!(reaction.enter_cwr);
        let ssthresh = reaction.new_ssthresh.max(MIN_CWND);
        if reaction.new_ssthresh < MIN_CWND || ssthresh == MIN_CWND {
            self.counters.cwnd_floor_hits += 1;
        }
        self.window.ssthresh = ssthresh;
        self.in_cwr = true;
        self.cwr_exit_seq = self.snd_nxt;
        self.cwr_target = ssthresh;
        self.counters.cwr_entries += 1;
        let mode = self.cfg.variant.prr;
        self.prr = mode
            .is_active()
            .then(|| PrrState::enter_recovery(mode, prior_cwnd, self.inflight, ssthresh));
        self.episodes.push(CwrEpisode {
            start: now,
            end: None,
            prior_cwnd,
            pipe_at_entry: self.inflight,
            ssthresh,
            min_cwnd: prior_cwnd,
            exit_cwnd: prior_cwnd,
        });
    }

    fn exit_cwr(&mut self, now: SimTime) {
        self.in_cwr = false;
        if let Some(ep) = self.episodes.last_mut() {
            ep.end = Some(now);
            ep.exit_cwnd = self.window.cwnd;
        }
        if self.prr.take().is_none() {
            self.window.ssthresh = self.cwr_target;
        }
        self.window.cwnd = self.window.ssthresh.max(MIN_CWND);
    }

    fn cwr_ack(&mut self, ce: bool, now: SimTime) {
        let ai = self.cca.ai_during_cwr() && !ce;
        if ai {
            self.window.cwnd_cnt += 1;
            if self.window.cwnd_cnt >= self.window.cwnd {
                self.window.cwnd_cnt -= self.window.cwnd;
                self.cwr_target += 1;
                if let Some(prr) = self.prr.as_mut() {
                    prr.ssthresh += 1;
                    self.window.ssthresh = prr.ssthresh;
                }
            }
        }

        if let Some(prr) = self.prr.as_mut() {
            prr.record_delivered(1);
            let sndcnt = prr.sndcnt(1, self.inflight);
            self.window.cwnd = (self.inflight + sndcnt).max(MIN_CWND);
            if let Some(trace) = self.trace.as_mut() {
                trace.prr.push(PrrTraceRow {
                    time: now,
                    flow: self.cfg.flow,
                    mode: prr.mode,
                    pipe: self.inflight,
                    ssthresh: prr.ssthresh,
                    sndcnt,
                    prr_delivered: prr.prr_delivered,
                    prr_out: prr.prr_out,
                });
            }
        } else if self.window.cwnd > self.cwr_target {
            self.window.cwnd -= 1;
        } else {
            self.window.cwnd = self.cwr_target;
        }

        if let Some(ep) = self.episodes.last_mut() {
            ep.min_cwnd = ep.min_cwnd.min(self.window.cwnd);
        }
    }

    /// Sends whatever the window and the TSO deferral rule allow.
    pub fn try_transmit(&mut self, now: SimTime, out: &mut Vec<Emission>) {
        let cwnd = self.window.cwnd;
        let sendable = cwnd.saturating_sub(self.inflight);
        let n = if sendable == 0 || !self.cfg.variant.tso {
            sendable
        } else {
            let burst = self.burst_size();
            if sendable >= burst {
                sendable - sendable % burst
            } else if self.inflight == 0 || sendable * self.cfg.tso_win_divisor >= cwnd {
                sendable
            } else {
                0
            }
        };
        self.deferred = sendable - n;
        if n == 0 {
            return;
        }
        for _ in 0..n {
            let start = self.nic_free.max(now);
            let arrive_at = start + self.nic_tx;
            self.nic_free = arrive_at;
            let mut packet = PacketRecord::new(self.cfg.flow, self.snd_nxt, now);
            packet.size_bytes = self.cfg.packet_bytes;
            out.push(Emission { arrive_at, packet });
            self.snd_nxt += 1;
        }
        self.inflight += n;
        self.counters.sent += n;
        if let Some(prr) = self.prr.as_mut() {
            prr.record_sent(n);
        }
    }
}
