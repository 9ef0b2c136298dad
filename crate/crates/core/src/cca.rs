//! Congestion controllers: DCTCP with any alpha storage variant, a
//! Prague-like scalable controller and ECN-CUBIC.
//!
//! Prague here is DCTCP with 20-bit upscaled alpha that keeps additive
//! increase running through CWR (except on acks echoing CE) and carries
//! `cwnd_cnt` across reductions. Its burst limit lives in the sender's
//! [`BurstPolicy`].
//!
//! CUBIC uses the stock window function `W(t) = C (t - K)^3 + W_max` with
//! `C = 0.4` segments/s^3 and `K = cbrt(W_max (1 - beta) / C)`. CE is
//! treated like loss with a configurable `beta` in 1/1024 units; there is
//! no HyStart and no TCP-friendly region.

use crate::alpha::{AlphaConfig, AlphaState, AlphaUpdate, RoundAccumulator};
use crate::engine::SimTime;
use crate::error::{Result, SimError};
use crate::sender::BurstPolicy;

pub const CUBIC_C: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CcaVariant {
    Dctcp(AlphaConfig),
    Prague(BurstPolicy),
    CubicEcn { beta_1024: u32 },
}

impl CcaVariant {
    pub fn validate(&self) -> Result<()> {
        match self {
            CcaVariant::Dctcp(cfg) => cfg.validate(),
            CcaVariant::Prague(burst) => burst.validate(),
            CcaVariant::CubicEcn { beta_1024 } => {
                if (1..=1024).contains(beta_1024) {
                    Ok(())
                } else {
                    Err(SimError::config(format!(
                        "cubic beta {beta_1024} outside 1..=1024"
                    )))
                }
            }
        }
    }

    pub fn alpha_config(&self) -> Option<AlphaConfig> {
        match self {
            CcaVariant::Dctcp(cfg) => Some(*cfg),
            CcaVariant::Prague(_) => Some(AlphaConfig::HIRES),
            CcaVariant::CubicEcn { .. } => None,
        }
    }
}

/// Window state shared by every controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub cwnd: u64,
    pub ssthresh: u64,
    /// Additive-increase accumulator (`snd_cwnd_cnt`).
    pub cwnd_cnt: u64,
}

impl Window {
    pub fn new(cwnd: u64) -> Self {
        Window {
            cwnd,
            ssthresh: u64::MAX,
            cwnd_cnt: 0,
        }
    }

    pub fn in_slow_start(&self) -> bool {
        self.cwnd < self.ssthresh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CongestionReaction {
    pub new_ssthresh: u64,
    pub enter_cwr: bool,
}

/// One segment of additive increase credit: `cwnd` grows by one after
/// `cwnd` credited acks.
pub fn reno_ai(w: &mut Window, acked: u64) {
    w.cwnd_cnt += acked;
    if w.cwnd_cnt >= w.cwnd {
        w.cwnd_cnt -= w.cwnd;
        w.cwnd += 1;
    }
}

/// DCTCP's reaction to the first CE echo of a round.
pub fn dctcp_on_ce_round_start(w: &mut Window, alpha: &AlphaState) -> CongestionReaction {
    w.cwnd_cnt = 0;
    CongestionReaction {
        new_ssthresh: alpha.apply_reduction(w.cwnd),
        enter_cwr: true,
    }
}

/// Prague's per-ack increase: credited on every ack that does not echo CE,
/// whether or not a reduction is in progress.
pub fn prague_on_ack(w: &mut Window, ce: bool) {
    if !ce {
        reno_ai(w, 1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CubicState {
    pub w_max: f64,
    pub k: f64,
    pub origin: f64,
    pub epoch_start: Option<SimTime>,
}

impl CubicState {
    /// Target window `t` after the epoch began.
    pub fn target(&self, t_since_epoch: SimTime) -> u64 {
        let dt = t_since_epoch.as_secs_f64() - self.k;
        let w = CUBIC_C * dt * dt * dt + self.origin;
        w.max(1.0).floor() as u64
    }

    fn start_epoch(&mut self, now: SimTime, cwnd: u64) {
        self.epoch_start = Some(now);
        let cwnd = cwnd as f64;
        if self.w_max <= cwnd {
            self.k = 0.0;
            self.origin = cwnd;
        } else {
            self.k = ((self.w_max - cwnd) / CUBIC_C).cbrt();
            self.origin = self.w_max;
        }
    }
}

/// CUBIC's CE reaction: multiplicative decrease by `beta / 1024`, with
/// the epoch restarted from the window at the time of the mark.
pub fn cubic_on_ce(w: &mut Window, cubic: &mut CubicState, beta_1024: u32) -> CongestionReaction {
    let new_ssthresh = ((w.cwnd * u64::from(beta_1024)) >> 10).max(2);
    cubic.w_max = w.cwnd as f64;
    cubic.k = (cubic.w_max * (1.0 - f64::from(beta_1024) / 1024.0) / CUBIC_C).cbrt();
    cubic.origin = cubic.w_max;
    cubic.epoch_start = None;
    w.cwnd_cnt = 0;
    CongestionReaction {
        new_ssthresh,
        enter_cwr: true,
    }
}

/// Moves `cwnd` towards the cubic target by at most one segment per ack.
pub fn cubic_growth(w: &mut Window, cubic: &mut CubicState, now: SimTime) {
    let epoch = match cubic.epoch_start {
        Some(t) => t,
        None => {
            cubic.start_epoch(now, w.cwnd);
            now
        }
    };
    let target = cubic.target(now - epoch);
    // Acks needed per one-segment increase.
    let cnt = if target > w.cwnd {
        (w.cwnd / (target - w.cwnd)).max(1)
    } else {
        100 * w.cwnd
    };
    w.cwnd_cnt += 1;
    if w.cwnd_cnt >= cnt {
        w.cwnd_cnt = 0;
        w.cwnd += 1;
    }
}

/// Alpha plus its round accounting, shared by DCTCP and Prague.
#[derive(Debug, Clone)]
pub struct EcnAverage {
    alpha: AlphaState,
    round: RoundAccumulator,
}

/// Runtime controller for one flow.
#[derive(Debug, Clone)]
pub enum Cca {
    Dctcp(EcnAverage),
    Prague(EcnAverage),
    Cubic { beta_1024: u32, state: CubicState },
}

impl Cca {
    pub fn new(variant: &CcaVariant, snd_nxt: u64) -> Result<Self> {
        variant.validate()?;
        let avg = |cfg: AlphaConfig| -> Result<EcnAverage> {
            Ok(EcnAverage {
                alpha: AlphaState::full(cfg)?,
                round: RoundAccumulator::starting_at(snd_nxt),
            })
        };
        Ok(match variant {
            CcaVariant::Dctcp(cfg) => Cca::Dctcp(avg(*cfg)?),
            CcaVariant::Prague(_) => Cca::Prague(avg(AlphaConfig::HIRES)?),
            CcaVariant::CubicEcn { beta_1024 } => Cca::Cubic {
                beta_1024: *beta_1024,
                state: CubicState::default(),
            },
        })
    }

    pub fn alpha(&self) -> Option<&AlphaState> {
        match self {
            Cca::Dctcp(a) | Cca::Prague(a) => Some(&a.alpha),
            Cca::Cubic { .. } => None,
        }
    }

    pub fn alpha_fraction(&self) -> f64 {
        self.alpha().map_or(0.0, AlphaState::fraction)
    }

    /// Per-ack round accounting; returns the alpha update when a round
    /// closes.
    pub fn on_ack_round(&mut self, ce: bool, snd_una: u64, snd_nxt: u64) -> Result<Option<AlphaUpdate>> {
        match self {
            Cca::Dctcp(a) | Cca::Prague(a) => {
                match a.round.on_ack(1, u64::from(ce), snd_una, snd_nxt) {
                    Some(done) => a.alpha.end_of_round_update(&done).map(Some),
                    None => Ok(None),
                }
            }
            Cca::Cubic { .. } => Ok(None),
        }
    }

    pub fn react(&mut self, w: &mut Window) -> CongestionReaction {
        match self {
            Cca::Dctcp(a) => dctcp_on_ce_round_start(w, &a.alpha),
            Cca::Prague(a) => {
                let keep = w.cwnd_cnt;
                let r = dctcp_on_ce_round_start(w, &a.alpha);
                w.cwnd_cnt = keep;
                r
            }
            Cca::Cubic { beta_1024, state } => cubic_on_ce(w, state, *beta_1024),
        }
    }

    pub fn ai_during_cwr(&self) -> bool {
        matches!(self, Cca::Prague(_))
    }

    /// Congestion-avoidance increase outside CWR.
    pub fn increase(&mut self, w: &mut Window, ce: bool, now: SimTime) {
        match self {
            Cca::Dctcp(_) => reno_ai(w, 1),
            Cca::Prague(_) => prague_on_ack(w, ce),
            Cca::Cubic { state, .. } => cubic_growth(w, state, now),
        }
    }
}
