//! Proportional Rate Reduction bookkeeping, in segments.
//!
//! While `pipe > ssthresh` every mode sends in proportion to what has been
//! delivered: `ceil(prr_delivered * ssthresh / recover_fs) - prr_out`.
//! Once `pipe` has fallen to `ssthresh` the modes differ:
//!
//! * [`PrrMode::Rfc6937`]: the RFC's slow-start bound,
//!   `min(ssthresh - pipe, max(prr_delivered - prr_out, delivered) + 1)`.
//! * [`PrrMode::LinuxBugged`]: `min(ssthresh - pipe, delivered + 1)`. Any
//!   allowance a TSO-deferring sender did not use is forgotten on the next
//!   ack, so `cwnd = pipe + sndcnt` keeps shrinking while it defers.
//! * [`PrrMode::Patched`]: Linux with the surplus term restored, which
//!   regenerates deferred allowance on every ack.
//! * [`PrrMode::Off`]: no PRR; the sender steps towards the target itself.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrrMode {
    Rfc6937,
    LinuxBugged,
    Patched,
    Off,
}

impl PrrMode {
    pub fn is_active(self) -> bool {
        self != PrrMode::Off
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rfc6937" | "rfc" => Some(PrrMode::Rfc6937),
            "linux-bugged" | "bugged" => Some(PrrMode::LinuxBugged),
            "patched" | "fixed" => Some(PrrMode::Patched),
            "off" | "none" => Some(PrrMode::Off),
            _ => None,
        }
    }
}

impl fmt::Display for PrrMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrrMode::Rfc6937 => "rfc6937",
            PrrMode::LinuxBugged => "linux-bugged",
            PrrMode::Patched => "patched",
            PrrMode::Off => "off",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrrState {
    pub prr_delivered: u64,
    pub prr_out: u64,
    pub recover_fs: u64,
    pub ssthresh: u64,
    /// cwnd when the episode began; kept for tracing.
    pub prior_cwnd: u64,
    pub mode: PrrMode,
}

impl PrrState {
    /// Starts a reduction episode. `recover_fs` is the pipe at entry, which
    /// excludes any segments TSO is still holding back.
    pub fn enter_recovery(mode: PrrMode, cwnd: u64, pipe: u64, ssthresh: u64) -> Self {
        debug_assert!(ssthresh >= 2, "ssthresh {ssthresh} below floor");
        PrrState {
            prr_delivered: 0,
            prr_out: 0,
            recover_fs: pipe.max(1),
            ssthresh,
            prior_cwnd: cwnd,
            mode,
        }
    }

    pub fn record_delivered(&mut self, delivered: u64) {
        self.prr_delivered += delivered;
    }

    pub fn record_sent(&mut self, sent: u64) {
        self.prr_out += sent;
    }

    /// Allowance not yet used: `prr_delivered - prr_out`.
    pub fn surplus(&self) -> i64 {
        self.prr_delivered as i64 - self.prr_out as i64
    }

    /// Segments that may be sent in response to the current ack.
    /// `prr_delivered` must already include `delivered_now`.
    pub fn sndcnt(&self, delivered_now: u64, pipe: u64) -> u64 {
        let sndcnt = match self.mode {
            PrrMode::Rfc6937 => self.rfc_sndcnt(delivered_now, pipe),
            PrrMode::LinuxBugged | PrrMode::Patched => self.linux_sndcnt(delivered_now, pipe),
            PrrMode::Off => 0,
        };
        sndcnt.max(0) as u64
    }

    fn proportional(&self) -> i64 {
        let dividend = u128::from(self.prr_delivered) * u128::from(self.ssthresh);
        let ceil = dividend.div_ceil(u128::from(self.recover_fs));
        ceil as i64 - self.prr_out as i64
    }

    // Structured after the RFC pseudocode.
    fn rfc_sndcnt(&self, delivered_now: u64, pipe: u64) -> i64 {
        if pipe > self.ssthresh {
            self.proportional()
        } else {
            let limit = self.surplus().max(delivered_now as i64) + 1;
            (self.ssthresh as i64 - pipe as i64).min(limit)
        }
    }

    // Structured after tcp_cwnd_reduction(): a signed delta decides the
    // branch.
    fn linux_sndcnt(&self, delivered_now: u64, pipe: u64) -> i64 {
        let delta = self.ssthresh as i64 - pipe as i64;
        if delta < 0 {
            return self.proportional();
        }
        let newly = delivered_now as i64;
        match self.mode {
            PrrMode::LinuxBugged => delta.min(newly + 1),
            _ => delta.min(self.surplus().max(newly) + 1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(mode: PrrMode, delivered: u64, out: u64, rfs: u64, ssthresh: u64) -> PrrState {
        PrrState {
            prr_delivered: delivered,
            prr_out: out,
            recover_fs: rfs,
            ssthresh,
            prior_cwnd: rfs,
            mode,
        }
    }

    const ALL: [PrrMode; 3] = [PrrMode::Rfc6937, PrrMode::LinuxBugged, PrrMode::Patched];

    #[test]
    fn entry_zeroes_counters() {
        let s = PrrState::enter_recovery(PrrMode::Patched, 100, 90, 95);
        assert_eq!((s.prr_delivered, s.prr_out, s.recover_fs), (0, 0, 90));
        let z = PrrState::enter_recovery(PrrMode::Patched, 100, 0, 95);
        assert_eq!(z.recover_fs, 1);
    }

    #[test]
    fn proportional_clause() {
        for mode in ALL {
            let s = state(mode, 10, 8, 100, 90);
            assert_eq!(s.sndcnt(1, 100), 1, "{mode}");
        }
    }

    #[test]
    fn modes_agree_without_deferral() {
        for mode in ALL {
            let s = state(mode, 2, 2, 100, 90);
            assert_eq!(s.sndcnt(2, 80), 3, "{mode}");
        }
    }

    #[test]
    fn bugged_mode_forgets_deferred_allowance() {
        let s = |mode| state(mode, 12, 4, 100, 90);
        assert_eq!(s(PrrMode::Rfc6937).sndcnt(2, 80), 9);
        assert_eq!(s(PrrMode::Patched).sndcnt(2, 80), 9);
        assert_eq!(s(PrrMode::LinuxBugged).sndcnt(2, 80), 3);
    }

    #[test]
    fn record_sent_updates_surplus() {
        let mut s = state(PrrMode::Patched, 3, 0, 10, 8);
        s.record_sent(0);
        assert_eq!(s.surplus(), 3);
        s.record_sent(3);
        assert_eq!(s.surplus(), 0);
        // Granted but deferred: surplus grows with each delivery.
        s.record_delivered(2);
        s.record_sent(0);
        assert_eq!(s.surplus(), 2);
    }

    #[test]
    fn off_mode_grants_nothing() {
        let s = state(PrrMode::Off, 10, 0, 10, 8);
        assert_eq!(s.sndcnt(1, 5), 0);
    }

    #[test]
    fn never_negative() {
        let s = state(PrrMode::Patched, 1, 50, 100, 90);
        assert_eq!(s.sndcnt(1, 95), 0);
    }

    #[test]
    fn parse_names() {
        for m in [PrrMode::Rfc6937, PrrMode::LinuxBugged, PrrMode::Patched, PrrMode::Off] {
            assert_eq!(PrrMode::parse(&m.to_string()), Some(m));
        }
        assert_eq!(PrrMode::parse("nope"), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn no_overshoot_below_ssthresh(
                delivered in 0u64..10_000, out in 0u64..10_000, rfs in 1u64..5_000,
                ssthresh in 2u64..5_000, pipe in 0u64..5_000, now in 1u64..10,
            ) {
                prop_assume!(pipe <= ssthresh);
                for mode in ALL {
                    let s = state(mode, delivered + now, out, rfs, ssthresh);
                    prop_assert!(s.sndcnt(now, pipe) <= ssthresh - pipe);
                }
            }

            #[test]
            fn rfc_and_patched_agree_everywhere(
                delivered in 0u64..10_000, out in 0u64..10_000, rfs in 1u64..5_000,
                ssthresh in 2u64..5_000, pipe in 0u64..5_000, now in 1u64..10,
            ) {
                let a = state(PrrMode::Rfc6937, delivered + now, out, rfs, ssthresh);
                let b = state(PrrMode::Patched, delivered + now, out, rfs, ssthresh);
                prop_assert_eq!(a.sndcnt(now, pipe), b.sndcnt(now, pipe));
            }
        }
    }
}
