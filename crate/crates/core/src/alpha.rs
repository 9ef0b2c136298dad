//! DCTCP's congestion average in kernel-style integer arithmetic.
//!
//! `alpha` is the EWMA of the CE-marked fraction of segments per round:
//! `alpha <- (1 - g) * alpha + g * F` with `g = 2^-gain_shift`.
//!
//! Three storage flavours are supported:
//!
//! * toggle (Linux default since v4.3): the decay step uses `min_not_zero`,
//!   so once `alpha >> g` truncates to zero the whole value is dropped;
//! * floor: plain `alpha >> g` decay, which stalls once that shift is zero;
//! * upscaled: the register holds `alpha * 2^(nn + g)` so neither the decay
//!   nor the per-round increment truncate at low values.
//!
//! Divisions truncate toward zero on purpose. Rounds whose CE fraction is
//! below `2^(g - nn)` contribute nothing in the non-upscaled forms.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlphaConfig {
    pub precision_bits: u32,
    pub gain_shift: u32,
    pub toggle: bool,
    pub upscaled: bool,
}

impl AlphaConfig {
    /// Linux DCTCP as shipped: 10 bits, gain 1/16, toggles to zero.
    pub const LINUX_DEFAULT: AlphaConfig = AlphaConfig {
        precision_bits: 10,
        gain_shift: 4,
        toggle: true,
        upscaled: false,
    };

    /// 20-bit upscaled storage without toggle, as used by Prague.
    pub const HIRES: AlphaConfig = AlphaConfig {
        precision_bits: 20,
        gain_shift: 4,
        toggle: false,
        upscaled: true,
    };

    pub fn new(precision_bits: u32, toggle: bool, upscaled: bool) -> Result<Self> {
        let cfg = AlphaConfig {
            precision_bits,
            gain_shift: 4,
            toggle,
            upscaled,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (nn, g) = (self.precision_bits, self.gain_shift);
        if g < 1 || nn <= g || nn > 40 {
            return Err(SimError::config(format!(
                "alpha precision {nn} / gain shift {g} must satisfy 40 >= nn > g >= 1"
            )));
        }
        if self.upscaled && self.toggle {
            return Err(SimError::config("upscaled alpha cannot also toggle to zero"));
        }
        Ok(())
    }

    /// Number of fractional bits held in the register.
    pub fn storage_bits(&self) -> u32 {
        if self.upscaled {
            self.precision_bits + self.gain_shift
        } else {
            self.precision_bits
        }
    }

    /// Register value representing alpha = 1.
    pub fn full_scale(&self) -> u64 {
        1u64 << self.storage_bits()
    }
}

/// Returns the smaller non-zero argument, the other one if either is zero,
/// and zero if both are.
pub fn min_not_zero(a: u64, b: u64) -> u64 {
    match (a, b) {
        (0, x) | (x, 0) => x,
        (a, b) => a.min(b),
    }
}

/// Per-round delivery counters. The round closes on the ack that covers
/// `next_seq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundAccumulator {
    pub delivered: u64,
    pub delivered_ce: u64,
    pub next_seq: u64,
}

impl RoundAccumulator {
    pub fn starting_at(next_seq: u64) -> Self {
        RoundAccumulator {
            delivered: 0,
            delivered_ce: 0,
            next_seq,
        }
    }

    /// Counts an ack of `acked` segments of which `ce` carried CE, with the
    /// cumulative ack point now at `snd_una`. Returns the closed round's
    /// totals when the ack crosses the round boundary, restarting the count
    /// with the boundary moved to `snd_nxt`.
    pub fn on_ack(&mut self, acked: u64, ce: u64, snd_una: u64, snd_nxt: u64) -> Option<Self> {
        debug_assert!(ce <= acked);
        self.delivered += acked;
        self.delivered_ce += ce;
        if snd_una >= self.next_seq && self.delivered > 0 {
            let done = *self;
            *self = RoundAccumulator::starting_at(snd_nxt);
            Some(done)
        } else {
            None
        }
    }

    pub fn fraction(&self) -> f64 {
        if self.delivered == 0 {
            0.0
        } else {
            self.delivered_ce as f64 / self.delivered as f64
        }
    }
}

/// What one end-of-round update did to the register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlphaUpdate {
    pub before: u64,
    pub decay: u64,
    pub increment: u64,
    pub after: u64,
    pub delivered: u64,
    pub delivered_ce: u64,
}

impl AlphaUpdate {
    /// CE marks arrived but the scaled increment truncated to zero.
    pub fn black_holed(&self) -> bool {
        self.delivered_ce > 0 && self.increment == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlphaState {
    raw: u64,
    cfg: AlphaConfig,
}

impl AlphaState {
    pub fn new(cfg: AlphaConfig, raw: u64) -> Result<Self> {
        cfg.validate()?;
        if raw > cfg.full_scale() {
            return Err(SimError::config(format!(
                "alpha register {raw} exceeds full scale {}",
                cfg.full_scale()
            )));
        }
        Ok(AlphaState { raw, cfg })
    }

    /// Starts at alpha = 1, as Linux DCTCP does on connection init.
    pub fn full(cfg: AlphaConfig) -> Result<Self> {
        Self::new(cfg, cfg.full_scale())
    }

    pub fn raw(&self) -> u64 {
        self.raw
    }

    pub fn config(&self) -> &AlphaConfig {
        &self.cfg
    }

    pub fn fraction(&self) -> f64 {
        self.raw as f64 / self.cfg.full_scale() as f64
    }

    pub fn end_of_round_update(&mut self, acc: &RoundAccumulator) -> Result<AlphaUpdate> {
        if acc.delivered == 0 {
            return Err(SimError::EmptyRound);
        }
        let AlphaConfig {
            precision_bits: nn,
            gain_shift: g,
            toggle,
            upscaled,
        } = self.cfg;
        let before = self.raw;
        let shifted = before >> g;
        let decay = if toggle {
            min_not_zero(before, shifted)
        } else {
            shifted
        };
        let mut raw = before - decay;

        let mut increment = 0;
        if acc.delivered_ce > 0 {
            // Non-upscaled: (ce << (nn - g)) / delivered, i.e. g*F in nn bits.
            // Upscaled: (ce << nn) / delivered, i.e. g*F in nn + g bits.
            let shift = if upscaled { nn } else { nn - g };
            increment = ((u128::from(acc.delivered_ce) << shift) / u128::from(acc.delivered)) as u64;
            raw = (raw + increment).min(self.cfg.full_scale());
        }
        self.raw = raw;
        Ok(AlphaUpdate {
            before,
            decay,
            increment,
            after: raw,
            delivered: acc.delivered,
            delivered_ce: acc.delivered_ce,
        })
    }

    /// Window after a DCTCP reduction, `cwnd - alpha * cwnd / 2`, floored at
    /// two segments.
    pub fn apply_reduction(&self, cwnd: u64) -> u64 {
        let cut = ((u128::from(cwnd) * u128::from(self.raw)) >> self.cfg.storage_bits()) >> 1;
        cwnd.saturating_sub(cut as u64).max(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(delivered: u64, ce: u64) -> RoundAccumulator {
        RoundAccumulator {
            delivered,
            delivered_ce: ce,
            next_seq: 0,
        }
    }

    fn lores(toggle: bool) -> AlphaConfig {
        AlphaConfig::new(10, toggle, false).unwrap()
    }

    #[test]
    fn min_not_zero_cases() {
        assert_eq!(min_not_zero(15, 0), 15);
        assert_eq!(min_not_zero(0, 7), 7);
        assert_eq!(min_not_zero(0, 0), 0);
        assert_eq!(min_not_zero(20, 1), 1);
    }

    #[test]
    fn toggle_drops_small_values_to_zero() {
        let mut a = AlphaState::new(lores(true), 15).unwrap();
        let u = a.end_of_round_update(&acc(100, 0)).unwrap();
        assert_eq!(u.decay, 15);
        assert_eq!(a.raw(), 0);
    }

    #[test]
    fn eight_marks_in_667_black_holed_at_10_bits() {
        let mut a = AlphaState::new(lores(true), 0).unwrap();
        let u = a.end_of_round_update(&acc(667, 8)).unwrap();
        assert_eq!(u.increment, 0);
        assert!(u.black_holed());
        assert_eq!(a.raw(), 0);
    }

    #[test]
    fn upscaled_20_bit_keeps_the_same_marks() {
        let mut a = AlphaState::new(AlphaConfig::HIRES, 0).unwrap();
        let u = a.end_of_round_update(&acc(667, 8)).unwrap();
        // floor(8 * 2^20 / 667)
        assert_eq!(u.increment, 12_576);
        assert_eq!(a.raw(), 12_576);
        assert!((a.fraction() - 7.4959e-4).abs() < 1e-7);
    }

    #[test]
    fn floor_variant_traps_values_below_16() {
        let mut a = AlphaState::new(lores(false), 8).unwrap();
        a.end_of_round_update(&acc(50, 0)).unwrap();
        assert_eq!(a.raw(), 8);
        // 16 decays once to 15, then sticks.
        let mut b = AlphaState::new(lores(false), 16).unwrap();
        b.end_of_round_update(&acc(50, 0)).unwrap();
        assert_eq!(b.raw(), 15);
        b.end_of_round_update(&acc(50, 0)).unwrap();
        assert_eq!(b.raw(), 15);
    }

    #[test]
    fn fraction_scaling() {
        assert_eq!(AlphaState::new(lores(true), 1024).unwrap().fraction(), 1.0);
        let f = AlphaState::new(lores(true), 16).unwrap().fraction();
        assert!((f - 0.015625).abs() < 1e-12);
        assert_eq!(AlphaState::new(AlphaConfig::HIRES, 0).unwrap().fraction(), 0.0);
    }

    #[test]
    fn reductions() {
        let zero = AlphaState::new(lores(true), 0).unwrap();
        assert_eq!(zero.apply_reduction(100), 100);
        let one = AlphaState::new(lores(true), 1024).unwrap();
        assert_eq!(one.apply_reduction(100), 50);
        let small = AlphaState::new(lores(true), 16).unwrap();
        assert_eq!(small.apply_reduction(667), 662);
        assert_eq!(one.apply_reduction(3), 2);
        let hires_full = AlphaState::full(AlphaConfig::HIRES).unwrap();
        assert_eq!(hires_full.apply_reduction(100), 50);
    }

    #[test]
    fn empty_round_rejected() {
        let mut a = AlphaState::new(lores(true), 10).unwrap();
        assert!(matches!(
            a.end_of_round_update(&acc(0, 0)),
            Err(SimError::EmptyRound)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(AlphaConfig::new(10, true, true).is_err());
        assert!(AlphaConfig {
            precision_bits: 4,
            gain_shift: 4,
            toggle: false,
            upscaled: false
        }
        .validate()
        .is_err());
        assert!(AlphaState::new(lores(true), 2000).is_err());
    }

    #[test]
    fn round_accumulator_closes_on_boundary() {
        let mut r = RoundAccumulator::starting_at(3);
        assert_eq!(r.on_ack(1, 0, 1, 10), None);
        assert_eq!(r.on_ack(1, 1, 2, 11), None);
        let done = r.on_ack(1, 0, 3, 12).unwrap();
        assert_eq!((done.delivered, done.delivered_ce), (3, 1));
        assert_eq!(r, RoundAccumulator::starting_at(12));
    }

    #[test]
    fn all_marked_rounds_converge_towards_one() {
        let mut a = AlphaState::new(AlphaConfig::HIRES, 0).unwrap();
        for _ in 0..100 {
            a.end_of_round_update(&acc(500, 500)).unwrap();
        }
        assert!(1.0 - a.fraction() < 0.01);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_cfg() -> impl Strategy<Value = AlphaConfig> {
            prop_oneof![
                Just(AlphaConfig::LINUX_DEFAULT),
                Just(lores(false)),
                Just(AlphaConfig::new(10, false, true).unwrap()),
                Just(AlphaConfig::new(20, false, false).unwrap()),
                Just(AlphaConfig::HIRES),
            ]
        }

        proptest! {
            #[test]
            fn register_stays_in_range(cfg in any_cfg(), start in 0u64..=1, rounds in proptest::collection::vec((1u64..100_000, 0u64..=100), 1..200)) {
                let mut a = AlphaState::new(cfg, start * cfg.full_scale()).unwrap();
                for (delivered, pct) in rounds {
                    let ce = delivered * pct / 100;
                    a.end_of_round_update(&acc(delivered, ce)).unwrap();
                    prop_assert!(a.raw() <= cfg.full_scale());
                }
            }

            #[test]
            fn unmarked_rounds_never_increase(cfg in any_cfg(), raw in 0u64..=1024, rounds in 1usize..50) {
                let mut a = AlphaState::new(cfg, raw * (cfg.full_scale() / 1024)).unwrap();
                let mut prev = a.raw();
                for _ in 0..rounds {
                    a.end_of_round_update(&acc(100, 0)).unwrap();
                    prop_assert!(a.raw() <= prev);
                    prev = a.raw();
                }
            }

            #[test]
            fn lores_increment_black_holes_below_one_in_64(delivered in 65u64..100_000, ce in 1u64..1_000) {
                prop_assume!(ce * 64 < delivered);
                let mut a = AlphaState::new(AlphaConfig::LINUX_DEFAULT, 0).unwrap();
                let u = a.end_of_round_update(&acc(delivered, ce)).unwrap();
                prop_assert!(u.black_holed());
            }

            #[test]
            fn reduction_bounded(cwnd in 2u64..1_000_000, raw in 0u64..=1024) {
                let a = AlphaState::new(AlphaConfig::LINUX_DEFAULT, raw).unwrap();
                let w = a.apply_reduction(cwnd);
                prop_assert!(w >= 2);
                prop_assert!(w <= cwnd);
                prop_assert!(w >= cwnd / 2);
            }
        }
    }
}
