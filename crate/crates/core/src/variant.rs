//! Variant codes.
//!
//! DCTCP codes are `DCTCP-` followed by five two-state letters, where a
//! capital means the capability is used: `P` PRR, `S` TSO, the alpha
//! precision in bits, `T` toggle to zero, `U` upscaled storage. So
//! `DCTCP-pS20tU` is PRR off, TSO on, 20-bit upscaled alpha without toggle.
//!
//! The code only says whether PRR is on, not which PRR. [`parse_variant`]
//! maps `P` to the bugged Linux form, which is what stock kernels shipped;
//! [`parse_variant_with`] picks another.
//!
//! Also accepted: `prague-1ms`, `prague-250us`, `prague-noburst`,
//! `prague-<N>ns`, `cubic-<beta_1024>` and the names `LoRes Toggle EWMA`,
//! `LoRes EWMA` and `HiRes EWMA`.

use std::fmt;

use crate::alpha::AlphaConfig;
use crate::cca::CcaVariant;
use crate::error::{Result, SimError};
use crate::prr::PrrMode;
use crate::sender::BurstPolicy;

/// Every DCTCP code exercised in the experiments.
pub const DCTCP_CODES: [&str; 13] = [
    "DCTCP-PS10Tu",
    "DCTCP-pS10Tu",
    "DCTCP-Ps10Tu",
    "DCTCP-PS20tU",
    "DCTCP-pS20tU",
    "DCTCP-PS10tu",
    "DCTCP-ps20tU",
    "DCTCP-Ps10tu",
    "DCTCP-Ps20tU",
    "DCTCP-pS10tu",
    "DCTCP-ps10tu",
    "DCTCP-ps10Tu",
    "DCTCP-Ps10tU",
];

pub const PRAGUE_CODES: [&str; 3] = ["prague-1ms", "prague-250us", "prague-noburst"];

/// Everything a flow's code determines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVariant {
    pub cca: CcaVariant,
    pub prr: PrrMode,
    pub tso: bool,
}

impl FlowVariant {
    pub fn validate(&self) -> Result<()> {
        self.cca.validate()
    }

    pub fn burst_policy(&self) -> BurstPolicy {
        match self.cca {
            CcaVariant::Prague(p) => p,
            _ => BurstPolicy::LINUX_DEFAULT,
        }
    }

    pub fn code(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FlowVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |on: bool, c: char| if on { c.to_ascii_uppercase() } else { c };
        match self.cca {
            CcaVariant::Dctcp(a) => write!(
                f,
                "DCTCP-{}{}{}{}{}",
                flag(self.prr.is_active(), 'p'),
                flag(self.tso, 's'),
                a.precision_bits,
                flag(a.toggle, 't'),
                flag(a.upscaled, 'u'),
            ),
            CcaVariant::Prague(p) => match p {
                BurstPolicy::PRAGUE_1MS => f.write_str("prague-1ms"),
                BurstPolicy::PRAGUE_250US => f.write_str("prague-250us"),
                BurstPolicy::PRAGUE_NO_BURST => f.write_str("prague-noburst"),
                p => write!(f, "prague-{}ns", p.max_burst.as_nanos()),
            },
            CcaVariant::CubicEcn { beta_1024 } => write!(f, "cubic-{beta_1024}"),
        }
    }
}

pub fn parse_variant(code: &str) -> Result<FlowVariant> {
    parse_variant_with(code, PrrMode::LinuxBugged)
}

/// Parses `code`, using `prr_on` for flows whose code enables PRR.
pub fn parse_variant_with(code: &str, prr_on: PrrMode) -> Result<FlowVariant> {
    let trimmed = code.trim();
    let unknown = || SimError::UnknownVariant {
        code: code.to_string(),
        valid: valid_codes(),
    };
    let prr = |on: bool| if on { prr_on } else { PrrMode::Off };

    let lower = trimmed.to_ascii_lowercase();
    let alias = match lower.as_str() {
        "lores toggle ewma" => Some("DCTCP-PS10Tu"),
        "lores ewma" => Some("DCTCP-PS10tu"),
        "hires ewma" => Some("DCTCP-PS20tU"),
        _ => None,
    };
    if let Some(a) = alias {
        return parse_variant_with(a, prr_on);
    }

    if let Some(rest) = trimmed.strip_prefix("DCTCP-") {
        return parse_dctcp(rest).map(|(p, tso, alpha)| FlowVariant {
            cca: CcaVariant::Dctcp(alpha),
            prr: prr(p),
            tso,
        }).ok_or_else(unknown);
    }
    if let Some(rest) = lower.strip_prefix("prague-") {
        let policy = match rest.replace(['_', ' '], "").as_str() {
            "1ms" => BurstPolicy::PRAGUE_1MS,
            "250us" => BurstPolicy::PRAGUE_250US,
            "noburst" => BurstPolicy::PRAGUE_NO_BURST,
            other => {
                let ns: u64 = other
                    .strip_suffix("ns")
                    .and_then(|n| n.parse().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(unknown)?;
                BurstPolicy {
                    max_burst: crate::engine::SimTime::from_nanos(ns),
                    ..BurstPolicy::PRAGUE_250US
                }
            }
        };
        return Ok(FlowVariant {
            cca: CcaVariant::Prague(policy),
            prr: PrrMode::Off,
            tso: true,
        });
    }
    if let Some(rest) = lower.strip_prefix("cubic-") {
        let beta_1024: u32 = rest.parse().map_err(|_| unknown())?;
        let v = FlowVariant {
            cca: CcaVariant::CubicEcn { beta_1024 },
            prr: prr(true),
            tso: true,
        };
        v.validate().map_err(|_| unknown())?;
        return Ok(v);
    }
    Err(unknown())
}

fn parse_dctcp(rest: &str) -> Option<(bool, bool, AlphaConfig)> {
    let b = rest.as_bytes();
    if b.len() != 6 {
        return None;
    }
    let flag = |c: u8, letter: u8| match c {
        c if c == letter.to_ascii_uppercase() => Some(true),
        c if c == letter => Some(false),
        _ => None,
    };
    let p = flag(b[0], b'p')?;
    let s = flag(b[1], b's')?;
    let nn: u32 = std::str::from_utf8(&b[2..4]).ok()?.parse().ok()?;
    if nn != 10 && nn != 20 {
        return None;
    }
    let t = flag(b[4], b't')?;
    let u = flag(b[5], b'u')?;
    let alpha = AlphaConfig::new(nn, t, u).ok()?;
    Some((p, s, alpha))
}

fn valid_codes() -> String {
    let mut all: Vec<&str> = DCTCP_CODES.to_vec();
    all.extend(PRAGUE_CODES);
    all.push("cubic-<beta_1024>");
    all.join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linux_default() {
        let v = parse_variant("DCTCP-PS10Tu").unwrap();
        assert_eq!(v.prr, PrrMode::LinuxBugged);
        assert!(v.tso);
        assert_eq!(v.cca, CcaVariant::Dctcp(AlphaConfig::LINUX_DEFAULT));
    }

    #[test]
    fn lower_case_p_disables_prr() {
        let v = parse_variant("DCTCP-pS10Tu").unwrap();
        assert_eq!(v.prr, PrrMode::Off);
        assert!(v.tso);
    }

    #[test]
    fn prague_equivalent() {
        let v = parse_variant_with("DCTCP-PS20tU", PrrMode::Patched).unwrap();
        assert_eq!(v.prr, PrrMode::Patched);
        assert_eq!(v.cca, CcaVariant::Dctcp(AlphaConfig::HIRES));
    }

    #[test]
    fn rejects_garbage() {
        for code in ["DCTCP-XY", "DCTCP-PS15Tu", "DCTCP-PS10TU", "dctcp-ps10tu", "cubic-0", "cubic-x", "prague-2ms", ""] {
            let err = parse_variant(code).unwrap_err();
            assert!(matches!(err, SimError::UnknownVariant { .. }), "{code}");
        }
        let msg = parse_variant("DCTCP-XY").unwrap_err().to_string();
        assert!(msg.contains("DCTCP-PS10Tu") && msg.contains("prague-250us"));
    }

    #[test]
    fn every_code_round_trips() {
        for code in DCTCP_CODES.iter().chain(PRAGUE_CODES.iter()) {
            assert_eq!(parse_variant(code).unwrap().code(), *code);
        }
        assert_eq!(parse_variant("cubic-717").unwrap().code(), "cubic-717");
        assert_eq!(parse_variant("prague-5000ns").unwrap().code(), "prague-5000ns");
    }

    #[test]
    fn named_variants() {
        assert_eq!(parse_variant("LoRes Toggle EWMA").unwrap().code(), "DCTCP-PS10Tu");
        assert_eq!(parse_variant("HiRes EWMA").unwrap().code(), "DCTCP-PS20tU");
        assert_eq!(parse_variant("lores ewma").unwrap().code(), "DCTCP-PS10tu");
    }

    #[test]
    fn prague_has_no_prr_and_its_own_burst() {
        let v = parse_variant("prague-No_burst").unwrap();
        assert_eq!(v.prr, PrrMode::Off);
        assert_eq!(v.burst_policy(), BurstPolicy::PRAGUE_NO_BURST);
        let d = parse_variant("DCTCP-PS10Tu").unwrap();
        assert_eq!(d.burst_policy(), BurstPolicy::LINUX_DEFAULT);
    }
}
