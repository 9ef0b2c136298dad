//! Scenario descriptions and their TOML file format.
//!
//! ```toml
//! name = "prr-bug"
//! capacity = "200Mbps"
//! base_rtt = "50ms"
//! warmup = "5s"
//! measure = "40s"
//! sample_window = 2        # base RTTs per sample
//! seed = 1
//! ack_jitter = "20us"      # optional, uniform extra return-path delay
//!
//! [aqm]
//! metric = "sojourn"       # or "est"
//! shape = "step"           # or "ramp" with min/max
//! threshold = "1ms"
//!
//! [[flows]]
//! variant = "DCTCP-PS10Tu"
//! prr = "linux-bugged"     # optional, PRR flavour when the code enables it
//! tso = true               # optional, overrides the code
//! start = "0s"
//! ```
//!
//! Durations take `ns`, `us`, `ms` or `s` suffixes and may be fractional
//! (`91.8ms`). Rates take `bps`, `kbps`, `Mbps` or `Gbps`.

use std::path::Path;

use serde::Deserialize;

use crate::aqm::{AqmConfig, DelayMetric, MarkShape, DEFAULT_DROP_CAP, DEFAULT_PACKET_BYTES};
use crate::engine::SimTime;
use crate::error::{Result, SimError};
use crate::prr::PrrMode;
use crate::sender::{DEFAULT_INITIAL_CWND, DEFAULT_TSO_WIN_DIVISOR};
use crate::variant::{parse_variant_with, FlowVariant};

/// Bytes of IP and TCP header (with timestamps) in every frame.
pub const HEADER_BYTES: u32 = 52;
pub const DEFAULT_NIC_MULTIPLIER: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    pub variant: FlowVariant,
    pub start: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub capacity_bps: u64,
    pub base_rtt: SimTime,
    pub aqm: AqmConfig,
    pub flows: Vec<FlowSpec>,
    pub warmup: SimTime,
    pub measure: SimTime,
    /// Sampling period in base RTTs.
    pub sample_window: u32,
    pub seed: u64,
    pub packet_bytes: u32,
    /// Sender NIC rate as a multiple of the bottleneck rate.
    pub nic_multiplier: u64,
    pub initial_cwnd: u64,
    pub tso_win_divisor: u64,
    /// Each ack is delayed by a uniform draw from `[0, ack_jitter]`, never
    /// overtaking the flow's previous ack. Zero keeps the return path exact.
    pub ack_jitter: SimTime,
}

impl ScenarioConfig {
    /// A scenario with the usual defaults and no flows.
    pub fn new(name: impl Into<String>, capacity_bps: u64, base_rtt: SimTime, aqm: AqmConfig) -> Self {
        ScenarioConfig {
            name: name.into(),
            capacity_bps,
            base_rtt,
            aqm,
            flows: Vec::new(),
            warmup: SimTime::from_secs(20),
            measure: SimTime::from_secs(40),
            sample_window: 2,
            seed: 1,
            packet_bytes: DEFAULT_PACKET_BYTES,
            nic_multiplier: DEFAULT_NIC_MULTIPLIER,
            initial_cwnd: DEFAULT_INITIAL_CWND,
            tso_win_divisor: DEFAULT_TSO_WIN_DIVISOR,
            ack_jitter: SimTime::ZERO,
        }
    }

    pub fn with_flow(mut self, variant: FlowVariant, start: SimTime) -> Self {
        self.flows.push(FlowSpec { variant, start });
        self
    }

    pub fn run_length(&self) -> SimTime {
        self.warmup + self.measure
    }

    pub fn sample_period(&self) -> SimTime {
        SimTime::from_nanos(self.base_rtt.as_nanos() * u64::from(self.sample_window))
    }

    pub fn payload_bytes(&self) -> u32 {
        self.packet_bytes - HEADER_BYTES
    }

    pub fn nic_rate_bps(&self) -> u64 {
        self.capacity_bps * self.nic_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::config(format!("{}: {m}", self.name)));
        if self.capacity_bps == 0 {
            return bad("capacity must be positive".into());
        }
        if self.base_rtt == SimTime::ZERO {
            return bad("base_rtt must be positive".into());
        }
        if self.flows.is_empty() {
            return bad("at least one flow is required".into());
        }
        if self.flows.windows(2).any(|w| w[1].start < w[0].start) {
            return bad("flow start times must be non-decreasing".into());
        }
        if self.measure == SimTime::ZERO || self.sample_window == 0 {
            return bad("measure and sample_window must be positive".into());
        }
        if self.packet_bytes <= HEADER_BYTES {
            return bad(format!("packet_bytes must exceed {HEADER_BYTES}"));
        }
        if self.nic_multiplier == 0 || self.tso_win_divisor == 0 || self.initial_cwnd < 2 {
            return bad("nic_multiplier, tso_win_divisor and initial_cwnd (>= 2) must be positive".into());
        }
        if self.ack_jitter >= self.base_rtt {
            return bad("ack_jitter must be below base_rtt".into());
        }
        if let Some(f) = self.flows.iter().find(|f| f.start >= self.run_length()) {
            return bad(format!("flow starting at {} never runs", f.start));
        }
        self.aqm.validate()?;
        for f in &self.flows {
            f.variant.validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| SimError::config(format!("scenario file: {e}")))?;
        file.into_config()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.name.is_empty() {
            cfg.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: String,
    capacity: String,
    base_rtt: String,
    #[serde(default = "default_warmup")]
    warmup: String,
    #[serde(default = "default_measure")]
    measure: String,
    #[serde(default = "default_sample_window")]
    sample_window: u32,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_packet_bytes")]
    packet_bytes: u32,
    #[serde(default = "default_nic_multiplier")]
    nic_multiplier: u64,
    #[serde(default = "default_initial_cwnd")]
    initial_cwnd: u64,
    #[serde(default = "default_win_divisor")]
    tso_win_divisor: u64,
    #[serde(default)]
    ack_jitter: Option<String>,
    aqm: AqmFile,
    flows: Vec<FlowFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AqmFile {
    metric: DelayMetric,
    shape: String,
    threshold: Option<String>,
    min: Option<String>,
    max: Option<String>,
    #[serde(default = "default_drop_cap")]
    drop_cap_pkts: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowFile {
    variant: String,
    prr: Option<String>,
    tso: Option<bool>,
    #[serde(default = "default_start")]
    start: String,
    /// Replicates this entry, each copy starting `stagger` after the last.
    #[serde(default = "default_count")]
    count: u32,
    stagger: Option<String>,
}

fn default_warmup() -> String {
    "20s".into()
}
fn default_measure() -> String {
    "40s".into()
}
fn default_sample_window() -> u32 {
    2
}
fn default_seed() -> u64 {
    1
}
fn default_packet_bytes() -> u32 {
    DEFAULT_PACKET_BYTES
}
fn default_nic_multiplier() -> u64 {
    DEFAULT_NIC_MULTIPLIER
}
fn default_initial_cwnd() -> u64 {
    DEFAULT_INITIAL_CWND
}
fn default_win_divisor() -> u64 {
    DEFAULT_TSO_WIN_DIVISOR
}
fn default_drop_cap() -> usize {
    DEFAULT_DROP_CAP
}
fn default_start() -> String {
    "0s".into()
}
fn default_count() -> u32 {
    1
}

impl ScenarioFile {
    fn into_config(self) -> Result<ScenarioConfig> {
        let shape = match self.aqm.shape.to_ascii_lowercase().as_str() {
            "step" => MarkShape::Step {
                threshold: required_duration(&self.aqm.threshold, "aqm.threshold")?,
            },
            "ramp" => MarkShape::Ramp {
                min: required_duration(&self.aqm.min, "aqm.min")?,
                max: required_duration(&self.aqm.max, "aqm.max")?,
            },
            other => return Err(SimError::config(format!("aqm.shape {other:?}: expected step or ramp"))),
        };
        let mut flows = Vec::new();
        for f in &self.flows {
            let prr_on = match &f.prr {
                None => PrrMode::LinuxBugged,
                Some(p) => PrrMode::parse(p)
                    .ok_or_else(|| SimError::config(format!("unknown prr mode {p:?}")))?,
            };
            let mut variant = parse_variant_with(&f.variant, prr_on)?;
            // An explicit "off" wins over the code.
            if prr_on == PrrMode::Off {
                variant.prr = PrrMode::Off;
            }
            if let Some(tso) = f.tso {
                variant.tso = tso;
            }
            let start = parse_duration(&f.start)?;
            let stagger = f.stagger.as_deref().map(parse_duration).transpose()?.unwrap_or_default();
            for i in 0..u64::from(f.count) {
                let offset = SimTime::from_nanos(stagger.as_nanos() * i);
                flows.push(FlowSpec {
                    variant,
                    start: start + offset,
                });
            }
        }
        let cfg = ScenarioConfig {
            name: self.name,
            capacity_bps: parse_rate(&self.capacity)?,
            base_rtt: parse_duration(&self.base_rtt)?,
            aqm: AqmConfig {
                metric: self.aqm.metric,
                shape,
                drop_cap_pkts: self.aqm.drop_cap_pkts,
            },
            flows,
            warmup: parse_duration(&self.warmup)?,
            measure: parse_duration(&self.measure)?,
            sample_window: self.sample_window,
            seed: self.seed,
            packet_bytes: self.packet_bytes,
            nic_multiplier: self.nic_multiplier,
            initial_cwnd: self.initial_cwnd,
            tso_win_divisor: self.tso_win_divisor,
            ack_jitter: self.ack_jitter.as_deref().map(parse_duration).transpose()?.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn required_duration(v: &Option<String>, key: &str) -> Result<SimTime> {
    match v {
        Some(s) => parse_duration(s),
        None => Err(SimError::config(format!("missing {key}"))),
    }
}

fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let end = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(s.len());
    let value: f64 = s[..end].parse().ok()?;
    Some((value, s[end..].trim()))
}

/// Parses `"50ms"`, `"91.8ms"`, `"250us"`, `"2s"` or `"100ns"`.
pub fn parse_duration(s: &str) -> Result<SimTime> {
    let bad = || SimError::config(format!("bad duration {s:?}"));
    let (value, unit) = split_number(s).ok_or_else(bad)?;
    let scale = match unit {
        "ns" => 1.0,
        "us" | "µs" => 1e3,
        "ms" => 1e6,
        "s" => 1e9,
        _ => return Err(bad()),
    };
    Ok(SimTime::from_nanos((value * scale).round() as u64))
}

/// Parses `"200Mbps"`, `"1Gbps"`, `"500kbps"` or `"1000bps"`.
pub fn parse_rate(s: &str) -> Result<u64> {
    let bad = || SimError::config(format!("bad rate {s:?}"));
    let (value, unit) = split_number(s).ok_or_else(bad)?;
    let scale = match unit.to_ascii_lowercase().as_str() {
        "bps" | "" => 1.0,
        "kbps" => 1e3,
        "mbps" => 1e6,
        "gbps" => 1e9,
        _ => return Err(bad()),
    };
    let bps = (value * scale).round() as u64;
    if bps == 0 {
        return Err(bad());
    }
    Ok(bps)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
        name = "two-flow"
        capacity = "200Mbps"
        base_rtt = "36ms"
        warmup = "5s"
        measure = "10s"
        seed = 7

        [aqm]
        metric = "est"
        shape = "step"
        threshold = "2ms"

        [[flows]]
        variant = "DCTCP-PS20tU"
        prr = "patched"
        count = 2
        stagger = "5s"
    "#;

    #[test]
    fn parses_example() {
        let cfg = ScenarioConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(cfg.capacity_bps, 200_000_000);
        assert_eq!(cfg.base_rtt, SimTime::from_millis(36));
        assert_eq!(cfg.aqm.metric, DelayMetric::Est);
        assert_eq!(cfg.flows.len(), 2);
        assert_eq!(cfg.flows[1].start, SimTime::from_secs(5));
        assert_eq!(cfg.flows[0].variant.prr, PrrMode::Patched);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sample_period(), SimTime::from_millis(72));
    }

    #[test]
    fn durations_and_rates() {
        assert_eq!(parse_duration("91.8ms").unwrap(), SimTime::from_micros(91_800));
        assert_eq!(parse_duration("250us").unwrap(), SimTime::from_micros(250));
        assert_eq!(parse_duration("3s").unwrap(), SimTime::from_secs(3));
        assert!(parse_duration("3 parsecs").is_err());
        assert!(parse_duration("ms").is_err());
        assert_eq!(parse_rate("1Gbps").unwrap(), 1_000_000_000);
        assert_eq!(parse_rate("2.5Mbps").unwrap(), 2_500_000);
        assert!(parse_rate("0Mbps").is_err());
    }

    #[test]
    fn rejects_bad_files() {
        let no_flows = EXAMPLE.split("[[flows]]").next().unwrap().to_string() + "flows = []\n";
        assert!(ScenarioConfig::from_toml_str(&no_flows).is_err());
        let typo = EXAMPLE.replace("base_rtt", "base_rrt");
        assert!(ScenarioConfig::from_toml_str(&typo).is_err());
        let ramp = EXAMPLE.replace("shape = \"step\"", "shape = \"ramp\"");
        let err = ScenarioConfig::from_toml_str(&ramp).unwrap_err().to_string();
        assert!(err.contains("aqm.min"), "{err}");
        let late = EXAMPLE.replace("stagger = \"5s\"", "stagger = \"20s\"");
        assert!(ScenarioConfig::from_toml_str(&late).is_err());
    }

    #[test]
    fn explicit_prr_off_and_tso_override() {
        let text = EXAMPLE.replace("prr = \"patched\"", "prr = \"off\"\ntso = false");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.flows[0].variant.prr, PrrMode::Off);
        assert!(!cfg.flows[0].variant.tso);
    }
}
