//! Capacity and RTT sweeps with repeated seeds.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::engine::SimTime;
use crate::error::{Result, SimError};
use crate::metrics::mean;
use crate::scenario::{parse_duration, parse_rate, ScenarioConfig};
use crate::sim::{run_scenario, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Capacity,
    Rtt,
}

impl FromStr for SweepAxis {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "capacity" | "rate" => Ok(SweepAxis::Capacity),
            "rtt" => Ok(SweepAxis::Rtt),
            _ => Err(SimError::config(format!("unknown sweep axis {s:?}: expected capacity or rtt"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Capacity => "capacity",
            SweepAxis::Rtt => "rtt",
        })
    }
}

/// A point on the sweep axis: bits per second or a base RTT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisValue {
    Capacity(u64),
    Rtt(SimTime),
}

impl AxisValue {
    pub fn parse(axis: SweepAxis, s: &str) -> Result<Self> {
        match axis {
            SweepAxis::Capacity => parse_rate(s).map(AxisValue::Capacity),
            SweepAxis::Rtt => parse_duration(s).map(AxisValue::Rtt),
        }
    }

    /// Mb/s for capacity, ms for RTT; the unit used in `summary.csv`.
    pub fn as_f64(&self) -> f64 {
        match self {
            AxisValue::Capacity(bps) => *bps as f64 / 1e6,
            AxisValue::Rtt(t) => t.as_millis_f64(),
        }
    }

    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        match *self {
            AxisValue::Capacity(bps) => cfg.capacity_bps = bps,
            AxisValue::Rtt(t) => cfg.base_rtt = t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: AxisValue,
    pub seed: u64,
    pub outcome: std::result::Result<Summary, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanRow {
    pub axis_value: AxisValue,
    pub jain: Option<f64>,
    pub geo_ratio: Option<f64>,
    pub utilization: Option<f64>,
    pub mean_queue_us: Option<f64>,
    pub p99_queue_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub means: Vec<MeanRow>,
}

impl SweepTable {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.outcome.is_err())
    }
}

/// Seeds used for `reps` repetitions of a template.
pub fn rep_seeds(base: u64, reps: u32) -> Vec<u64> {
    (0..u64::from(reps)).map(|i| base.wrapping_add(i)).collect()
}

/// Runs every (value, seed) pair. Failed runs are kept as error rows and
/// the sweep carries on. With `parallel`, rows run on the current rayon
/// pool; the table is identical either way.
pub fn sweep(
    template: &ScenarioConfig,
    axis: SweepAxis,
    values: &[AxisValue],
    reps: u32,
    parallel: bool,
) -> Result<SweepTable> {
    if values.len() < 2 {
        return Err(SimError::config("a sweep needs at least two axis values"));
    }
    if reps == 0 {
        return Err(SimError::config("a sweep needs at least one repetition"));
    }
    let jobs: Vec<(AxisValue, u64)> = values
        .iter()
        .flat_map(|&v| rep_seeds(template.seed, reps).into_iter().map(move |s| (v, s)))
        .collect();
    let run = |&(v, seed): &(AxisValue, u64)| {
        let mut cfg = template.clone();
        v.apply(&mut cfg);
        cfg.seed = seed;
        SweepRow {
            axis_value: v,
            seed,
            outcome: run_scenario(&cfg).map(|r| r.summary).map_err(|e| e.to_string()),
        }
    };
    let rows: Vec<SweepRow> = if parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };

    let means = values
        .iter()
        .map(|&v| {
            let ok: Vec<&Summary> = rows
                .iter()
                .filter(|r| r.axis_value == v)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let avg = |f: &dyn Fn(&Summary) -> Option<f64>| mean(&ok.iter().filter_map(|s| f(s)).collect::<Vec<_>>());
            MeanRow {
                axis_value: v,
                jain: avg(&|s| s.jain),
                geo_ratio: avg(&|s| s.geo_ratio),
                utilization: avg(&|s| Some(s.utilization)),
                mean_queue_us: avg(&|s| Some(s.mean_queue_us)),
                p99_queue_us: avg(&|s| Some(s.p99_queue_us)),
            }
        })
        .collect();
    Ok(SweepTable { axis, rows, means })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        assert_eq!("RTT".parse::<SweepAxis>().unwrap(), SweepAxis::Rtt);
        assert!("latency".parse::<SweepAxis>().is_err());
        let v = AxisValue::parse(SweepAxis::Rtt, "20ms").unwrap();
        assert_eq!(v.as_f64(), 20.0);
        let c = AxisValue::parse(SweepAxis::Capacity, "1Gbps").unwrap();
        assert_eq!(c.as_f64(), 1000.0);
    }

    #[test]
    fn seeds_are_consecutive() {
        assert_eq!(rep_seeds(10, 3), vec![10, 11, 12]);
    }
}
