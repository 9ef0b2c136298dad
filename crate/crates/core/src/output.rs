//! CSV writers.
//!
//! `timeseries.csv`: `time_ns, flow, cwnd, alpha, throughput_bps, marks,
//! queue_delay_us`. Throughput is receiver goodput in payload bits per
//! second over the sample window; marks are CE marks delivered to the flow
//! in the window; queue delay is the mean sojourn of every packet dequeued
//! in the window.
//!
//! `summary.csv`: `axis_value, seed, jain, geo_ratio, utilization,
//! mean_queue_us, p99_queue_us`. The axis value is Mb/s or ms; sweep mean
//! rows carry `mean` in the seed column. Utilization is delivered frames
//! over link capacity, which equals goodput over `capacity * payload /
//! frame`. Missing values are empty fields.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::sim::{RunResult, Summary};
use crate::sweep::SweepTable;

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Serialize)]
struct TimeseriesCsv {
    time_ns: u64,
    flow: u32,
    cwnd: u64,
    alpha: f64,
    throughput_bps: f64,
    marks: u64,
    queue_delay_us: f64,
}

#[derive(Serialize)]
struct SummaryCsv {
    axis_value: Option<f64>,
    seed: String,
    jain: Option<f64>,
    geo_ratio: Option<f64>,
    utilization: Option<f64>,
    mean_queue_us: Option<f64>,
    p99_queue_us: Option<f64>,
}

impl SummaryCsv {
    fn from_summary(axis_value: Option<f64>, seed: u64, s: &Summary) -> Self {
        SummaryCsv {
            axis_value,
            seed: seed.to_string(),
            jain: s.jain,
            geo_ratio: s.geo_ratio,
            utilization: Some(s.utilization),
            mean_queue_us: Some(s.mean_queue_us),
            p99_queue_us: Some(s.p99_queue_us),
        }
    }

    fn empty(axis_value: f64, seed: String) -> Self {
        SummaryCsv {
            axis_value: Some(axis_value),
            seed,
            jain: None,
            geo_ratio: None,
            utilization: None,
            mean_queue_us: None,
            p99_queue_us: None,
        }
    }
}

fn csv_err(e: csv::Error) -> SimError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SimError::Io(io),
        other => SimError::Invariant(format!("csv: {other:?}")),
    }
}

pub fn write_timeseries<W: Write>(out: W, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &result.timeseries {
        w.serialize(TimeseriesCsv {
            time_ns: r.time.as_nanos(),
            flow: r.flow.0,
            cwnd: r.cwnd,
            alpha: r.alpha,
            throughput_bps: r.throughput_bps,
            marks: r.marks,
            queue_delay_us: r.queue_delay_us,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Single-run summary; the axis column is empty.
pub fn write_run_summary<W: Write>(out: W, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.serialize(SummaryCsv::from_summary(None, result.seed, &result.summary))
        .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

pub fn write_sweep_summary<W: Write>(out: W, table: &SweepTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &table.rows {
        let rec = match &row.outcome {
            Ok(s) => SummaryCsv::from_summary(Some(row.axis_value.as_f64()), row.seed, s),
            Err(_) => SummaryCsv::empty(row.axis_value.as_f64(), row.seed.to_string()),
        };
        w.serialize(rec).map_err(csv_err)?;
    }
    for m in &table.means {
        w.serialize(SummaryCsv {
            axis_value: Some(m.axis_value.as_f64()),
            seed: "mean".into(),
            jain: m.jain,
            geo_ratio: m.geo_ratio,
            utilization: m.utilization,
            mean_queue_us: m.mean_queue_us,
            p99_queue_us: m.p99_queue_us,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `timeseries.csv` and `summary.csv` into `dir`.
pub fn write_run(dir: &Path, result: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_timeseries(std::fs::File::create(dir.join(TIMESERIES_FILE))?, result)?;
    write_run_summary(std::fs::File::create(dir.join(SUMMARY_FILE))?, result)?;
    Ok(())
}

pub fn write_sweep(dir: &Path, table: &SweepTable) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_sweep_summary(std::fs::File::create(dir.join(SUMMARY_FILE))?, table)
}

#[derive(Serialize)]
struct DequeueCsv {
    time_ns: u64,
    flow: u32,
    sojourn_ns: u64,
    est_ns: u64,
    marked: bool,
}

#[derive(Serialize)]
struct SenderCsv {
    time_ns: u64,
    flow: u32,
    cwnd: u64,
    ssthresh: u64,
    pipe: u64,
    srtt_ns: u64,
    burst_size: u64,
    deferred: u64,
}

#[derive(Serialize)]
struct PrrCsv {
    time_ns: u64,
    flow: u32,
    mode: String,
    pipe: u64,
    ssthresh: u64,
    sndcnt: u64,
    prr_delivered: u64,
    prr_out: u64,
}

#[derive(Serialize)]
struct AlphaCsv {
    time_ns: u64,
    flow: u32,
    raw: u64,
    alpha: f64,
    delivered: u64,
    delivered_ce: u64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the trace files of a traced run: `trace_dequeue.csv`,
/// `trace_sender.csv`, `trace_prr.csv` and `trace_alpha.csv`. A run
/// without traces writes nothing.
pub fn write_traces(dir: &Path, result: &RunResult) -> Result<()> {
    let Some(trace) = &result.trace else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    write_rows(
        &dir.join("trace_dequeue.csv"),
        trace.dequeue.iter().map(|r| DequeueCsv {
            time_ns: r.time.as_nanos(),
            flow: r.flow.0,
            sojourn_ns: r.sojourn.as_nanos(),
            est_ns: r.est.as_nanos(),
            marked: r.marked,
        }),
    )?;
    write_rows(
        &dir.join("trace_sender.csv"),
        trace.senders.iter().flat_map(|s| &s.sender).map(|r| SenderCsv {
            time_ns: r.time.as_nanos(),
            flow: r.flow.0,
            cwnd: r.cwnd,
            ssthresh: r.ssthresh,
            pipe: r.pipe,
            srtt_ns: r.srtt.as_nanos(),
            burst_size: r.burst_size,
            deferred: r.deferred,
        }),
    )?;
    write_rows(
        &dir.join("trace_prr.csv"),
        trace.senders.iter().flat_map(|s| &s.prr).map(|r| PrrCsv {
            time_ns: r.time.as_nanos(),
            flow: r.flow.0,
            mode: r.mode.to_string(),
            pipe: r.pipe,
            ssthresh: r.ssthresh,
            sndcnt: r.sndcnt,
            prr_delivered: r.prr_delivered,
            prr_out: r.prr_out,
        }),
    )?;
    write_rows(
        &dir.join("trace_alpha.csv"),
        trace.senders.iter().flat_map(|s| &s.alpha).map(|r| AlphaCsv {
            time_ns: r.time.as_nanos(),
            flow: r.flow.0,
            raw: r.raw,
            alpha: r.alpha,
            delivered: r.delivered,
            delivered_ce: r.delivered_ce,
        }),
    )
}
