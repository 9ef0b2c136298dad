use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ecnsim::output;
use ecnsim::scenario::{parse_duration, ScenarioConfig};
use ecnsim::sim::{run_scenario, run_scenario_with, RunOptions, RunResult};
use ecnsim::sweep::{sweep, AxisValue, SweepAxis};
use ecnsim::SimError;

#[derive(Parser)]
#[command(name = "ecnsim", version, about = "Single-bottleneck ECN simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write timeseries.csv and summary.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write per-ack, per-round and per-dequeue trace CSVs.
        #[arg(long)]
        trace: bool,
    },
    /// Repeat a scenario over capacity or RTT values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated, e.g. 10ms,20ms,50ms or 100Mbps,200Mbps.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 5)]
        reps: u32,
        /// Worker threads for sweep rows.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Run every scenario file in a directory and check run invariants.
    Selftest {
        #[arg(long, default_value = "scenarios")]
        dir: PathBuf,
        /// Overrides each file's measurement period, e.g. 5s for a quick pass.
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        warmup: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    warmup: Option<String>,
    #[arg(long)]
    measure: Option<String>,
}

/// A failure and the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<SimError>() {
            Some(SimError::Invariant(_)) => 1,
            Some(SimError::EmptyRound | SimError::QueueEmpty | SimError::ScheduleInPast { .. }) => 1,
            _ => 2,
        };
        Failure { code, error }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn invariant(msg: String) -> Failure {
    Failure {
        code: 1,
        error: anyhow::anyhow!(msg),
    }
}

fn apply_periods(cfg: &mut ScenarioConfig, warmup: &Option<String>, measure: &Option<String>) -> anyhow::Result<()> {
    if let Some(w) = warmup {
        cfg.warmup = parse_duration(w)?;
    }
    if let Some(m) = measure {
        cfg.measure = parse_duration(m)?;
    }
    cfg.validate()?;
    Ok(())
}

fn load(common: &Common) -> anyhow::Result<ScenarioConfig> {
    if !common.scenario.is_file() {
        bail!("scenario file {} not found", common.scenario.display());
    }
    let mut cfg = ScenarioConfig::from_file(&common.scenario)
        .with_context(|| format!("loading {}", common.scenario.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    apply_periods(&mut cfg, &common.warmup, &common.measure)?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

fn print_run(r: &RunResult) {
    let s = &r.summary;
    println!(
        "{} seed {}: jain {} geo_ratio {} utilization {:.3} queue mean {:.0}us p99 {:.0}us",
        r.name,
        r.seed,
        fmt_opt(s.jain),
        fmt_opt(s.geo_ratio),
        s.utilization,
        s.mean_queue_us,
        s.p99_queue_us
    );
    for f in &r.flows {
        println!(
            "  flow {} {} start {}: {:.1} Mb/s, {} reductions, {:.4} of delivered marked",
            f.flow,
            f.code,
            f.start,
            f.mean_rate_bps / 1e6,
            f.counters.cwr_entries,
            f.marks_delivered as f64 / f.delivered.max(1) as f64
        );
    }
}

fn cmd_run(common: &Common, trace: bool) -> Result<(), Failure> {
    let cfg = load(common)?;
    let result = run_scenario_with(&cfg, RunOptions { trace })?;
    output::write_run(&common.out_dir, &result)?;
    output::write_traces(&common.out_dir, &result)?;
    print_run(&result);
    Ok(())
}

fn cmd_sweep(
    common: &Common,
    axis: SweepAxis,
    values: &[String],
    reps: u32,
    parallel: Option<usize>,
) -> Result<(), Failure> {
    let cfg = load(common)?;
    let values = values
        .iter()
        .map(|v| AxisValue::parse(axis, v))
        .collect::<Result<Vec<_>, _>>()
        .map_err(anyhow::Error::from)?;
    let table = match parallel {
        Some(n) if n > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(anyhow::Error::from)?;
            pool.install(|| sweep(&cfg, axis, &values, reps, true))
        }
        _ => sweep(&cfg, axis, &values, reps, false),
    }
    .map_err(anyhow::Error::from)?;
    // Flush whatever finished before reporting failures.
    output::write_sweep(&common.out_dir, &table)?;
    for m in &table.means {
        println!(
            "{axis} {}: jain {} geo_ratio {} utilization {}",
            m.axis_value.as_f64(),
            fmt_opt(m.jain),
            fmt_opt(m.geo_ratio),
            fmt_opt(m.utilization)
        );
    }
    let failed: Vec<String> = table
        .failures()
        .map(|r| format!("{} seed {}: {}", r.axis_value.as_f64(), r.seed, r.outcome.as_ref().unwrap_err()))
        .collect();
    if !failed.is_empty() {
        return Err(invariant(format!("{} sweep rows failed:\n{}", failed.len(), failed.join("\n"))));
    }
    Ok(())
}

/// Checks that hold for every run regardless of configuration.
fn check_run(cfg: &ScenarioConfig, r: &RunResult) -> Vec<String> {
    let mut bad = Vec::new();
    let s = &r.summary;
    // A frame in service when measurement starts counts whole.
    let one_frame = f64::from(cfg.packet_bytes) * 8.0 / (cfg.capacity_bps as f64 * cfg.measure.as_secs_f64());
    if !(0.0..=1.0 + one_frame + 1e-9).contains(&s.utilization) {
        bad.push(format!("utilization {} outside [0, 1]", s.utilization));
    }
    let n = cfg.flows.len() as f64;
    if let Some(j) = s.jain {
        if j < 1.0 / n - 1e-9 || j > 1.0 + 1e-9 {
            bad.push(format!("jain {j} outside [1/{n}, 1]"));
        }
    }
    for f in &r.flows {
        if f.episodes.iter().any(|e| e.min_cwnd < 2 || e.ssthresh < 2) {
            bad.push(format!("flow {} cwnd below 2", f.flow));
        }
    }
    if r.timeseries.iter().any(|row| row.cwnd < 2) {
        bad.push("sampled cwnd below 2".into());
    }
    bad
}

fn cmd_selftest(dir: &Path, warmup: &Option<String>, measure: &Option<String>) -> Result<(), Failure> {
    if !dir.is_dir() {
        return Err(anyhow::anyhow!("scenario directory {} not found", dir.display()).into());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(anyhow::Error::from)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(anyhow::anyhow!("no scenario files in {}", dir.display()).into());
    }
    let started = Instant::now();
    let mut failures = 0;
    for path in &files {
        let mut cfg = ScenarioConfig::from_file(path)
            .with_context(|| format!("loading {}", path.display()))?;
        apply_periods(&mut cfg, warmup, measure)?;
        let t0 = Instant::now();
        let outcome = run_scenario(&cfg).and_then(|a| {
            // Same seed, same bytes.
            let b = run_scenario(&cfg)?;
            let (mut x, mut y) = (Vec::new(), Vec::new());
            output::write_timeseries(&mut x, &a)?;
            output::write_timeseries(&mut y, &b)?;
            Ok((a, x == y))
        });
        let problems = match &outcome {
            Ok((r, same)) => {
                let mut p = check_run(&cfg, r);
                if !same {
                    p.push("rerun with the same seed produced different output".into());
                }
                p
            }
            Err(e) => vec![e.to_string()],
        };
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        let secs = t0.elapsed().as_secs_f64();
        if problems.is_empty() {
            println!("ok   {name} ({secs:.1}s)");
        } else {
            failures += 1;
            println!("FAIL {name} ({secs:.1}s): {}", problems.join("; "));
        }
    }
    println!(
        "{} scenarios, {failures} failed, {:.1}s",
        files.len(),
        started.elapsed().as_secs_f64()
    );
    if failures > 0 {
        return Err(invariant(format!("{failures} scenarios failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { common, trace } => cmd_run(common, *trace),
        Command::Sweep {
            common,
            axis,
            values,
            reps,
            parallel,
        } => cmd_sweep(common, *axis, values, *reps, *parallel),
        Command::Selftest { dir, warmup, measure } => cmd_selftest(dir, warmup, measure),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
