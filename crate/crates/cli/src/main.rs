use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;

use pdq_core::config::ConfigError;
use pdq_core::metrics::Summary;
use pdq_core::runner::{self, RunError};
use pdq_core::ScenarioConfig;

/// Runs a PDQ/RCP/D3 scenario and writes flows.csv, links_timeseries.csv,
/// queues.csv, summary.txt and config.toml.
#[derive(Debug, Parser)]
#[command(name = "pdq-sim", version)]
struct Args {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the scenario's `output_dir` or `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` override, e.g. `pdq.probe_x=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Sweep axis `key=v1,v2,...`; each point runs in parallel.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    sweep: Option<String>,
    /// Seeds to run at every sweep point, comma separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

fn split_kv(raw: &str) -> Result<(String, String), ConfigError> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ConfigError::OverrideSyntax(raw.to_string())),
    }
}

#[derive(Debug, Serialize)]
struct SweepRow {
    key: String,
    value: String,
    seed: String,
    status: String,
    flows: Option<f64>,
    completed: Option<f64>,
    terminated: Option<f64>,
    mean_fct_ms: Option<f64>,
    median_fct_ms: Option<f64>,
    p99_fct_ms: Option<f64>,
    application_throughput: Option<f64>,
    drops: Option<f64>,
    probes: Option<f64>,
    last_completion_ms: Option<f64>,
}

impl SweepRow {
    fn new(key: &str, value: &str, seed: String, result: &Result<Summary, RunError>) -> Self {
        let s = result.as_ref().ok();
        let f = |g: fn(&Summary) -> f64| s.map(g);
        SweepRow {
            key: key.to_string(),
            value: value.to_string(),
            seed,
            status: match result {
                Ok(_) => "ok".to_string(),
                Err(e) => e.to_string(),
            },
            flows: f(|s| s.flows as f64),
            completed: f(|s| s.completed as f64),
            terminated: f(|s| s.terminated as f64),
            mean_fct_ms: f(|s| s.mean_fct_ms),
            median_fct_ms: f(|s| s.median_fct_ms),
            p99_fct_ms: f(|s| s.p99_fct_ms),
            application_throughput: f(|s| s.application_throughput),
            drops: f(|s| s.drops as f64),
            probes: f(|s| s.probes as f64),
            last_completion_ms: f(|s| s.last_completion_ms),
        }
    }

    /// Mean over the successful rows of one point.
    fn mean(key: &str, value: &str, rows: &[&SweepRow]) -> Self {
        let ok: Vec<&&SweepRow> = rows.iter().filter(|r| r.status == "ok").collect();
        let avg = |g: fn(&SweepRow) -> Option<f64>| {
            let v: Vec<f64> = ok.iter().filter_map(|r| g(r)).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        SweepRow {
            key: key.to_string(),
            value: value.to_string(),
            seed: "mean".to_string(),
            status: format!("{}/{} ok", ok.len(), rows.len()),
            flows: avg(|r| r.flows),
            completed: avg(|r| r.completed),
            terminated: avg(|r| r.terminated),
            mean_fct_ms: avg(|r| r.mean_fct_ms),
            median_fct_ms: avg(|r| r.median_fct_ms),
            p99_fct_ms: avg(|r| r.p99_fct_ms),
            application_throughput: avg(|r| r.application_throughput),
            drops: avg(|r| r.drops),
            probes: avg(|r| r.probes),
            last_completion_ms: avg(|r| r.last_completion_ms),
        }
    }
}

fn run_one(cfg: &ScenarioConfig, out: &Path) -> Result<Summary, RunError> {
    let result = runner::run(cfg)?;
    runner::write_outputs(&result, out)?;
    Ok(result.report.summary)
}

fn sweep(base: &ScenarioConfig, axis: &str, seeds: &[u64], out: &Path) -> Result<i32, RunError> {
    let (key, values) = split_kv(axis)?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(ConfigError::Invalid(format!("sweep `{axis}` has no values")).into());
    }
    let seeds = if seeds.is_empty() { vec![base.seed] } else { seeds.to_vec() };
    let mut jobs = Vec::new();
    for v in &values {
        for &s in &seeds {
            jobs.push((v.clone(), s));
        }
    }
    let results: Vec<(String, u64, Result<Summary, RunError>)> = jobs
        .into_par_iter()
        .map(|(v, seed)| {
            let dir = out.join(format!("{key}={v}")).join(format!("seed-{seed}"));
            let r = base
                .with_overrides(&[(key.clone(), v.clone()), ("seed".to_string(), seed.to_string())])
                .map_err(RunError::from)
                .and_then(|cfg| run_one(&cfg, &dir));
            if let Err(e) = &r {
                log::error!("{key}={v} seed {seed}: {e}");
            }
            (v, seed, r)
        })
        .collect();

    let path = out.join("sweep.csv");
    let io = |e: csv::Error| RunError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    };
    std::fs::create_dir_all(out).map_err(|source| RunError::Io { path: out.display().to_string(), source })?;
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    let mut worst = 0;
    for v in &values {
        let rows: Vec<SweepRow> = results
            .iter()
            .filter(|(pv, _, _)| pv == v)
            .map(|(_, seed, r)| SweepRow::new(&key, v, seed.to_string(), r))
            .collect();
        for r in &rows {
            w.serialize(r).map_err(io)?;
        }
        w.serialize(SweepRow::mean(&key, v, &rows.iter().collect::<Vec<_>>())).map_err(io)?;
    }
    w.flush().map_err(|source| RunError::Io { path: path.display().to_string(), source })?;
    for (_, _, r) in &results {
        if let Err(e) = r {
            worst = worst.max(e.exit_code());
        }
    }
    Ok(worst)
}

fn main_inner(args: Args) -> Result<i32, RunError> {
    let mut overrides = args.sets.iter().map(|s| split_kv(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = args.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    let cfg = ScenarioConfig::load(&args.scenario, &overrides)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match &args.sweep {
        Some(axis) => {
            let code = sweep(&cfg, axis, &args.seeds, &out)?;
            println!("wrote {}", out.join("sweep.csv").display());
            Ok(code)
        }
        None => {
            let summary = run_one(&cfg, &out)?;
            print!("{}", summary.to_text());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match main_inner(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
