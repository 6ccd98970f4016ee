//! One scenario end to end: topology, workload, simulation, report files.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig, Simulator};
use crate::metrics::{write_report, MetricsError, MetricsReport, Summary};
use crate::oracle::flow_level::{flow_level_simulate, FlowLevelOptions};
use crate::sim::{simulate, SimDiagnostics, SimError, SimOptions};
use crate::time::SimTime;
use crate::topology::{Topology, TopologyError};
use crate::workload::{FlowSpec, WorkloadError};

pub const STREAM_WORKLOAD: u64 = 1;

/// Name of the effective-config echo written next to the reports.
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl RunError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invariant(_) => 2,
            RunError::Metrics(_) | RunError::Io { .. } => 3,
            RunError::Config(ConfigError::Io { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub flows: Vec<FlowSpec>,
    pub report: MetricsReport,
    /// Packet-level runs only.
    pub diagnostics: Option<SimDiagnostics>,
}

/// The workload of `cfg` on `topo`, drawn from the workload stream of the seed.
pub fn build_flows(cfg: &ScenarioConfig, topo: &Topology) -> Result<Vec<FlowSpec>, WorkloadError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_WORKLOAD);
    let mut flows = cfg.workload.generate(topo, &mut rng)?;
    for f in &mut flows {
        f.criticality = cfg.pdq.criticality;
    }
    Ok(flows)
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let topo = cfg.topology.build()?;
    let flows = build_flows(cfg, &topo)?;
    run_flows(cfg, &topo, flows)
}

/// Runs an already generated flow list under `cfg`.
pub fn run_flows(cfg: &ScenarioConfig, topo: &Topology, flows: Vec<FlowSpec>) -> Result<RunOutput, RunError> {
    log::info!(
        "{} flows, protocol {}, {:?} simulator, seed {}",
        flows.len(),
        cfg.protocol.name(),
        cfg.simulator,
        cfg.seed
    );
    match cfg.simulator {
        Simulator::Packet => {
            let out = simulate(topo, &flows, SimOptions::from_config(cfg))?;
            let d = &out.diagnostics;
            if d.conservation_violations > 0 {
                return Err(RunError::Invariant(format!(
                    "{} byte-conservation violations",
                    d.conservation_violations
                )));
            }
            Ok(RunOutput {
                config: cfg.clone(),
                flows,
                report: out.report,
                diagnostics: Some(out.diagnostics),
            })
        }
        Simulator::Flow => {
            if cfg.multipath.subflows > 1 {
                log::warn!("flow-level simulator ignores multipath.subflows");
            }
            let mut opts = FlowLevelOptions::new(cfg.protocol);
            opts.early_termination = cfg.pdq.early_termination;
            opts.horizon = SimTime::from_secs_f64(cfg.duration_ms * 1e-3);
            let records = flow_level_simulate(topo, &flows, &opts);
            let mut summary = Summary::from_flows(&records);
            summary.protocol = cfg.protocol.name().to_string();
            summary.simulator = "flow".to_string();
            Ok(RunOutput {
                config: cfg.clone(),
                flows,
                report: MetricsReport { flows: records, summary, ..MetricsReport::default() },
                diagnostics: None,
            })
        }
    }
}

/// Writes the report files and the effective config into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<(), RunError> {
    write_report(&out.report, dir)?;
    let path = dir.join(CONFIG_ECHO);
    std::fs::write(&path, out.config.to_toml()).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}
