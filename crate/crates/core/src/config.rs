//! Scenario configuration: a TOML document with `[topology]`, `[workload]`,
//! `[pdq]`, `[multipath]` and `[metrics]` sections plus top-level keys.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::link::LinkParams;
use crate::pdq::criticality::CriticalityMode;
use crate::pdq::switch::{ListCapacity, SwitchParams};
use crate::time::SimTime;
use crate::topology::{
    build_fat_tree, build_parallel_paths, build_single_bottleneck, build_single_rooted_tree, Topology, TopologyError,
};
use crate::workload::WorkloadConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[default]
    Pdq,
    Rcp,
    D3,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Pdq => "pdq",
            Protocol::Rcp => "rcp",
            Protocol::D3 => "d3",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Simulator {
    #[default]
    Packet,
    Flow,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    SingleBottleneck,
    #[default]
    Tree,
    FatTree,
    ParallelPaths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    /// Senders on the single-bottleneck topology.
    pub senders: usize,
    /// Fat-tree arity.
    pub k: usize,
    pub paths: usize,
    pub link_rate_gbps: f64,
    pub propagation_us: f64,
    pub processing_us: f64,
    pub queue_bytes: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            kind: TopologyKind::Tree,
            senders: 5,
            k: 4,
            paths: 4,
            link_rate_gbps: 1.0,
            propagation_us: 0.1,
            processing_us: 25.0,
            queue_bytes: 4_000_000,
        }
    }
}

impl TopologyConfig {
    pub fn link_params(&self) -> LinkParams {
        LinkParams {
            rate_bps: self.link_rate_gbps * 1e9,
            propagation: SimTime::from_micros_f64(self.propagation_us),
            processing: SimTime::from_micros_f64(self.processing_us),
            queue_capacity: self.queue_bytes,
        }
    }

    pub fn build(&self) -> Result<Topology, TopologyError> {
        let p = self.link_params();
        match self.kind {
            TopologyKind::SingleBottleneck => build_single_bottleneck(self.senders, p),
            TopologyKind::Tree => Ok(build_single_rooted_tree(p)),
            TopologyKind::FatTree => build_fat_tree(self.k, p),
            TopologyKind::ParallelPaths => build_parallel_paths(self.paths, p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdqConfig {
    pub capacity: ListCapacity,
    pub max_flows: usize,
    /// Early Start threshold K in RTTs; 0 turns Early Start off.
    pub early_start_k: f64,
    /// Suppressed probing factor X; 0 turns it off.
    pub probe_x: f64,
    pub dampening: bool,
    pub dampening_rtts: f64,
    pub rate_controller: bool,
    pub early_termination: bool,
    pub aging_alpha: f64,
    pub criticality: CriticalityMode,
    /// Starting RTT estimate for senders and switches.
    pub initial_rtt_us: f64,
    /// Retransmission timeout in sender RTTs.
    pub rto_rtts: f64,
}

impl Default for PdqConfig {
    fn default() -> Self {
        let sw = SwitchParams::default();
        PdqConfig {
            capacity: sw.capacity,
            max_flows: sw.max_flows,
            early_start_k: sw.early_start_k,
            probe_x: sw.probe_x,
            dampening: sw.dampening,
            dampening_rtts: sw.dampening_rtts,
            rate_controller: sw.rate_controller,
            early_termination: true,
            aging_alpha: 0.0,
            criticality: CriticalityMode::Exact,
            initial_rtt_us: sw.initial_rtt.as_micros_f64(),
            rto_rtts: 3.0,
        }
    }
}

impl PdqConfig {
    pub fn initial_rtt(&self) -> SimTime {
        SimTime::from_micros_f64(self.initial_rtt_us)
    }

    pub fn switch_params(&self) -> SwitchParams {
        SwitchParams {
            capacity: self.capacity,
            max_flows: self.max_flows,
            early_start_k: self.early_start_k,
            probe_x: self.probe_x,
            dampening: self.dampening,
            dampening_rtts: self.dampening_rtts,
            rate_controller: self.rate_controller,
            initial_rtt: self.initial_rtt(),
            ..SwitchParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultipathConfig {
    pub subflows: usize,
    pub shift_period_rtts: f64,
}

impl Default for MultipathConfig {
    fn default() -> Self {
        MultipathConfig { subflows: 1, shift_period_rtts: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub bin_us: f64,
    pub queue_sample_us: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { bin_us: 100.0, queue_sample_us: 100.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub protocol: Protocol,
    pub simulator: Simulator,
    /// Independent drop probability per packet per direction on the
    /// bottleneck-facing hops.
    pub loss_rate: f64,
    /// Simulation horizon.
    pub duration_ms: f64,
    pub output_dir: Option<String>,
    pub topology: TopologyConfig,
    pub workload: WorkloadConfig,
    pub pdq: PdqConfig,
    pub multipath: MultipathConfig,
    pub metrics: MetricsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            protocol: Protocol::Pdq,
            simulator: Simulator::Packet,
            loss_rate: 0.0,
            duration_ms: 1000.0,
            output_dir: None,
            topology: TopologyConfig::default(),
            workload: WorkloadConfig::default(),
            pdq: PdqConfig::default(),
            multipath: MultipathConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad override `{0}`: expected key=value")]
    OverrideSyntax(String),
    #[error("override `{key}`: {reason}")]
    Override { key: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Parses a right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c = value` inside a table, creating intermediate tables.
pub fn set_path(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::OverrideSyntax(key.to_string()));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::Override {
            key: key.to_string(),
            reason: format!("`{p}` is not a section"),
        })?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides.
    pub fn from_toml_with(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            // direct parsing keeps line numbers in error messages
            let cfg: ScenarioConfig = toml::from_str(text)?;
            cfg.validate()?;
            return Ok(cfg);
        }
        let mut table: toml::Table = text.parse()?;
        for (k, v) in overrides {
            set_path(&mut table, k, v)?;
        }
        let cfg: ScenarioConfig = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_with(&text, overrides)
    }

    /// Applies overrides to an already parsed config.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        Self::from_toml_with(&self.to_toml(), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(ConfigError::Invalid(format!("loss_rate {} is outside [0, 1)", self.loss_rate)));
        }
        positive("duration_ms", self.duration_ms)?;
        positive("topology.link_rate_gbps", self.topology.link_rate_gbps)?;
        positive("topology.processing_us", self.topology.processing_us)?;
        positive("topology.propagation_us", self.topology.propagation_us)?;
        positive("pdq.initial_rtt_us", self.pdq.initial_rtt_us)?;
        positive("pdq.rto_rtts", self.pdq.rto_rtts)?;
        positive("pdq.dampening_rtts", self.pdq.dampening_rtts)?;
        positive("multipath.shift_period_rtts", self.multipath.shift_period_rtts)?;
        positive("metrics.bin_us", self.metrics.bin_us)?;
        positive("metrics.queue_sample_us", self.metrics.queue_sample_us)?;
        if self.topology.queue_bytes < 1500 {
            return Err(ConfigError::Invalid("topology.queue_bytes must hold one packet".into()));
        }
        if self.multipath.subflows == 0 || self.multipath.subflows > 255 {
            return Err(ConfigError::Invalid("multipath.subflows must be in 1..=255".into()));
        }
        if self.pdq.early_start_k < 0.0 || self.pdq.probe_x < 0.0 || self.pdq.aging_alpha < 0.0 {
            return Err(ConfigError::Invalid("pdq.early_start_k, probe_x and aging_alpha must be non-negative".into()));
        }
        if self.pdq.max_flows == 0 {
            return Err(ConfigError::Invalid("pdq.max_flows must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::Pattern;

    #[test]
    fn defaults_round_trip() {
        let cfg = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn sections_and_overrides() {
        let text = r#"
            seed = 3
            protocol = "rcp"
            [topology]
            kind = "single_bottleneck"
            senders = 5
            [workload]
            pattern = "scenario1"
            flows = 5
        "#;
        let over = vec![
            ("seed".to_string(), "7".to_string()),
            ("pdq.probe_x".to_string(), "0.5".to_string()),
            ("protocol".to_string(), "d3".to_string()),
            ("workload.pattern".to_string(), "stride".to_string()),
        ];
        let cfg = ScenarioConfig::from_toml_with(text, &over).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.protocol, Protocol::D3);
        assert_eq!(cfg.pdq.probe_x, 0.5);
        assert_eq!(cfg.workload.pattern, Pattern::Stride);
        assert_eq!(cfg.topology.build().unwrap().hosts().len(), 6);
    }

    #[test]
    fn invalid_protocol_is_rejected() {
        let err = ScenarioConfig::from_toml("protocol = \"tcp\"").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert!(ScenarioConfig::from_toml("[pdq]\nprobe_y = 1").is_err());
        assert!(matches!(
            ScenarioConfig::from_toml("loss_rate = 1.0"),
            Err(ConfigError::Invalid(_))
        ));
        let mut t = toml::Table::new();
        assert!(set_path(&mut t, "a..b", "1").is_err());
        set_path(&mut t, "x", "1").unwrap();
        assert!(set_path(&mut t, "x.y", "1").is_err());
    }
}
