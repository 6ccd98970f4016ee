//! Preemptive distributed flow scheduling: switch and sender algorithms,
//! baselines, oracles and a discrete-event network simulator.

pub mod baselines;
pub mod config;
pub mod engine;
pub mod ids;
pub mod metrics;
pub mod mpdq;
pub mod oracle;
pub mod pdq;
pub mod runner;
pub mod sim;
pub mod time;
pub mod topology;
pub mod workload;

pub use config::{Protocol, ScenarioConfig, Simulator};
pub use ids::{FlowId, LinkId, NodeId};
pub use time::SimTime;
