//! Comparison protocols running on the same engine: RCP with exact flow
//! counting and a simplified D3.

pub mod d3;
pub mod rcp;

pub use d3::{d3_allocate, D3LinkState, D3Request};
pub use rcp::RcpLinkState;

use crate::time::SimTime;

/// Effective capacity after draining `queue_bytes` over two RTTs.
pub(crate) fn queue_drain_capacity(capacity: f64, queue_bytes: u64, rtt: SimTime) -> f64 {
    (capacity - queue_bytes as f64 * 8.0 / (2.0 * rtt.as_secs_f64())).max(0.0)
}

pub(crate) fn ewma(avg: SimTime, sample: SimTime, gain: f64) -> SimTime {
    SimTime::from_secs_f64(avg.as_secs_f64() * (1.0 - gain) + sample.as_secs_f64() * gain)
}
