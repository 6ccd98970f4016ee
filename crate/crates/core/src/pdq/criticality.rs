use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ids::FlowId;
use crate::time::SimTime;

/// What the comparator needs to know about a flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowSummary {
    pub deadline: Option<SimTime>,
    pub expected_tx_time: SimTime,
    pub id: FlowId,
}

/// `Less` means `a` is more critical than `b`.
///
/// Earliest deadline first; any deadline beats none; then the smaller
/// expected transmission time; then the smaller flow id.
pub fn compare_criticality(a: &FlowSummary, b: &FlowSummary) -> Ordering {
    let by_deadline = match (a.deadline, b.deadline) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_deadline
        .then(a.expected_tx_time.cmp(&b.expected_tx_time))
        .then(a.id.cmp(&b.id))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalityMode {
    /// Expected transmission time from the true remaining size.
    #[default]
    Exact,
    /// Size estimated from bytes already sent, refreshed every 50 KB.
    Estimated,
    /// A random expected transmission time drawn once at flow start.
    Random,
}

pub const ESTIMATE_STEP_BYTES: u64 = 50_000;

/// Estimated expected transmission time for a flow that has sent `sent`
/// bytes: the size guess is the next 50 KB boundary above what has been sent.
pub fn criticality_from_sent_bytes(sent: u64, max_rate: f64) -> SimTime {
    let estimate = (sent / ESTIMATE_STEP_BYTES + 1) * ESTIMATE_STEP_BYTES;
    SimTime::from_secs_f64(estimate as f64 * 8.0 / max_rate)
}

/// Draw for [`CriticalityMode::Random`], uniform over 1 ms to 100 ms so
/// that random values rarely look nearly completed to Early Start.
pub fn random_criticality<R: Rng + ?Sized>(rng: &mut R) -> SimTime {
    SimTime::from_nanos(rng.random_range(1_000_000..100_000_000))
}

/// Ages an expected transmission time by `2^(alpha * waiting / 100 ms)`.
pub fn aging_adjust(t: SimTime, waiting: SimTime, alpha: f64) -> SimTime {
    let exponent = alpha * waiting.as_secs_f64() / 0.1;
    if exponent == 0.0 {
        return t;
    }
    SimTime::from_secs_f64(t.as_secs_f64() / 2f64.powf(exponent))
}
