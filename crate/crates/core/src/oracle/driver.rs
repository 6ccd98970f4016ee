//! Equilibrium classification for a stable flow set when every link
//! carries one flow at a time.

use std::cmp::Ordering;

use crate::ids::LinkId;
use crate::pdq::criticality::{compare_criticality, FlowSummary};

#[derive(Clone, Debug, PartialEq)]
pub struct CompetingFlow {
    pub summary: FlowSummary,
    pub links: Vec<LinkId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DriverAnalysis {
    /// Parallel to the input.
    pub drivers: Vec<bool>,
    /// How many more critical flows share a link with each flow.
    pub precedential_counts: Vec<usize>,
    pub p_max: usize,
}

impl DriverAnalysis {
    pub fn driver_set(&self) -> Vec<usize> {
        (0..self.drivers.len()).filter(|&i| self.drivers[i]).collect()
    }
}

fn competing(a: &CompetingFlow, b: &CompetingFlow) -> bool {
    a.links.iter().any(|l| b.links.contains(l))
}

/// A flow is a driver iff no more critical competitor is a driver; deciding
/// flows from most to least critical reaches the unique fixed point.
pub fn driver_analysis(flows: &[CompetingFlow]) -> DriverAnalysis {
    driver_analysis_by(flows, |a, b| compare_criticality(&a.summary, &b.summary))
}

pub fn driver_analysis_by<F>(flows: &[CompetingFlow], cmp: F) -> DriverAnalysis
where
    F: Fn(&CompetingFlow, &CompetingFlow) -> Ordering,
{
    let n = flows.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp(&flows[a], &flows[b]));
    let mut drivers = vec![false; n];
    let mut precedential_counts = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        let mut blocked = false;
        for &j in &order[..rank] {
            if competing(&flows[i], &flows[j]) {
                precedential_counts[i] += 1;
                blocked |= drivers[j];
            }
        }
        drivers[i] = !blocked;
    }
    let p_max = precedential_counts.iter().copied().max().unwrap_or(0);
    DriverAnalysis {
        drivers,
        precedential_counts,
        p_max,
    }
}
