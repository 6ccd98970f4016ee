use std::collections::BTreeSet;

use crate::baselines::{ewma, queue_drain_capacity};
use crate::ids::FlowId;
use crate::pdq::header::SchedulingHeader;
use crate::time::SimTime;

/// RCP with an exact per-link flow count: every flow gets the same share.
#[derive(Clone, Debug)]
pub struct RcpLinkState {
    pub link_capacity: f64,
    pub effective_capacity: f64,
    flows: BTreeSet<FlowId>,
    pub rtt_avg: SimTime,
    pub rate_controller: bool,
}

impl RcpLinkState {
    pub fn new(link_capacity: f64, initial_rtt: SimTime) -> Self {
        RcpLinkState {
            link_capacity,
            effective_capacity: link_capacity,
            flows: BTreeSet::new(),
            rtt_avg: initial_rtt,
            rate_controller: true,
        }
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn fair_rate(&self) -> f64 {
        self.effective_capacity / self.flows.len().max(1) as f64
    }

    /// Forward packet: registers the flow and stamps the fair rate.
    pub fn on_forward(&mut self, h: &mut SchedulingHeader, flow: FlowId) {
        self.flows.insert(flow);
        h.rate = h.rate.min(self.fair_rate());
        h.pause_by = None;
    }

    pub fn on_ack(&mut self, h: &SchedulingHeader) {
        if h.rtt > SimTime::ZERO {
            self.rtt_avg = ewma(self.rtt_avg, h.rtt, 0.125);
        }
    }

    pub fn on_term(&mut self, flow: FlowId) {
        self.flows.remove(&flow);
    }

    pub fn epoch(&mut self, queue_bytes: u64) {
        self.effective_capacity = if self.rate_controller {
            queue_drain_capacity(self.link_capacity, queue_bytes, self.rtt_avg)
        } else {
            self.link_capacity
        };
    }

    pub fn epoch_interval(&self) -> SimTime {
        self.rtt_avg.mul_f64(2.0).max(SimTime::from_micros(1))
    }
}

/// End-to-end RCP rate: the smallest fair share on the path.
pub fn path_rate(links: &[&RcpLinkState]) -> f64 {
    links.iter().map(|l| l.fair_rate()).fold(f64::INFINITY, f64::min)
}
