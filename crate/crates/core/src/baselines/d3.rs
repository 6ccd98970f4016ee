use std::collections::BTreeMap;

use crate::baselines::ewma;
use crate::ids::FlowId;
use crate::pdq::header::SchedulingHeader;
use crate::time::SimTime;

/// Rate request piggybacked on a forward packet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct D3Request {
    /// Desired rate in bits per second: remaining bytes over time to
    /// deadline, or zero for flows without a deadline.
    pub desired: f64,
    /// Only packets flagged as requests (once per RTT) reallocate.
    pub is_request: bool,
}

/// Non-negative fair share left after all desires are met.
pub fn fair_share(capacity: f64, total_desired: f64, n: usize) -> f64 {
    ((capacity - total_desired) / n.max(1) as f64).max(0.0)
}

/// Grant for one request given what is left on the link.
pub fn grant(left: f64, desired: f64, fs: f64) -> f64 {
    let left = left.max(0.0);
    if left >= desired {
        left.min(desired + fs)
    } else {
        left
    }
}

/// First-come first-reserve allocation of `capacity` to requests in
/// arrival order.
pub fn d3_allocate(capacity: f64, desired: &[f64]) -> Vec<f64> {
    let fs = fair_share(capacity, desired.iter().sum(), desired.len());
    let mut left = capacity;
    desired
        .iter()
        .map(|&d| {
            let g = grant(left, d, fs);
            left -= g;
            g
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Reservation {
    grant: f64,
    desired: f64,
}

/// Per-link state of the simplified D3 router.
#[derive(Clone, Debug)]
pub struct D3LinkState {
    pub link_capacity: f64,
    pub effective_capacity: f64,
    pub alpha: f64,
    pub beta: f64,
    flows: BTreeMap<FlowId, Reservation>,
    allocated: f64,
    demand: f64,
    pub rtt_avg: SimTime,
}

impl D3LinkState {
    pub fn new(link_capacity: f64, initial_rtt: SimTime) -> Self {
        D3LinkState {
            link_capacity,
            effective_capacity: link_capacity,
            alpha: 0.1,
            beta: 1.0,
            flows: BTreeMap::new(),
            allocated: 0.0,
            demand: 0.0,
            rtt_avg: initial_rtt,
        }
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn allocated(&self) -> f64 {
        self.allocated
    }

    pub fn grant_of(&self, flow: FlowId) -> Option<f64> {
        self.flows.get(&flow).map(|r| r.grant)
    }

    pub fn fair_share(&self) -> f64 {
        fair_share(self.effective_capacity, self.demand, self.flows.len())
    }

    pub fn on_forward(&mut self, h: &mut SchedulingHeader, req: Option<&D3Request>, flow: FlowId) {
        h.pause_by = None;
        let is_new = !self.flows.contains_key(&flow);
        let mut r = self.flows.remove(&flow).unwrap_or_default();
        if is_new || req.is_some_and(|q| q.is_request) {
            self.allocated -= r.grant;
            self.demand -= r.desired;
            let desired = req.map_or(0.0, |q| q.desired.max(0.0));
            self.demand += desired;
            let fs = fair_share(self.effective_capacity, self.demand, self.flows.len() + 1);
            r = Reservation {
                grant: grant(self.effective_capacity - self.allocated, desired, fs),
                desired,
            };
            self.allocated += r.grant;
        }
        h.rate = h.rate.min(r.grant);
        self.flows.insert(flow, r);
        self.clean_rounding();
    }

    /// Returns the part of a grant not usable end to end.
    pub fn on_ack(&mut self, h: &SchedulingHeader, flow: FlowId) {
        if h.rtt > SimTime::ZERO {
            self.rtt_avg = ewma(self.rtt_avg, h.rtt, 0.125);
        }
        if let Some(r) = self.flows.get_mut(&flow) {
            if h.rate < r.grant {
                self.allocated -= r.grant - h.rate;
                r.grant = h.rate;
            }
        }
        self.clean_rounding();
    }

    pub fn on_term(&mut self, flow: FlowId) {
        if let Some(r) = self.flows.remove(&flow) {
            self.allocated -= r.grant;
            self.demand -= r.desired;
        }
        self.clean_rounding();
    }

    fn clean_rounding(&mut self) {
        if self.flows.is_empty() || self.allocated < 0.0 {
            self.allocated = self.allocated.max(0.0);
        }
        if self.flows.is_empty() || self.demand < 0.0 {
            self.demand = self.demand.max(0.0);
        }
        if self.flows.is_empty() {
            self.allocated = 0.0;
            self.demand = 0.0;
        }
    }

    /// Capacity adaptation once per epoch: `arrival_rate` is the measured
    /// input rate over the last epoch.
    pub fn epoch(&mut self, queue_bytes: u64, arrival_rate: f64) {
        let c = self.link_capacity;
        let q_bits = queue_bytes as f64 * 8.0;
        let next = c + self.alpha * (c - arrival_rate) - self.beta * q_bits / self.rtt_avg.as_secs_f64();
        self.effective_capacity = next.clamp(0.0, c);
    }

    pub fn epoch_interval(&self) -> SimTime {
        self.rtt_avg.max(SimTime::from_micros(1))
    }
}
