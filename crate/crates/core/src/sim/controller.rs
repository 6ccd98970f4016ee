use crate::baselines::d3::{D3LinkState, D3Request};
use crate::baselines::rcp::RcpLinkState;
use crate::config::{PdqConfig, Protocol};
use crate::ids::{FlowId, NodeId};
use crate::pdq::header::SchedulingHeader;
use crate::pdq::switch::SwitchLinkState;
use crate::time::SimTime;

/// Rate-allocation state at one link egress, for whichever protocol runs.
#[derive(Clone, Debug)]
pub enum Controller {
    Pdq(SwitchLinkState),
    Rcp(RcpLinkState),
    D3(D3LinkState),
}

impl Controller {
    pub fn new(protocol: Protocol, owner: NodeId, rate: f64, pdq: &PdqConfig) -> Controller {
        let rtt = pdq.initial_rtt();
        match protocol {
            Protocol::Pdq => Controller::Pdq(SwitchLinkState::new(owner, rate, pdq.switch_params())),
            Protocol::Rcp => {
                let mut s = RcpLinkState::new(rate, rtt);
                s.rate_controller = pdq.rate_controller;
                Controller::Rcp(s)
            }
            Protocol::D3 => Controller::D3(D3LinkState::new(rate, rtt)),
        }
    }

    /// A forward SYN, DATA or PROBE leaving through this link.
    pub fn on_forward(&mut self, h: &mut SchedulingHeader, req: Option<&D3Request>, flow: FlowId, now: SimTime) {
        match self {
            Controller::Pdq(s) => {
                s.on_data(h, flow, now);
            }
            Controller::Rcp(s) => s.on_forward(h, flow),
            Controller::D3(s) => s.on_forward(h, req, flow),
        }
    }

    /// An ACK of a flow whose forward path leaves through this link.
    pub fn on_ack(&mut self, h: &mut SchedulingHeader, flow: FlowId, now: SimTime) {
        match self {
            Controller::Pdq(s) => s.on_ack(h, flow, now),
            Controller::Rcp(s) => s.on_ack(h),
            Controller::D3(s) => s.on_ack(h, flow),
        }
    }

    pub fn on_term(&mut self, flow: FlowId) {
        match self {
            Controller::Pdq(s) => s.on_term(flow),
            Controller::Rcp(s) => s.on_term(flow),
            Controller::D3(s) => s.on_term(flow),
        }
    }

    /// Periodic capacity update; `arrival_rate` is the measured input rate
    /// since the previous epoch.
    pub fn epoch(&mut self, queue_bytes: u64, arrival_rate: f64) {
        match self {
            Controller::Pdq(s) => {
                s.rate_controller_epoch(queue_bytes);
            }
            Controller::Rcp(s) => s.epoch(queue_bytes),
            Controller::D3(s) => s.epoch(queue_bytes, arrival_rate),
        }
    }

    pub fn epoch_interval(&self) -> SimTime {
        match self {
            Controller::Pdq(s) => s.epoch_interval(),
            Controller::Rcp(s) => s.epoch_interval(),
            Controller::D3(s) => s.epoch_interval(),
        }
    }

    pub fn rtt_avg(&self) -> SimTime {
        match self {
            Controller::Pdq(s) => s.rtt_avg,
            Controller::Rcp(s) => s.rtt_avg,
            Controller::D3(s) => s.rtt_avg,
        }
    }

    /// No flow state held.
    pub fn is_idle(&self) -> bool {
        match self {
            Controller::Pdq(s) => s.flows().is_empty() && s.fallback_count() == 0,
            Controller::Rcp(s) => s.flow_count() == 0,
            Controller::D3(s) => s.flow_count() == 0,
        }
    }

    pub fn as_pdq(&self) -> Option<&SwitchLinkState> {
        match self {
            Controller::Pdq(s) => Some(s),
            _ => None,
        }
    }
}
