use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{FlowId, NodeId};
use crate::pdq::criticality::{compare_criticality, FlowSummary};
use crate::pdq::header::SchedulingHeader;
use crate::time::SimTime;

/// Rates at or below this many bits per second count as zero.
pub const RATE_EPSILON: f64 = 1.0;

/// How many flows a link's list may remember.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListCapacity {
    /// Twice the number of sending flows, at least two.
    #[default]
    TwoKappa,
    /// The number of sending flows, at least one.
    Kappa,
    /// Only the hard cap applies.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchParams {
    pub capacity: ListCapacity,
    /// Hard cap M on stored flows.
    pub max_flows: usize,
    /// Early Start threshold in RTTs; 0 disables Early Start.
    pub early_start_k: f64,
    /// Suppressed probing factor; 0 disables it.
    pub probe_x: f64,
    pub dampening: bool,
    /// Dampening window in multiples of the link's average RTT.
    pub dampening_rtts: f64,
    /// Aggregate PDQ rate; `None` means the link rate.
    pub r_pdq: Option<f64>,
    pub rate_controller: bool,
    /// Starting value of the link's RTT average.
    pub initial_rtt: SimTime,
    pub rtt_gain: f64,
}

impl Default for SwitchParams {
    fn default() -> Self {
        SwitchParams {
            capacity: ListCapacity::TwoKappa,
            max_flows: 1000,
            early_start_k: 2.0,
            probe_x: 0.2,
            dampening: true,
            dampening_rtts: 1.0,
            r_pdq: None,
            rate_controller: true,
            initial_rtt: SimTime::from_micros(150),
            rtt_gain: 0.125,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchFlowEntry {
    pub flow: FlowId,
    pub rate: f64,
    pub pause_by: Option<NodeId>,
    pub deadline: Option<SimTime>,
    pub expected_tx_time: SimTime,
    pub rtt: SimTime,
    /// When this switch last started pausing the flow, if it currently does.
    pub paused_since: Option<SimTime>,
}

impl SwitchFlowEntry {
    pub fn summary(&self) -> FlowSummary {
        FlowSummary {
            deadline: self.deadline,
            expected_tx_time: self.expected_tx_time,
            id: self.flow,
        }
    }

    pub fn is_sending(&self) -> bool {
        self.rate > RATE_EPSILON
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchDiagnostics {
    pub malformed_headers: u64,
    pub evictions: u64,
    pub dampened: u64,
    pub fallback_assignments: u64,
}

/// What switch processing did to a forward packet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DataVerdict {
    /// Paused elsewhere; local state dropped, header untouched.
    PausedElsewhere,
    /// Not stored; handled by the fallback fair-share controller.
    Fallback(f64),
    Accepted(f64),
    Paused,
}

/// Per-link PDQ state at a switch egress port.
#[derive(Clone, Debug)]
pub struct SwitchLinkState {
    pub switch: NodeId,
    pub link_rate: f64,
    pub params: SwitchParams,
    flows: Vec<SwitchFlowEntry>,
    /// Flows outside the list that are handled by fair sharing, keyed by id.
    fallback: BTreeMap<FlowId, FlowSummary>,
    /// Rate controller variable C.
    pub rate_ctrl: f64,
    pub rtt_avg: SimTime,
    last_nonsending_accept: Option<(SimTime, FlowId)>,
    pub diagnostics: SwitchDiagnostics,
}

impl SwitchLinkState {
    pub fn new(switch: NodeId, link_rate: f64, params: SwitchParams) -> Self {
        let r_pdq = params.r_pdq.unwrap_or(link_rate).min(link_rate);
        SwitchLinkState {
            switch,
            link_rate,
            rtt_avg: params.initial_rtt,
            params,
            flows: Vec::new(),
            fallback: BTreeMap::new(),
            rate_ctrl: r_pdq,
            last_nonsending_accept: None,
            diagnostics: SwitchDiagnostics::default(),
        }
    }

    pub fn r_pdq(&self) -> f64 {
        self.params.r_pdq.unwrap_or(self.link_rate).min(self.link_rate)
    }

    pub fn flows(&self) -> &[SwitchFlowEntry] {
        &self.flows
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback.len()
    }

    pub fn index_of(&self, flow: FlowId) -> Option<usize> {
        self.flows.iter().position(|e| e.flow == flow)
    }

    pub fn sending_count(&self) -> usize {
        self.flows.iter().filter(|e| e.is_sending()).count()
    }

    /// Current list capacity.
    pub fn capacity(&self) -> usize {
        let kappa = self.sending_count();
        let c = match self.params.capacity {
            ListCapacity::TwoKappa => (2 * kappa).max(2),
            ListCapacity::Kappa => kappa.max(1),
            ListCapacity::All => usize::MAX,
        };
        c.min(self.params.max_flows)
    }

    /// Bandwidth left for the flow at list index `j` (Early Start aware).
    pub fn availbw(&self, j: usize) -> f64 {
        let k = self.params.early_start_k;
        let c = self.rate_ctrl;
        let mut x = 0.0;
        let mut a = 0.0;
        for e in &self.flows[..j] {
            let ratio = e.expected_tx_time.as_secs_f64() / e.rtt.as_secs_f64().max(1e-12);
            if ratio < k && x < k {
                x += ratio;
            } else {
                a += e.rate;
            }
            if a >= c {
                return 0.0;
            }
        }
        c - a
    }

    /// Leftover capacity split evenly across fallback flows. Listed flows
    /// outrank every fallback flow, so nothing is left while one of them is
    /// held paused here.
    pub fn fallback_rate(&self) -> f64 {
        if self.flows.iter().any(|e| e.pause_by == Some(self.switch) && !e.is_sending()) {
            return 0.0;
        }
        let used: f64 = self.flows.iter().map(|e| e.rate).sum();
        let left = (self.rate_ctrl - used).max(0.0);
        left / self.fallback.len().max(1) as f64
    }

    fn position_for(&self, s: &FlowSummary) -> usize {
        self.flows
            .partition_point(|e| compare_criticality(&e.summary(), s) == std::cmp::Ordering::Less)
    }

    fn remove(&mut self, flow: FlowId) {
        if let Some(i) = self.index_of(flow) {
            self.flows.remove(i);
        }
        self.fallback.remove(&flow);
    }

    fn set_pause(&mut self, i: usize, pause_by: Option<NodeId>, now: SimTime) {
        let e = &mut self.flows[i];
        if pause_by == Some(self.switch) {
            if e.paused_since.is_none() || e.pause_by != Some(self.switch) {
                e.paused_since = Some(now);
            }
        } else {
            e.paused_since = None;
        }
        e.pause_by = pause_by;
    }

    fn pause_header(&self, h: &mut SchedulingHeader) {
        h.pause_by = Some(self.switch);
        h.rate = 0.0;
    }

    /// Flow controller for a forward (data, SYN or probe) packet.
    pub fn on_data(&mut self, h: &mut SchedulingHeader, flow: FlowId, now: SimTime) -> DataVerdict {
        if let Some(p) = h.pause_by {
            if p != self.switch {
                self.remove(flow);
                return DataVerdict::PausedElsewhere;
            }
        }
        if !(h.rate >= 0.0) {
            self.diagnostics.malformed_headers += 1;
            self.pause_header(h);
            return DataVerdict::Paused;
        }
        let summary = FlowSummary {
            deadline: h.deadline,
            expected_tx_time: h.expected_tx_time,
            id: flow,
        };
        let i = match self.index_of(flow) {
            Some(i) => {
                // refresh <D, T, RTT> and keep the list sorted
                let mut e = self.flows.remove(i);
                e.deadline = h.deadline;
                e.expected_tx_time = h.expected_tx_time;
                e.rtt = h.rtt;
                let pos = self.position_for(&e.summary());
                self.flows.insert(pos, e);
                pos
            }
            None => {
                let capacity = self.capacity();
                let pos = self.position_for(&summary);
                // the list may exceed a shrunken capacity; only a position that
                // survives trimming counts as outranking the least critical entry
                if pos < capacity {
                    self.fallback.remove(&flow);
                    self.flows.insert(
                        pos,
                        SwitchFlowEntry {
                            flow,
                            rate: 0.0,
                            // a newly seen flow is not sending yet
                            pause_by: Some(self.switch),
                            deadline: h.deadline,
                            expected_tx_time: h.expected_tx_time,
                            rtt: h.rtt,
                            paused_since: Some(now),
                        },
                    );
                    while self.flows.len() > capacity {
                        self.flows.pop();
                        self.diagnostics.evictions += 1;
                    }
                    pos
                } else {
                    self.fallback.insert(flow, summary);
                    self.diagnostics.fallback_assignments += 1;
                    let rate = self.fallback_rate();
                    h.rate = h.rate.min(rate);
                    if h.rate <= RATE_EPSILON {
                        self.pause_header(h);
                        return DataVerdict::Paused;
                    }
                    return DataVerdict::Fallback(h.rate);
                }
            }
        };

        let w = self.availbw(i).min(h.rate);
        if w > RATE_EPSILON {
            let non_sending = self.flows[i].pause_by.is_some();
            let dampened = non_sending
                && self.params.dampening
                && self.last_nonsending_accept.is_some_and(|(t, f)| {
                    f != flow && now < t + self.rtt_avg.mul_f64(self.params.dampening_rtts)
                });
            if dampened {
                self.diagnostics.dampened += 1;
                self.pause_header(h);
                self.set_pause(i, Some(self.switch), now);
                DataVerdict::Paused
            } else {
                // re-accepting the flow that opened the window does not extend it
                if non_sending && self.last_nonsending_accept.is_none_or(|(_, f)| f != flow) {
                    self.last_nonsending_accept = Some((now, flow));
                }
                // reserve a larger grant until the ACK reports the end-to-end
                // rate, so flows arriving within that RTT see it as taken
                self.flows[i].rate = self.flows[i].rate.max(w);
                self.flows[i].paused_since = None;
                h.pause_by = None;
                h.rate = w;
                DataVerdict::Accepted(w)
            }
        } else {
            self.pause_header(h);
            self.set_pause(i, Some(self.switch), now);
            DataVerdict::Paused
        }
    }

    /// Flow controller for a reverse (ACK) packet of a flow whose forward
    /// path uses this link.
    pub fn on_ack(&mut self, h: &mut SchedulingHeader, flow: FlowId, now: SimTime) {
        if h.rtt > SimTime::ZERO {
            let g = self.params.rtt_gain;
            let avg = self.rtt_avg.as_secs_f64() * (1.0 - g) + h.rtt.as_secs_f64() * g;
            self.rtt_avg = SimTime::from_secs_f64(avg);
        }
        if let Some(p) = h.pause_by {
            if p != self.switch {
                self.remove(flow);
            }
            h.rate = 0.0;
        }
        let x = self.params.probe_x;
        if let Some(i) = self.index_of(flow) {
            self.set_pause(i, h.pause_by, now);
            h.inter_probe = h.inter_probe.max(x * i as f64);
            self.flows[i].rate = h.rate;
        } else if h.pause_by.is_some() && self.fallback.contains_key(&flow) {
            // paused flows outside the list probe as if queued behind it
            let s = self.fallback[&flow];
            let rank = self
                .fallback
                .values()
                .filter(|o| compare_criticality(o, &s) == std::cmp::Ordering::Less)
                .count();
            h.inter_probe = h.inter_probe.max(x * (self.flows.len() + rank) as f64);
        }
    }

    /// TERM: forget the flow.
    pub fn on_term(&mut self, flow: FlowId) {
        self.remove(flow);
    }

    /// Rate controller update; `queue_bytes` is the instantaneous backlog.
    pub fn rate_controller_epoch(&mut self, queue_bytes: u64) -> f64 {
        let r = self.r_pdq();
        if self.params.rate_controller {
            let drain = queue_bytes as f64 * 8.0 / (2.0 * self.rtt_avg.as_secs_f64());
            self.rate_ctrl = (r - drain).max(0.0);
        } else {
            self.rate_ctrl = r;
        }
        self.rate_ctrl
    }

    /// Time until the next rate controller update.
    pub fn epoch_interval(&self) -> SimTime {
        self.rtt_avg.mul_f64(2.0).max(SimTime::from_micros(1))
    }

    pub fn is_sorted(&self) -> bool {
        self.flows.windows(2).all(|w| {
            compare_criticality(&w[0].summary(), &w[1].summary()) == std::cmp::Ordering::Less
        })
    }
}
