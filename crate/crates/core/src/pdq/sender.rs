use crate::ids::{FlowId, NodeId};
use crate::pdq::criticality::{aging_adjust, criticality_from_sent_bytes, CriticalityMode};
use crate::pdq::header::SchedulingHeader;
use crate::pdq::switch::RATE_EPSILON;
use crate::time::SimTime;

/// A sender's live protocol variables for one (sub)flow.
#[derive(Clone, Debug, PartialEq)]
pub struct SenderFlowState {
    pub flow: FlowId,
    pub size: u64,
    /// Payload bytes not yet handed to the network.
    pub remaining: u64,
    pub max_rate: f64,
    pub rate: f64,
    pub pause_by: Option<NodeId>,
    pub deadline: Option<SimTime>,
    pub expected_tx_time: SimTime,
    /// `None` until a switch has suggested a value; treated as 1.
    pub inter_probe: Option<f64>,
    pub rtt: SimTime,
    rtt_sampled: bool,
    pub rtt_gain: f64,
    pub criticality_mode: CriticalityMode,
    /// Fixed value used in random criticality mode.
    pub random_tx_time: SimTime,
    pub aging_alpha: f64,
    /// Cumulative time spent paused, for aging.
    pub waiting: SimTime,
    paused_since: Option<SimTime>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Continue,
    /// Deadline already passed.
    DeadlinePassed,
    /// Remaining transmission time overruns the deadline.
    CannotFinish,
    /// Paused with less than an RTT to go.
    PausedTooLong,
}

impl SenderFlowState {
    pub fn new(flow: FlowId, size: u64, max_rate: f64, deadline: Option<SimTime>, initial_rtt: SimTime) -> Self {
        SenderFlowState {
            flow,
            size,
            remaining: size,
            max_rate,
            rate: 0.0,
            pause_by: None,
            deadline,
            expected_tx_time: SimTime::from_secs_f64(size as f64 * 8.0 / max_rate),
            inter_probe: None,
            rtt: initial_rtt,
            rtt_sampled: false,
            rtt_gain: 0.125,
            criticality_mode: CriticalityMode::Exact,
            random_tx_time: SimTime::ZERO,
            aging_alpha: 0.0,
            waiting: SimTime::ZERO,
            paused_since: None,
        }
    }

    /// Starts the waiting clock: a flow is paused until its first grant.
    pub fn mark_start(&mut self, now: SimTime) {
        self.paused_since = Some(now);
    }

    pub fn sent(&self) -> u64 {
        self.size - self.remaining
    }

    pub fn is_paused(&self) -> bool {
        self.rate <= RATE_EPSILON
    }

    /// Probe spacing while paused.
    pub fn probe_interval(&self) -> SimTime {
        self.rtt.mul_f64(self.inter_probe.unwrap_or(1.0).max(1e-3))
    }

    /// Updates `remaining` and the expected transmission time.
    pub fn set_remaining(&mut self, remaining: u64) {
        assert!(remaining <= self.size, "remaining exceeds flow size");
        self.remaining = remaining;
        self.expected_tx_time = SimTime::from_secs_f64(remaining as f64 * 8.0 / self.max_rate);
    }

    /// Resizes the flow (multipath load shifting moves bytes between subflows).
    pub fn resize(&mut self, size: u64, remaining: u64) {
        self.size = size;
        self.set_remaining(remaining);
    }

    fn waiting_at(&self, now: SimTime) -> SimTime {
        match self.paused_since {
            Some(t) if now > t => self.waiting + (now - t),
            _ => self.waiting,
        }
    }

    /// The expected transmission time advertised to switches.
    pub fn advertised_tx_time(&self, now: SimTime) -> SimTime {
        let base = match self.criticality_mode {
            CriticalityMode::Exact => self.expected_tx_time,
            CriticalityMode::Estimated => criticality_from_sent_bytes(self.sent(), self.max_rate),
            CriticalityMode::Random => self.random_tx_time,
        };
        if self.aging_alpha > 0.0 {
            aging_adjust(base, self.waiting_at(now), self.aging_alpha)
        } else {
            base
        }
    }

    /// Header for a departing packet. The rate field always asks for the
    /// maximum; inter-probe starts unset (0) and only switches raise it.
    pub fn header(&self, now: SimTime) -> SchedulingHeader {
        SchedulingHeader {
            rate: self.max_rate,
            pause_by: self.pause_by,
            deadline: self.deadline,
            expected_tx_time: self.advertised_tx_time(now),
            inter_probe: 0.0,
            rtt: self.rtt,
        }
    }

    pub fn observe_rtt(&mut self, sample: SimTime) {
        if !self.rtt_sampled {
            self.rtt = sample;
            self.rtt_sampled = true;
        } else {
            let g = self.rtt_gain;
            self.rtt = SimTime::from_secs_f64(self.rtt.as_secs_f64() * (1.0 - g) + sample.as_secs_f64() * g);
        }
    }

    /// Applies returned feedback. Returns true if the sender went from
    /// paused to sending or the other way round.
    pub fn on_ack(&mut self, h: &SchedulingHeader, now: SimTime, rtt_sample: Option<SimTime>) -> bool {
        let was_paused = self.is_paused();
        self.rate = h.rate.clamp(0.0, self.max_rate);
        if self.rate <= RATE_EPSILON {
            self.rate = 0.0;
        }
        self.pause_by = h.pause_by;
        // no switch set it: fall back to one RTT
        self.inter_probe = (h.inter_probe > 0.0).then_some(h.inter_probe);
        if let Some(s) = rtt_sample {
            self.observe_rtt(s);
        }
        let paused = self.is_paused();
        match (was_paused, paused) {
            (true, false) => {
                if let Some(t) = self.paused_since.take() {
                    self.waiting = self.waiting + now.saturating_sub(t);
                }
            }
            (false, true) => self.paused_since = Some(now),
            _ => {}
        }
        was_paused != paused
    }

    pub fn check_early_termination(&self, now: SimTime) -> Termination {
        let Some(d) = self.deadline else {
            return Termination::Continue;
        };
        if now > d {
            Termination::DeadlinePassed
        } else if now + self.expected_tx_time > d {
            Termination::CannotFinish
        } else if self.is_paused() && now + self.rtt > d {
            Termination::PausedTooLong
        } else {
            Termination::Continue
        }
    }
}
