//! Packet-level simulation. Senders pace DATA at their granted rate and
//! probe while paused; every link egress, host NICs included, runs the
//! protocol's rate controller; links are FIFO tail-drop queues.

mod controller;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baselines::d3::D3Request;
use crate::config::{PdqConfig, Protocol, ScenarioConfig};
use crate::engine::event::EventQueue;
use crate::engine::link::{EnqueueOutcome, Link, LinkCounters};
use crate::engine::packet::{AckOf, Packet, PacketKind, PacketSizes};
use crate::ids::{FlowId, LinkId, NodeId};
use crate::metrics::{FlowRecord, MetricsReport, QueueSample, Summary, UtilizationRecorder};
use crate::mpdq::{range_bytes, split_flow, subtract_range, MultipathFlowState};
use crate::pdq::criticality::random_criticality;
use crate::pdq::header::{receiver_on_data, SchedulingHeader};
use crate::pdq::sender::Termination;
use crate::time::SimTime;
use crate::topology::Topology;
use crate::workload::FlowSpec;

pub use controller::Controller;

pub const STREAM_LOSS: u64 = 2;
pub const STREAM_CRITICALITY: u64 = 3;

/// Later DATA acknowledgements after which an outstanding packet counts as lost.
const DUP_THRESHOLD: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub protocol: Protocol,
    pub pdq: PdqConfig,
    pub sizes: PacketSizes,
    pub loss_rate: f64,
    pub subflows: usize,
    pub shift_period_rtts: f64,
    pub horizon: SimTime,
    pub bin: SimTime,
    pub sample_every: SimTime,
    pub seed: u64,
    /// Livelock guard.
    pub max_events: u64,
    /// Keep per-flow sending traces and probe times.
    pub trace: bool,
}

impl SimOptions {
    pub fn new(protocol: Protocol) -> Self {
        SimOptions::from_config(&ScenarioConfig { protocol, ..ScenarioConfig::default() })
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        SimOptions {
            protocol: cfg.protocol,
            pdq: cfg.pdq.clone(),
            sizes: PacketSizes::default(),
            loss_rate: cfg.loss_rate,
            subflows: cfg.multipath.subflows,
            shift_period_rtts: cfg.multipath.shift_period_rtts,
            horizon: SimTime::from_secs_f64(cfg.duration_ms * 1e-3),
            bin: SimTime::from_micros_f64(cfg.metrics.bin_us),
            sample_every: SimTime::from_micros_f64(cfg.metrics.queue_sample_us),
            seed: cfg.seed,
            max_events: 200_000_000,
            trace: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("event limit of {limit} exceeded at {at}")]
    EventLimit { limit: u64, at: SimTime },
    #[error("flow {flow}: no path from {src} to {dst}")]
    NoPath { flow: u64, src: NodeId, dst: NodeId },
    #[error("duplicate flow id {0}")]
    DuplicateFlow(u64),
}

/// Paused/sending history of one subflow.
#[derive(Clone, Debug, PartialEq)]
pub struct SendingTrace {
    pub flow: FlowId,
    pub path: Vec<LinkId>,
    /// `(time, sending)` at every change, starting paused at flow start.
    pub toggles: Vec<(SimTime, bool)>,
}

impl SendingTrace {
    pub fn sending_at(&self, t: SimTime) -> bool {
        self.toggles.iter().take_while(|&&(at, _)| at <= t).last().is_some_and(|&(_, s)| s)
    }
}

#[derive(Clone, Debug)]
pub struct SimDiagnostics {
    pub link_counters: Vec<LinkCounters>,
    /// Controller RTT averages at the end of the run.
    pub link_rtt_avg: Vec<SimTime>,
    pub probes_sent: u64,
    pub probe_times: Vec<SimTime>,
    pub sending_traces: Vec<SendingTrace>,
    /// Longest stretch with unfinished flows but no DATA sent.
    pub max_no_send_gap: SimTime,
    /// Samples at which a flow paused for over two RTTs at one link was
    /// still listed at another link of its path.
    pub pause_violations: u64,
    pub retransmissions: u64,
    pub timeouts: u64,
    pub conservation_violations: u64,
    pub first_data: Option<SimTime>,
    pub end_time: SimTime,
    pub events: u64,
    pub utilization: UtilizationRecorder,
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub report: MetricsReport,
    pub diagnostics: SimDiagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Sub {
    flow: usize,
    k: usize,
}

#[derive(Clone, Debug)]
enum Ev {
    Arrive { pkt: Packet, link: LinkId },
    FlowStart(usize),
    SendWake { sub: Sub, gen: u64 },
    Probe { sub: Sub, gen: u64 },
    Rto { sub: Sub, gen: u64 },
    Epoch(usize),
    Sample,
    Shift(usize),
}

#[derive(Clone, Copy, Debug)]
struct InFlight {
    offset: u64,
    len: u64,
    sent_at: SimTime,
}

#[derive(Clone, Debug, Default)]
struct Transport {
    rev: Vec<LinkId>,
    established: bool,
    syn_sent_at: Option<SimTime>,
    next_seq: u64,
    outstanding: BTreeMap<u64, InFlight>,
    send_gen: u64,
    wake_pending: bool,
    probe_gen: u64,
    probing: bool,
    rto_gen: u64,
    rto_armed: bool,
    /// Start and wire bits of the last DATA sent, for pacing.
    last_tx: Option<(SimTime, f64)>,
    term_sent: bool,
    term_pending_since: Option<SimTime>,
    last_request: Option<SimTime>,
    trace: Vec<(SimTime, bool)>,
}

#[derive(Clone, Debug)]
struct FlowRun {
    spec: FlowSpec,
    mp: MultipathFlowState,
    tx: Vec<Transport>,
    record: FlowRecord,
    started: bool,
    done: bool,
}

pub struct PacketSim {
    topo: Topology,
    opts: SimOptions,
    q: EventQueue<Ev>,
    links: Vec<Link>,
    ctrl: Vec<Controller>,
    lossy: Vec<bool>,
    switch_egress: Vec<bool>,
    epoch_armed: Vec<bool>,
    epoch_mark: Vec<(SimTime, u64)>,
    in_flight: Vec<u64>,
    flows: Vec<FlowRun>,
    by_parent: HashMap<u64, usize>,
    loss_rng: ChaCha8Rng,
    util: UtilizationRecorder,
    queues: Vec<QueueSample>,
    open: usize,
    active: usize,
    pending_terms: usize,
    last_progress: Option<SimTime>,
    max_gap: SimTime,
    probes_sent: u64,
    probe_times: Vec<SimTime>,
    pause_violations: u64,
    retransmissions: u64,
    timeouts: u64,
    conservation_violations: u64,
    first_data: Option<SimTime>,
}

impl PacketSim {
    pub fn new(topo: &Topology, specs: &[FlowSpec], opts: SimOptions) -> Result<PacketSim, SimError> {
        let nlinks = topo.links().len();
        let links: Vec<Link> = topo
            .links()
            .iter()
            .enumerate()
            .map(|(i, l)| Link::new(LinkId(i as u32), l.src, l.dst, l.params))
            .collect();
        let ctrl = topo
            .links()
            .iter()
            .map(|l| Controller::new(opts.protocol, l.src, l.params.rate_bps, &opts.pdq))
            .collect();
        let mut sinks = vec![false; topo.node_count()];
        for s in specs {
            sinks[s.dst.index()] = true;
        }
        let lossy = topo
            .links()
            .iter()
            .map(|l| opts.loss_rate > 0.0 && (sinks[l.src.index()] || sinks[l.dst.index()]))
            .collect();
        let switch_egress = topo.links().iter().map(|l| topo.is_switch(l.src)).collect();

        let mut crit_rng = ChaCha8Rng::seed_from_u64(opts.seed);
        crit_rng.set_stream(STREAM_CRITICALITY);
        let mut flows = Vec::with_capacity(specs.len());
        let mut by_parent = HashMap::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            if by_parent.insert(s.id, i).is_some() {
                return Err(SimError::DuplicateFlow(s.id));
            }
            let paths = topo.shortest_paths(s.src, s.dst);
            if paths.is_empty() {
                return Err(SimError::NoPath { flow: s.id, src: s.src, dst: s.dst });
            }
            let rtt = opts.pdq.initial_rtt();
            let mut mp = split_flow(s, opts.subflows, &paths, f64::INFINITY, rtt, SimTime::ZERO);
            let random_t = random_criticality(&mut crit_rng);
            let mut tx = Vec::with_capacity(mp.subflows.len());
            for sf in &mut mp.subflows {
                let first = topo.link(sf.path[0]).params.rate_bps;
                let last = topo.link(*sf.path.last().unwrap()).params.rate_bps;
                let max_rate = first.min(last);
                let st = &mut sf.state;
                st.max_rate = max_rate;
                st.set_remaining(st.remaining);
                st.criticality_mode = opts.pdq.criticality;
                st.random_tx_time = random_t;
                st.aging_alpha = opts.pdq.aging_alpha;
                tx.push(Transport {
                    rev: topo.reverse_path(&sf.path),
                    ..Transport::default()
                });
            }
            flows.push(FlowRun {
                spec: s.clone(),
                mp,
                tx,
                record: FlowRecord::new(s.id, s.src.0, s.dst.0, s.size, s.start, s.deadline),
                started: false,
                done: false,
            });
        }
        let mut loss_rng = ChaCha8Rng::seed_from_u64(opts.seed);
        loss_rng.set_stream(STREAM_LOSS);
        let mut q = EventQueue::new();
        for (i, f) in flows.iter().enumerate() {
            q.schedule(f.spec.start, Ev::FlowStart(i));
        }
        Ok(PacketSim {
            topo: topo.clone(),
            util: UtilizationRecorder::new(nlinks, opts.bin),
            opts,
            q,
            links,
            ctrl,
            lossy,
            switch_egress,
            epoch_armed: vec![false; nlinks],
            epoch_mark: vec![(SimTime::ZERO, 0); nlinks],
            in_flight: vec![0; nlinks],
            open: flows.len(),
            flows,
            by_parent,
            loss_rng,
            queues: Vec::new(),
            active: 0,
            pending_terms: 0,
            last_progress: None,
            max_gap: SimTime::ZERO,
            probes_sent: 0,
            probe_times: Vec::new(),
            pause_violations: 0,
            retransmissions: 0,
            timeouts: 0,
            conservation_violations: 0,
            first_data: None,
        })
    }

    fn now(&self) -> SimTime {
        self.q.now()
    }

    pub fn run(mut self) -> Result<SimOutput, SimError> {
        let horizon = self.opts.horizon;
        if !self.flows.is_empty() {
            self.q.schedule(SimTime::ZERO, Ev::Sample);
        }
        while self.open > 0 || self.pending_terms > 0 {
            let Some(ev) = self.q.pop_until(horizon) else {
                break;
            };
            if self.q.processed() > self.opts.max_events {
                return Err(SimError::EventLimit { limit: self.opts.max_events, at: ev.fire_at });
            }
            match ev.payload {
                Ev::Arrive { pkt, link } => self.on_arrive(pkt, link),
                Ev::FlowStart(f) => self.on_flow_start(f),
                Ev::SendWake { sub, gen } => self.on_send_wake(sub, gen),
                Ev::Probe { sub, gen } => self.on_probe(sub, gen),
                Ev::Rto { sub, gen } => self.on_rto(sub, gen),
                Ev::Epoch(l) => self.on_epoch(l),
                Ev::Sample => self.on_sample(),
                Ev::Shift(f) => self.on_shift(f),
            }
        }
        let end = self.now();
        if self.active > 0 {
            self.progress(end);
        }
        Ok(self.finish(end))
    }

    fn finish(self, end: SimTime) -> SimOutput {
        let flows: Vec<FlowRecord> = self.flows.iter().map(|f| f.record.clone()).collect();
        let mut summary = Summary::from_flows(&flows);
        summary.protocol = self.opts.protocol.name().to_string();
        summary.simulator = "packet".to_string();
        summary.drops = self.links.iter().map(|l| l.counters.drop_count).sum();
        summary.losses = self.links.iter().map(|l| l.counters.loss_count).sum();
        summary.probes = self.probes_sent;
        summary.events = self.q.processed();
        let endpoints: Vec<(u32, u32)> = self.links.iter().map(|l| (l.src.0, l.dst.0)).collect();
        let rates: Vec<f64> = self.links.iter().map(|l| l.params.rate_bps).collect();
        let report = MetricsReport {
            flows,
            links: self.util.samples(&endpoints, &rates),
            queues: self.queues,
            summary,
        };
        let sending_traces = if self.opts.trace {
            self.flows
                .iter()
                .flat_map(|f| {
                    f.mp.subflows.iter().zip(&f.tx).map(|(s, t)| SendingTrace {
                        flow: s.state.flow,
                        path: s.path.clone(),
                        toggles: t.trace.clone(),
                    })
                })
                .collect()
        } else {
            Vec::new()
        };
        SimOutput {
            report,
            diagnostics: SimDiagnostics {
                link_counters: self.links.iter().map(|l| l.counters).collect(),
                link_rtt_avg: self.ctrl.iter().map(Controller::rtt_avg).collect(),
                probes_sent: self.probes_sent,
                probe_times: self.probe_times,
                sending_traces,
                max_no_send_gap: self.max_gap,
                pause_violations: self.pause_violations,
                retransmissions: self.retransmissions,
                timeouts: self.timeouts,
                conservation_violations: self.conservation_violations,
                first_data: self.first_data,
                end_time: end,
                events: self.q.processed(),
                utilization: self.util,
            },
        }
    }

    fn sub_of(&self, flow: FlowId) -> Option<Sub> {
        let f = *self.by_parent.get(&flow.parent())?;
        let k = flow.subflow_index();
        (k < self.flows[f].tx.len()).then_some(Sub { flow: f, k })
    }

    fn progress(&mut self, now: SimTime) {
        if let Some(t) = self.last_progress {
            self.max_gap = self.max_gap.max(now.saturating_sub(t));
        }
        self.last_progress = Some(now);
    }

    // ---- links and controllers ----

    fn arm_epoch(&mut self, l: usize) {
        if !self.epoch_armed[l] {
            self.epoch_armed[l] = true;
            let now = self.now();
            self.epoch_mark[l] = (now, self.links[l].counters.injected_bytes);
            let at = now + self.ctrl[l].epoch_interval();
            self.q.schedule(at, Ev::Epoch(l));
        }
    }

    fn on_epoch(&mut self, l: usize) {
        let now = self.now();
        let queue = self.links[l].waiting_bytes(now);
        let injected = self.links[l].counters.injected_bytes;
        let (t0, i0) = self.epoch_mark[l];
        let dt = now.saturating_sub(t0).as_secs_f64();
        let arrival = if dt > 0.0 { (injected - i0) as f64 * 8.0 / dt } else { 0.0 };
        self.ctrl[l].epoch(queue, arrival);
        self.epoch_mark[l] = (now, injected);
        if self.ctrl[l].is_idle() && queue == 0 {
            self.epoch_armed[l] = false;
        } else {
            let at = now + self.ctrl[l].epoch_interval();
            self.q.schedule(at, Ev::Epoch(l));
        }
    }

    /// Puts `pkt` on `link` after the egress controller has seen it.
    fn transmit(&mut self, mut pkt: Packet, link: LinkId) {
        let now = self.now();
        let l = link.index();
        if pkt.kind.is_forward() {
            if pkt.kind == PacketKind::Term {
                self.ctrl[l].on_term(pkt.flow);
            } else if let Some(h) = pkt.header.as_mut() {
                self.ctrl[l].on_forward(h, pkt.d3.as_ref(), pkt.flow, now);
            }
            self.arm_epoch(l);
        }
        if self.lossy[l] && self.loss_rng.random_bool(self.opts.loss_rate) {
            self.links[l].record_loss(pkt.size);
            return;
        }
        match self.links[l].enqueue(pkt.size, pkt.kind, now) {
            EnqueueOutcome::Dropped => {}
            EnqueueOutcome::Enqueued { tx_start, tx_end, arrival } => {
                self.util.record(l, tx_start, tx_end, pkt.size as f64 * 8.0);
                self.in_flight[l] += pkt.size as u64;
                self.q.schedule(arrival, Ev::Arrive { pkt, link });
            }
        }
    }

    fn on_arrive(&mut self, mut pkt: Packet, link: LinkId) {
        let l = link.index();
        self.links[l].record_delivery(pkt.size);
        self.in_flight[l] -= pkt.size as u64;
        let Some(sub) = self.sub_of(pkt.flow) else {
            return;
        };
        let hop = pkt.hop as usize;
        let n = self.flows[sub.flow].tx[sub.k].rev.len();
        if pkt.kind.is_forward() {
            if hop + 1 == n {
                self.at_receiver(pkt, sub);
            } else {
                pkt.hop += 1;
                let next = self.flows[sub.flow].mp.subflows[sub.k].path[hop + 1];
                self.transmit(pkt, next);
            }
        } else {
            // the node reached owns the forward link this ACK's header describes
            let fwd = self.flows[sub.flow].mp.subflows[sub.k].path[n - 1 - hop].index();
            if let Some(h) = pkt.header.as_mut() {
                let now = self.now();
                self.ctrl[fwd].on_ack(h, pkt.flow, now);
                self.arm_epoch(fwd);
            }
            if hop + 1 == n {
                self.at_sender(pkt, sub);
            } else {
                pkt.hop += 1;
                let next = self.flows[sub.flow].tx[sub.k].rev[hop + 1];
                self.transmit(pkt, next);
            }
        }
    }

    fn at_receiver(&mut self, pkt: Packet, sub: Sub) {
        let (kind, ack) = match pkt.kind {
            PacketKind::Syn => (PacketKind::SynAck, AckOf::Syn),
            PacketKind::Data => (PacketKind::Ack, AckOf::Data { seq: pkt.seq }),
            PacketKind::Probe => (PacketKind::Ack, AckOf::Probe),
            PacketKind::Term => (PacketKind::Ack, AckOf::Term),
            _ => return,
        };
        let last = *self.flows[sub.flow].mp.subflows[sub.k].path.last().unwrap();
        let recv_rate = self.topo.link(last).params.rate_bps;
        let mut reply = Packet::control(kind, pkt.flow, self.opts.sizes.control, pkt.send_time);
        reply.ack = Some(ack);
        reply.seq = pkt.seq;
        reply.offset = pkt.offset;
        reply.payload = pkt.payload;
        if pkt.kind != PacketKind::Term {
            reply.header = pkt.header.map(|h| receiver_on_data(&h, recv_rate));
        }
        let first = self.flows[sub.flow].tx[sub.k].rev[0];
        self.transmit(reply, first);
    }

    // ---- sender ----

    fn on_flow_start(&mut self, f: usize) {
        let now = self.now();
        let fr = &mut self.flows[f];
        fr.started = true;
        for k in 0..fr.tx.len() {
            fr.mp.subflows[k].state.mark_start(now);
            fr.tx[k].trace.push((now, false));
        }
        if self.active == 0 {
            self.last_progress = Some(now);
        }
        self.active += 1;
        for k in 0..self.flows[f].tx.len() {
            self.send_syn(Sub { flow: f, k });
        }
        if self.flows[f].tx.len() > 1 {
            let at = now + self.shift_period(f);
            self.q.schedule(at, Ev::Shift(f));
        }
    }

    fn shift_period(&self, f: usize) -> SimTime {
        let rtt = self.flows[f].mp.subflows.iter().map(|s| s.state.rtt).max().unwrap_or_default();
        rtt.mul_f64(self.opts.shift_period_rtts).max(SimTime::from_micros(1))
    }

    fn d3_request(&mut self, sub: Sub, force: bool) -> Option<D3Request> {
        if self.opts.protocol != Protocol::D3 {
            return None;
        }
        let now = self.now();
        let sizes = self.opts.sizes;
        let fr = &mut self.flows[sub.flow];
        let s = &fr.mp.subflows[sub.k];
        let desired = match s.state.deadline {
            Some(d) if d > now => sizes.wire_bytes(s.unsent_bytes()) as f64 * 8.0 / (d - now).as_secs_f64(),
            _ => 0.0,
        };
        let rtt = s.state.rtt;
        let t = &mut fr.tx[sub.k];
        let is_request = force || t.last_request.is_none_or(|at| now >= at + rtt);
        if is_request {
            t.last_request = Some(now);
        }
        Some(D3Request { desired, is_request })
    }

    fn header(&self, sub: Sub) -> SchedulingHeader {
        let mut h = self.flows[sub.flow].mp.subflows[sub.k].state.header(self.now());
        if self.opts.protocol != Protocol::Pdq {
            h.pause_by = None;
        }
        h
    }

    fn send_syn(&mut self, sub: Sub) {
        let now = self.now();
        let mut pkt = Packet::control(PacketKind::Syn, self.flows[sub.flow].mp.subflows[sub.k].state.flow, self.opts.sizes.control, now);
        pkt.header = Some(self.header(sub));
        pkt.d3 = self.d3_request(sub, true);
        self.flows[sub.flow].tx[sub.k].syn_sent_at = Some(now);
        let first = self.flows[sub.flow].mp.subflows[sub.k].path[0];
        self.transmit(pkt, first);
        self.arm_rto(sub);
    }

    fn send_term(&mut self, sub: Sub) {
        let now = self.now();
        let t = &mut self.flows[sub.flow].tx[sub.k];
        t.send_gen += 1;
        t.wake_pending = false;
        t.probe_gen += 1;
        t.probing = false;
        if t.term_pending_since.is_none() {
            self.pending_terms += 1;
        }
        t.term_sent = true;
        t.term_pending_since = Some(now);
        let s = &self.flows[sub.flow].mp.subflows[sub.k];
        let pkt = Packet::control(PacketKind::Term, s.state.flow, self.opts.sizes.control, now);
        let first = s.path[0];
        self.transmit(pkt, first);
        self.arm_rto(sub);
    }

    fn rto(&self, sub: Sub) -> SimTime {
        self.flows[sub.flow].mp.subflows[sub.k].state.rtt.mul_f64(self.opts.pdq.rto_rtts).max(SimTime::from_micros(1))
    }

    fn arm_rto(&mut self, sub: Sub) {
        let rto = self.rto(sub);
        let t = &self.flows[sub.flow].tx[sub.k];
        if t.rto_armed {
            return;
        }
        let candidates = [
            t.syn_sent_at.filter(|_| !t.established),
            t.outstanding.values().next().map(|x| x.sent_at),
            t.term_pending_since,
        ];
        if let Some(first) = candidates.into_iter().flatten().min() {
            let at = (first + rto).max(self.now());
            let t = &mut self.flows[sub.flow].tx[sub.k];
            t.rto_gen += 1;
            t.rto_armed = true;
            let gen = t.rto_gen;
            self.q.schedule(at, Ev::Rto { sub, gen });
        }
    }

    fn on_rto(&mut self, sub: Sub, gen: u64) {
        let t = &mut self.flows[sub.flow].tx[sub.k];
        if gen != t.rto_gen {
            return;
        }
        t.rto_armed = false;
        let now = self.now();
        let rto = self.rto(sub);
        let fr = &self.flows[sub.flow];
        let t = &fr.tx[sub.k];
        if let Some(at) = t.term_pending_since {
            if now >= at + rto {
                self.timeouts += 1;
                self.send_term(sub);
            } else {
                self.arm_rto(sub);
            }
            return;
        }
        if fr.done {
            return;
        }
        if !t.established {
            if t.syn_sent_at.is_some_and(|at| now >= at + rto) {
                self.timeouts += 1;
                self.send_syn(sub);
            } else {
                self.arm_rto(sub);
            }
            return;
        }
        let expired: Vec<u64> = t
            .outstanding
            .iter()
            .filter(|(_, x)| x.sent_at + rto <= now)
            .map(|(&s, _)| s)
            .collect();
        if !expired.is_empty() {
            self.timeouts += 1;
            self.requeue(sub, &expired);
        }
        self.arm_rto(sub);
    }

    /// Declares transmissions `seqs` lost and hands their bytes back for sending.
    fn requeue(&mut self, sub: Sub, seqs: &[u64]) {
        let fr = &mut self.flows[sub.flow];
        let mut lost = Vec::with_capacity(seqs.len());
        for s in seqs {
            if let Some(x) = fr.tx[sub.k].outstanding.remove(s) {
                lost.push(x);
            }
        }
        self.retransmissions += lost.len() as u64;
        let mut touched = Vec::new();
        // push_front in reverse keeps the lowest offsets first
        for x in lost.iter().rev() {
            let (s, e) = (x.offset, x.offset + x.len);
            if fr.mp.delivered.covers(s, e) {
                continue;
            }
            let k = fr.mp.reroute(sub.k, s, e);
            if !touched.contains(&k) {
                touched.push(k);
            }
        }
        for k in touched {
            self.kick(Sub { flow: sub.flow, k });
        }
    }

    /// (Re)schedules pacing after a rate change or new data.
    fn kick(&mut self, sub: Sub) {
        let now = self.now();
        let fr = &mut self.flows[sub.flow];
        let s = &fr.mp.subflows[sub.k];
        let t = &mut fr.tx[sub.k];
        if fr.done || s.finished || !t.established || s.state.is_paused() || s.unsent.is_empty() {
            return;
        }
        let at = match t.last_tx {
            Some((t0, bits)) => (t0 + SimTime::from_secs_f64(bits / s.state.rate)).max(now),
            None => now,
        };
        t.send_gen += 1;
        t.wake_pending = true;
        let gen = t.send_gen;
        self.q.schedule(at, Ev::SendWake { sub, gen });
    }

    /// Paused, or granted so little that the next packet would leave after
    /// the next probe would.
    fn wants_probe(&self, sub: Sub) -> bool {
        let st = &self.flows[sub.flow].mp.subflows[sub.k].state;
        st.is_paused() || {
            let bits = self.opts.sizes.mss as f64 * 8.0;
            SimTime::from_secs_f64(bits / st.rate) > st.probe_interval()
        }
    }

    fn arm_probe(&mut self, sub: Sub) {
        let now = self.now();
        let fr = &mut self.flows[sub.flow];
        let t = &mut fr.tx[sub.k];
        if t.probing {
            return;
        }
        t.probing = true;
        t.probe_gen += 1;
        let gen = t.probe_gen;
        let at = now + fr.mp.subflows[sub.k].state.probe_interval();
        self.q.schedule(at, Ev::Probe { sub, gen });
    }

    fn terminate_if_hopeless(&mut self, sub: Sub) -> bool {
        let enabled = match self.opts.protocol {
            Protocol::Pdq => self.opts.pdq.early_termination,
            Protocol::D3 => true,
            Protocol::Rcp => false,
        };
        if !enabled {
            return false;
        }
        let verdict = self.flows[sub.flow].mp.subflows[sub.k].state.check_early_termination(self.now());
        let quit = match (self.opts.protocol, verdict) {
            (_, Termination::Continue) => false,
            // quenching only drops flows that cannot make it at full rate
            (Protocol::D3, Termination::PausedTooLong) => false,
            _ => true,
        };
        if quit {
            self.close_flow(sub.flow, false);
        }
        quit
    }

    fn on_send_wake(&mut self, sub: Sub, gen: u64) {
        {
            let t = &mut self.flows[sub.flow].tx[sub.k];
            if gen != t.send_gen {
                return;
            }
            t.wake_pending = false;
        }
        let fr = &self.flows[sub.flow];
        let s = &fr.mp.subflows[sub.k];
        if fr.done || s.finished || !fr.tx[sub.k].established || s.state.is_paused() || s.unsent.is_empty() {
            return;
        }
        if self.terminate_if_hopeless(sub) {
            return;
        }
        let now = self.now();
        let sizes = self.opts.sizes;
        let per = sizes.payload() as u64;
        let header = self.header(sub);
        let d3 = self.d3_request(sub, false);
        let fr = &mut self.flows[sub.flow];
        let sf = &mut fr.mp.subflows[sub.k];
        let (s, e) = sf.unsent[0];
        let len = (e - s).min(per);
        if s + len == e {
            sf.unsent.pop_front();
        } else {
            sf.unsent[0].0 = s + len;
        }
        sf.sync_remaining();
        let rate = sf.state.rate;
        let path0 = sf.path[0];
        let t = &mut fr.tx[sub.k];
        let seq = t.next_seq;
        t.next_seq += 1;
        t.outstanding.insert(seq, InFlight { offset: s, len, sent_at: now });
        let size = (len + (sizes.mss as u64 - per)) as u32;
        let bits = size as f64 * 8.0;
        t.last_tx = Some((now, bits));
        t.send_gen += 1;
        t.wake_pending = true;
        let gen = t.send_gen;
        let pkt = Packet {
            kind: PacketKind::Data,
            flow: sf.state.flow,
            size,
            payload: len as u32,
            seq,
            offset: s,
            ack: None,
            header: Some(header),
            d3,
            send_time: now,
            hop: 0,
        };
        self.first_data.get_or_insert(now);
        self.progress(now);
        self.transmit(pkt, path0);
        self.q.schedule(now + SimTime::from_secs_f64(bits / rate), Ev::SendWake { sub, gen });
        self.arm_rto(sub);
    }

    fn on_probe(&mut self, sub: Sub, gen: u64) {
        let now = self.now();
        {
            let fr = &mut self.flows[sub.flow];
            let t = &mut fr.tx[sub.k];
            if gen != t.probe_gen {
                return;
            }
            let s = &fr.mp.subflows[sub.k];
            if fr.done || s.finished || !t.established {
                t.probing = false;
                return;
            }
        }
        if !self.wants_probe(sub) {
            self.flows[sub.flow].tx[sub.k].probing = false;
            return;
        }
        if self.terminate_if_hopeless(sub) {
            return;
        }
        let mut pkt = Packet::control(PacketKind::Probe, self.flows[sub.flow].mp.subflows[sub.k].state.flow, self.opts.sizes.control, now);
        pkt.header = Some(self.header(sub));
        pkt.d3 = self.d3_request(sub, true);
        self.probes_sent += 1;
        if self.opts.trace {
            self.probe_times.push(now);
        }
        let sf = &self.flows[sub.flow].mp.subflows[sub.k];
        let path0 = sf.path[0];
        let at = now + sf.state.probe_interval();
        self.transmit(pkt, path0);
        self.q.schedule(at, Ev::Probe { sub, gen });
    }

    fn at_sender(&mut self, pkt: Packet, sub: Sub) {
        let now = self.now();
        let sample = now.saturating_sub(pkt.send_time);
        match pkt.ack {
            Some(AckOf::Term) => {
                let t = &mut self.flows[sub.flow].tx[sub.k];
                if t.term_pending_since.take().is_some() {
                    self.pending_terms -= 1;
                }
            }
            Some(AckOf::Syn) => {
                let fr = &mut self.flows[sub.flow];
                if fr.done || fr.mp.subflows[sub.k].finished || fr.tx[sub.k].established {
                    return;
                }
                let t = &mut fr.tx[sub.k];
                t.established = true;
                t.syn_sent_at = None;
                if let Some(h) = pkt.header {
                    self.feedback(sub, &h, Some(sample));
                }
                let fr = &self.flows[sub.flow];
                if !fr.done && fr.mp.subflows[sub.k].state.is_paused() {
                    self.arm_probe(sub);
                }
                self.check_drained(sub);
            }
            Some(AckOf::Probe) => {
                let fr = &self.flows[sub.flow];
                if fr.done || fr.mp.subflows[sub.k].finished {
                    return;
                }
                if let Some(h) = pkt.header {
                    self.feedback(sub, &h, Some(sample));
                }
            }
            Some(AckOf::Data { seq }) => self.on_data_ack(sub, seq, &pkt, sample),
            None => {}
        }
    }

    fn on_data_ack(&mut self, sub: Sub, seq: u64, pkt: &Packet, sample: SimTime) {
        let fr = &mut self.flows[sub.flow];
        if fr.done {
            return;
        }
        let (start, end) = (pkt.offset, pkt.offset + pkt.payload as u64);
        fr.mp.record_delivery(start, end);
        let t = &mut fr.tx[sub.k];
        if t.outstanding.remove(&seq).is_none() {
            // a copy declared lost arrived after all; do not send it again
            for sf in &mut fr.mp.subflows {
                subtract_range(&mut sf.unsent, start, end);
            }
            for sf in &mut fr.mp.subflows {
                let unsent = range_bytes(&sf.unsent);
                if unsent != sf.state.remaining {
                    sf.state.set_remaining(unsent);
                }
            }
        }
        let lost: Vec<u64> = if seq >= DUP_THRESHOLD {
            t.outstanding.range(..=seq - DUP_THRESHOLD).map(|(&s, _)| s).collect()
        } else {
            Vec::new()
        };
        if fr.mp.is_complete() {
            self.close_flow(sub.flow, true);
            return;
        }
        if !lost.is_empty() {
            self.requeue(sub, &lost);
        }
        if !self.flows[sub.flow].mp.subflows[sub.k].finished {
            if let Some(h) = pkt.header {
                self.feedback(sub, &h, Some(sample));
            }
        }
        self.check_drained(sub);
    }

    /// Applies ACK feedback to the sender state and reacts to pause changes.
    fn feedback(&mut self, sub: Sub, h: &SchedulingHeader, sample: Option<SimTime>) {
        let now = self.now();
        let fr = &mut self.flows[sub.flow];
        let st = &mut fr.mp.subflows[sub.k].state;
        let old_rate = st.rate;
        let toggled = st.on_ack(h, now, sample);
        let paused = st.is_paused();
        let rate_changed = st.rate != old_rate;
        let t = &mut fr.tx[sub.k];
        if toggled {
            t.trace.push((now, !paused));
        }
        if paused {
            t.send_gen += 1;
            t.wake_pending = false;
            self.arm_probe(sub);
        } else {
            if rate_changed || !t.wake_pending {
                self.kick(sub);
            }
            if self.wants_probe(sub) {
                self.arm_probe(sub);
            } else {
                let t = &mut self.flows[sub.flow].tx[sub.k];
                t.probe_gen += 1;
                t.probing = false;
            }
        }
        self.terminate_if_hopeless(sub);
    }

    /// Ends a subflow that has nothing left unsent or unacknowledged.
    fn check_drained(&mut self, sub: Sub) {
        let fr = &self.flows[sub.flow];
        let s = &fr.mp.subflows[sub.k];
        let t = &fr.tx[sub.k];
        if fr.done || s.finished || !t.established || !s.unsent.is_empty() || !t.outstanding.is_empty() {
            return;
        }
        if fr.mp.is_complete() {
            self.close_flow(sub.flow, true);
        } else if fr.tx.len() > 1 {
            self.flows[sub.flow].mp.subflows[sub.k].finished = true;
            self.push_trace(sub, false);
            self.send_term(sub);
        }
    }

    fn push_trace(&mut self, sub: Sub, sending: bool) {
        let now = self.now();
        let t = &mut self.flows[sub.flow].tx[sub.k];
        if t.trace.last().is_some_and(|&(_, s)| s != sending) {
            t.trace.push((now, sending));
        }
    }

    /// Completes (`ok`) or abandons a flow and sends TERM on every subflow
    /// that has not sent one.
    fn close_flow(&mut self, f: usize, ok: bool) {
        let now = self.now();
        let fr = &mut self.flows[f];
        if fr.done {
            return;
        }
        fr.done = true;
        if ok {
            fr.record.complete(now);
        } else {
            fr.record.terminate();
        }
        for k in 0..fr.tx.len() {
            self.flows[f].mp.subflows[k].finished = true;
            self.push_trace(Sub { flow: f, k }, false);
            let t = &mut self.flows[f].tx[k];
            t.outstanding.clear();
            if !t.term_sent {
                self.send_term(Sub { flow: f, k });
            }
        }
        self.open -= 1;
        self.active -= 1;
        if self.active == 0 {
            self.progress(now);
            self.last_progress = None;
        }
    }

    fn on_shift(&mut self, f: usize) {
        if self.flows[f].done {
            return;
        }
        let emptied = self.flows[f].mp.shift_load();
        for &k in &emptied {
            let sub = Sub { flow: f, k };
            self.push_trace(sub, false);
            self.send_term(sub);
        }
        if !emptied.is_empty() {
            for k in 0..self.flows[f].tx.len() {
                let sub = Sub { flow: f, k };
                self.kick(sub);
            }
        }
        let at = self.now() + self.shift_period(f);
        self.q.schedule(at, Ev::Shift(f));
    }

    // ---- monitoring ----

    fn on_sample(&mut self) {
        let now = self.now();
        for l in 0..self.links.len() {
            let c = &self.links[l].counters;
            if c.injected_bytes != c.delivered_bytes + c.dropped_bytes + self.in_flight[l] {
                self.conservation_violations += 1;
            }
            if !self.switch_egress[l] || c.injected_bytes == 0 {
                continue;
            }
            let link = &mut self.links[l];
            let bytes = link.occupancy(now);
            let peak = link.take_data_peak(now);
            if bytes > 0 || peak > 0 {
                self.queues.push(QueueSample {
                    time_ns: now.as_nanos(),
                    link: l as u32,
                    bytes,
                    packets: link.queued_packets(now) as u64,
                    max_data_packets: peak,
                });
            }
        }
        if self.opts.protocol == Protocol::Pdq {
            self.check_pause_propagation(now);
        }
        if self.open > 0 {
            self.q.schedule(now + self.opts.sample_every, Ev::Sample);
        }
    }

    fn check_pause_propagation(&mut self, now: SimTime) {
        for fr in &self.flows {
            if !fr.started || fr.done {
                continue;
            }
            for sf in &fr.mp.subflows {
                if sf.finished {
                    continue;
                }
                let id = sf.state.flow;
                let stale_pause = sf.path.iter().find(|&&l| {
                    let Some(s) = self.ctrl[l.index()].as_pdq() else {
                        return false;
                    };
                    s.index_of(id).is_some_and(|i| {
                        let e = &s.flows()[i];
                        e.pause_by == Some(s.switch)
                            && e.paused_since.is_some_and(|t0| now.saturating_sub(t0) > e.rtt.mul_f64(2.0))
                    })
                });
                if let Some(&held) = stale_pause {
                    let listed_elsewhere = sf.path.iter().any(|&m| {
                        m != held && self.ctrl[m.index()].as_pdq().is_some_and(|s| s.index_of(id).is_some())
                    });
                    if listed_elsewhere {
                        self.pause_violations += 1;
                    }
                }
            }
        }
    }
}

/// Runs `specs` on `topo` and returns the report and diagnostics.
pub fn simulate(topo: &Topology, specs: &[FlowSpec], opts: SimOptions) -> Result<SimOutput, SimError> {
    PacketSim::new(topo, specs, opts)?.run()
}
