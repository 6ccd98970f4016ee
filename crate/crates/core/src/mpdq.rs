//! Multipath flows: one parent byte space split across subflows pinned to
//! equal-cost paths, with periodic load shifting away from paused subflows.

use std::collections::{BTreeMap, VecDeque};

use crate::ids::{FlowId, LinkId};
use crate::pdq::sender::SenderFlowState;
use crate::time::SimTime;
use crate::topology::ecmp_hash;
use crate::workload::FlowSpec;

/// A set of half-open byte intervals, kept merged.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ByteRanges {
    map: BTreeMap<u64, u64>,
    total: u64,
}

impl ByteRanges {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mut start: u64, mut end: u64) {
        if start >= end {
            return;
        }
        // absorb an interval that starts before and reaches `start`
        if let Some((&s, &e)) = self.map.range(..=start).next_back() {
            if e >= start {
                if e >= end {
                    return;
                }
                start = s;
                end = end.max(e);
                self.map.remove(&s);
                self.total -= e - s;
            }
        }
        let overlapping: Vec<(u64, u64)> = self.map.range(start..=end).map(|(&s, &e)| (s, e)).collect();
        for (s, e) in overlapping {
            self.map.remove(&s);
            self.total -= e - s;
            end = end.max(e);
        }
        self.map.insert(start, end);
        self.total += end - start;
    }

    /// Bytes covered.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn covers(&self, start: u64, end: u64) -> bool {
        start >= end || self.map.range(..=start).next_back().is_some_and(|(_, &e)| e >= end)
    }

    pub fn intervals(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.map.iter().map(|(&s, &e)| (s, e))
    }
}

/// Removes `[start, end)` from a queue of disjoint ranges.
pub fn subtract_range(queue: &mut VecDeque<(u64, u64)>, start: u64, end: u64) {
    if start >= end || !queue.iter().any(|&(s, e)| s < end && start < e) {
        return;
    }
    let mut out = VecDeque::with_capacity(queue.len() + 1);
    for &(s, e) in queue.iter() {
        if e <= start || s >= end {
            out.push_back((s, e));
            continue;
        }
        if s < start {
            out.push_back((s, start));
        }
        if e > end {
            out.push_back((end, e));
        }
    }
    *queue = out;
}

pub fn range_bytes(queue: &VecDeque<(u64, u64)>) -> u64 {
    queue.iter().map(|&(s, e)| e - s).sum()
}

#[derive(Clone, Debug)]
pub struct Subflow {
    pub state: SenderFlowState,
    pub path: Vec<LinkId>,
    /// Parent byte ranges this subflow still has to hand to the network.
    pub unsent: VecDeque<(u64, u64)>,
    /// Terminated, either done or emptied by a shift.
    pub finished: bool,
}

impl Subflow {
    pub fn unsent_bytes(&self) -> u64 {
        range_bytes(&self.unsent)
    }

    /// Refreshes the sender's remaining count (and size, if load was moved in).
    pub fn sync_remaining(&mut self) {
        let unsent = self.unsent_bytes();
        let size = self.state.size.max(unsent);
        self.state.resize(size, unsent);
    }
}

#[derive(Clone, Debug)]
pub struct MultipathFlowState {
    pub parent: u64,
    pub size: u64,
    pub subflows: Vec<Subflow>,
    /// Acknowledged parent bytes.
    pub delivered: ByteRanges,
    pub shift_period: SimTime,
}

/// Splits a flow evenly into `n` subflows on distinct paths chosen from
/// `paths` by a hash of the parent id. `n` is clamped to the number of
/// paths (and to the flow size).
pub fn split_flow(
    spec: &FlowSpec,
    n: usize,
    paths: &[Vec<LinkId>],
    max_rate: f64,
    initial_rtt: SimTime,
    shift_period: SimTime,
) -> MultipathFlowState {
    assert!(!paths.is_empty(), "flow {} has no path", spec.id);
    let mut n = n.max(1);
    if n > paths.len() {
        log::warn!("flow {}: {} subflows requested but only {} paths; using {}", spec.id, n, paths.len(), paths.len());
        n = paths.len();
    }
    n = n.min(spec.size.max(1) as usize);
    let base = ecmp_hash(spec.id) % paths.len() as u64;
    let chunk = spec.size / n as u64;
    let extra = spec.size % n as u64;
    let mut offset = 0;
    let subflows = (0..n)
        .map(|k| {
            let len = chunk + u64::from((k as u64) < extra);
            let path = paths[((base + k as u64) % paths.len() as u64) as usize].clone();
            let state = SenderFlowState::new(FlowId::subflow(spec.id, k), len, max_rate, spec.deadline, initial_rtt);
            let unsent = if len > 0 { VecDeque::from([(offset, offset + len)]) } else { VecDeque::new() };
            offset += len;
            Subflow { state, path, unsent, finished: false }
        })
        .collect();
    MultipathFlowState {
        parent: spec.id,
        size: spec.size,
        subflows,
        delivered: ByteRanges::new(),
        shift_period,
    }
}

impl MultipathFlowState {
    pub fn record_delivery(&mut self, start: u64, end: u64) {
        self.delivered.insert(start, end.min(self.size));
    }

    pub fn is_complete(&self) -> bool {
        self.delivered.covers(0, self.size)
    }

    pub fn unsent_bytes(&self) -> u64 {
        self.subflows.iter().map(Subflow::unsent_bytes).sum()
    }

    fn least_loaded(&self, sending_only: bool) -> Option<usize> {
        (0..self.subflows.len())
            .filter(|&k| {
                let s = &self.subflows[k];
                !s.finished && (!sending_only || !s.state.is_paused())
            })
            .min_by_key(|&k| (self.subflows[k].unsent_bytes(), k))
    }

    /// Moves unsent bytes of paused subflows to the sending subflow with the
    /// least unsent load. Returns the subflows emptied (and so terminated).
    pub fn shift_load(&mut self) -> Vec<usize> {
        let mut emptied = Vec::new();
        if self.subflows.len() < 2 {
            return emptied;
        }
        for k in 0..self.subflows.len() {
            let s = &self.subflows[k];
            if s.finished || !s.state.is_paused() || s.unsent.is_empty() {
                continue;
            }
            let Some(target) = self.least_loaded(true) else {
                break;
            };
            let moved = std::mem::take(&mut self.subflows[k].unsent);
            let n: u64 = range_bytes(&moved);
            let t = &mut self.subflows[target];
            t.unsent.extend(moved);
            let size = t.state.size + n;
            let unsent = t.unsent_bytes();
            t.state.resize(size, unsent);
            let s = &mut self.subflows[k];
            s.state.set_remaining(0);
            s.finished = true;
            emptied.push(k);
        }
        emptied
    }

    /// Hands lost bytes back for sending: to `owner` unless it has finished,
    /// otherwise to the least loaded live subflow, reopening `owner` if none
    /// is left. Returns the subflow that took them.
    pub fn reroute(&mut self, owner: usize, start: u64, end: u64) -> usize {
        let k = if !self.subflows[owner].finished {
            owner
        } else if let Some(k) = self.least_loaded(false) {
            k
        } else {
            self.subflows[owner].finished = false;
            owner
        };
        let s = &mut self.subflows[k];
        s.unsent.push_front((start, end));
        s.sync_remaining();
        k
    }
}
