use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::engine::packet::PacketKind;
use crate::ids::{LinkId, NodeId};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub rate_bps: f64,
    pub propagation: SimTime,
    pub processing: SimTime,
    pub queue_capacity: u64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            rate_bps: 1e9,
            propagation: SimTime::from_nanos(100),
            processing: SimTime::from_micros(25),
            queue_capacity: 4_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCounters {
    pub injected_bytes: u64,
    pub delivered_bytes: u64,
    pub dropped_bytes: u64,
    /// Tail drops.
    pub drop_count: u64,
    /// Random (modeled) losses.
    pub loss_count: u64,
    pub probe_count: u64,
    pub data_packets: u64,
    pub max_queue_bytes: u64,
}

impl LinkCounters {
    pub fn in_flight_bytes(&self) -> u64 {
        self.injected_bytes - self.delivered_bytes - self.dropped_bytes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Enqueued {
        tx_start: SimTime,
        tx_end: SimTime,
        /// When the packet reaches the far end, including propagation and processing.
        arrival: SimTime,
    },
    Dropped,
}

/// A directed link with a single FIFO tail-drop output queue.
///
/// Transmission is computed analytically at enqueue time: a FIFO server
/// with a fixed rate starts each packet when the previous one leaves, so
/// the departure instant of every admitted packet is known up front. The
/// queue only tracks packets not yet fully serialized, for occupancy.
#[derive(Clone, Debug)]
pub struct Link {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    pub params: LinkParams,
    backlog: VecDeque<(SimTime, u32, bool)>,
    backlog_bytes: u64,
    backlog_data: u64,
    /// Most DATA packets queued at once since the last [`Link::take_data_peak`].
    data_peak: u64,
    busy_until: SimTime,
    pub counters: LinkCounters,
}

impl Link {
    pub fn new(id: LinkId, src: NodeId, dst: NodeId, params: LinkParams) -> Link {
        Link {
            id,
            src,
            dst,
            params,
            backlog: VecDeque::new(),
            backlog_bytes: 0,
            backlog_data: 0,
            data_peak: 0,
            busy_until: SimTime::ZERO,
            counters: LinkCounters::default(),
        }
    }

    fn drain(&mut self, now: SimTime) {
        while let Some(&(tx_end, size, data)) = self.backlog.front() {
            if tx_end > now {
                break;
            }
            self.backlog.pop_front();
            self.backlog_bytes -= size as u64;
            self.backlog_data -= data as u64;
        }
    }

    /// Bytes waiting or in service at `now`.
    pub fn occupancy(&mut self, now: SimTime) -> u64 {
        self.drain(now);
        self.backlog_bytes
    }

    /// Bytes waiting behind the packet currently being serialized.
    pub fn waiting_bytes(&mut self, now: SimTime) -> u64 {
        self.drain(now);
        self.backlog_bytes - self.backlog.front().map_or(0, |&(_, size, _)| size as u64)
    }

    pub fn queued_packets(&mut self, now: SimTime) -> usize {
        self.drain(now);
        self.backlog.len()
    }

    /// DATA packets waiting or in service at `now`.
    pub fn queued_data_packets(&mut self, now: SimTime) -> u64 {
        self.drain(now);
        self.backlog_data
    }

    /// Returns the DATA-packet peak since the previous call and restarts it
    /// from the current backlog.
    pub fn take_data_peak(&mut self, now: SimTime) -> u64 {
        self.drain(now);
        std::mem::replace(&mut self.data_peak, self.backlog_data)
    }

    /// Offers a packet of `size` bytes to the queue.
    pub fn enqueue(&mut self, size: u32, kind: PacketKind, now: SimTime) -> EnqueueOutcome {
        assert!(size > 0, "zero-size packet");
        self.drain(now);
        self.counters.injected_bytes += size as u64;
        let data = kind == PacketKind::Data;
        match kind {
            PacketKind::Data => self.counters.data_packets += 1,
            PacketKind::Probe => self.counters.probe_count += 1,
            _ => {}
        }
        if self.backlog_bytes + size as u64 > self.params.queue_capacity {
            self.counters.drop_count += 1;
            self.counters.dropped_bytes += size as u64;
            return EnqueueOutcome::Dropped;
        }
        let tx_start = now.max(self.busy_until);
        let tx_end = tx_start + SimTime::transmission(size as u64, self.params.rate_bps);
        self.busy_until = tx_end;
        self.backlog.push_back((tx_end, size, data));
        self.backlog_bytes += size as u64;
        self.backlog_data += data as u64;
        self.data_peak = self.data_peak.max(self.backlog_data);
        self.counters.max_queue_bytes = self.counters.max_queue_bytes.max(self.backlog_bytes);
        EnqueueOutcome::Enqueued {
            tx_start,
            tx_end,
            arrival: tx_end + self.params.propagation + self.params.processing,
        }
    }

    /// Records a packet lost before entering the queue.
    pub fn record_loss(&mut self, size: u32) {
        self.counters.injected_bytes += size as u64;
        self.counters.dropped_bytes += size as u64;
        self.counters.loss_count += 1;
    }

    pub fn record_delivery(&mut self, size: u32) {
        self.counters.delivered_bytes += size as u64;
        debug_assert!(
            self.counters.delivered_bytes + self.counters.dropped_bytes <= self.counters.injected_bytes
        );
    }
}

/// Fraction of a link's capacity consumed by `bytes` sent every `interval`.
pub fn bandwidth_share(bytes: u64, interval: SimTime, rate_bps: f64) -> f64 {
    bytes as f64 * 8.0 / interval.as_secs_f64() / rate_bps
}
