use serde::{Deserialize, Serialize};

use crate::baselines::d3::D3Request;
use crate::ids::FlowId;
use crate::pdq::header::SchedulingHeader;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketKind {
    Syn,
    SynAck,
    Data,
    Ack,
    Probe,
    Term,
}

impl PacketKind {
    /// Kinds that travel from sender to receiver.
    pub fn is_forward(self) -> bool {
        matches!(self, PacketKind::Syn | PacketKind::Data | PacketKind::Probe | PacketKind::Term)
    }
}

/// Wire-size model for the transport.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacketSizes {
    /// Full on-wire size of a data packet.
    pub mss: u32,
    /// On-wire size of SYN/SYN-ACK/ACK/PROBE/TERM.
    pub control: u32,
    /// TCP/IP header bytes inside a data packet.
    pub base_header: u32,
    /// Scheduling header bytes inside a data packet.
    pub sched_header: u32,
}

impl Default for PacketSizes {
    fn default() -> Self {
        PacketSizes {
            mss: 1500,
            control: 40,
            base_header: 40,
            sched_header: 16,
        }
    }
}

impl PacketSizes {
    pub fn payload(&self) -> u32 {
        self.mss - self.base_header - self.sched_header
    }

    /// Wire bytes needed to carry `payload` bytes, with a short last packet.
    pub fn wire_bytes(&self, payload: u64) -> u64 {
        let per = self.payload() as u64;
        payload + payload.div_ceil(per) * (self.mss as u64 - per)
    }

    /// Ratio of wire bytes to payload bytes for full data packets.
    pub fn overhead_factor(&self) -> f64 {
        self.mss as f64 / self.payload() as f64
    }
}

/// What an ACK acknowledges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AckOf {
    Syn,
    /// The data transmission numbered `seq`.
    Data { seq: u64 },
    Probe,
    Term,
}

#[derive(Clone, Debug)]
pub struct Packet {
    pub kind: PacketKind,
    pub flow: FlowId,
    /// On-wire bytes.
    pub size: u32,
    /// Application bytes carried (data only).
    pub payload: u32,
    pub seq: u64,
    /// Offset of the payload within the parent flow's byte space.
    pub offset: u64,
    pub ack: Option<AckOf>,
    pub header: Option<SchedulingHeader>,
    pub d3: Option<D3Request>,
    /// Time the original (forward) packet left the sender; echoed on ACKs.
    pub send_time: SimTime,
    /// Index of the next link on the packet's path.
    pub hop: u16,
}

impl Packet {
    pub fn control(kind: PacketKind, flow: FlowId, size: u32, send_time: SimTime) -> Packet {
        Packet {
            kind,
            flow,
            size,
            payload: 0,
            seq: 0,
            offset: 0,
            ack: None,
            header: None,
            d3: None,
            send_time,
            hop: 0,
        }
    }
}
