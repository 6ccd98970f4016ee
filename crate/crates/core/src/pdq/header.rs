use thiserror::Error;

use crate::ids::NodeId;
use crate::time::SimTime;

/// Scheduling feedback carried by every PDQ packet.
///
/// All six fields travel logically in both directions; the 16-byte wire
/// form in [`SchedulingHeader::encode_forward`] and
/// [`SchedulingHeader::encode_reverse`] reuses the deadline and expected
/// transmission time slots for the inter-probe and RTT fields on ACKs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulingHeader {
    /// Bits per second.
    pub rate: f64,
    pub pause_by: Option<NodeId>,
    pub deadline: Option<SimTime>,
    pub expected_tx_time: SimTime,
    /// Probe interval in multiples of the flow RTT.
    pub inter_probe: f64,
    pub rtt: SimTime,
}

impl SchedulingHeader {
    pub fn new(rate: f64, deadline: Option<SimTime>, expected_tx_time: SimTime, rtt: SimTime) -> Self {
        SchedulingHeader {
            rate,
            pause_by: None,
            deadline,
            expected_tx_time,
            inter_probe: 1.0,
            rtt,
        }
    }

    pub fn is_paused(&self) -> bool {
        self.pause_by.is_some()
    }
}

/// Receiver side: echo the header, clamped to what the receiver can absorb.
pub fn receiver_on_data(h: &SchedulingHeader, receiver_max_rate: f64) -> SchedulingHeader {
    let mut ack = *h;
    ack.rate = ack.rate.min(receiver_max_rate);
    ack
}

pub const HEADER_BYTES: usize = 16;

const NO_DEADLINE: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("header needs {HEADER_BYTES} bytes, got {0}")]
    Length(usize),
    #[error("rate {0} bps does not fit the 32-bit kbps field")]
    RateOverflow(f64),
    #[error("{field} value {value} ns does not fit the 32-bit field")]
    TimeOverflow { field: &'static str, value: u64 },
}

fn encode_rate(rate: f64) -> Result<u32, CodecError> {
    let kbps = (rate.max(0.0) / 1e3).round();
    if kbps > u32::MAX as f64 {
        return Err(CodecError::RateOverflow(rate));
    }
    Ok(kbps as u32)
}

fn encode_pause_by(p: Option<NodeId>) -> u32 {
    // 0 is reserved for "not paused"
    p.map_or(0, |n| n.0 + 1)
}

fn decode_pause_by(v: u32) -> Option<NodeId> {
    v.checked_sub(1).map(NodeId)
}

fn micros_field(field: &'static str, t: SimTime) -> Result<u32, CodecError> {
    let us = t.as_nanos() / 1000;
    if us >= NO_DEADLINE as u64 {
        return Err(CodecError::TimeOverflow { field, value: t.as_nanos() });
    }
    Ok(us as u32)
}

fn words(buf: &[u8]) -> Result<[u32; 4], CodecError> {
    if buf.len() != HEADER_BYTES {
        return Err(CodecError::Length(buf.len()));
    }
    let mut w = [0u32; 4];
    for (i, chunk) in buf.chunks_exact(4).enumerate() {
        w[i] = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    Ok(w)
}

fn pack(w: [u32; 4]) -> [u8; HEADER_BYTES] {
    let mut out = [0u8; HEADER_BYTES];
    for (i, v) in w.iter().enumerate() {
        out[i * 4..i * 4 + 4].copy_from_slice(&v.to_be_bytes());
    }
    out
}

impl SchedulingHeader {
    /// Forward layout, big-endian: rate (kbps), pauseby (node+1, 0 = none),
    /// deadline (us, all-ones = none), expected transmission time (us).
    pub fn encode_forward(&self) -> Result<[u8; HEADER_BYTES], CodecError> {
        let deadline = match self.deadline {
            Some(d) => micros_field("deadline", d)?,
            None => NO_DEADLINE,
        };
        Ok(pack([
            encode_rate(self.rate)?,
            encode_pause_by(self.pause_by),
            deadline,
            micros_field("expected_tx_time", self.expected_tx_time)?,
        ]))
    }

    /// Reverse layout, big-endian: rate (kbps), pauseby, inter-probe
    /// (f32 bits), RTT (ns).
    pub fn encode_reverse(&self) -> Result<[u8; HEADER_BYTES], CodecError> {
        let rtt = self.rtt.as_nanos();
        if rtt > u32::MAX as u64 {
            return Err(CodecError::TimeOverflow { field: "rtt", value: rtt });
        }
        Ok(pack([
            encode_rate(self.rate)?,
            encode_pause_by(self.pause_by),
            (self.inter_probe as f32).to_bits(),
            rtt as u32,
        ]))
    }

    /// Decodes a forward header; inter-probe and RTT are not on the wire and come back as 1.0 and zero.
    pub fn decode_forward(buf: &[u8]) -> Result<SchedulingHeader, CodecError> {
        let w = words(buf)?;
        Ok(SchedulingHeader {
            rate: w[0] as f64 * 1e3,
            pause_by: decode_pause_by(w[1]),
            deadline: (w[2] != NO_DEADLINE).then(|| SimTime::from_micros(w[2] as u64)),
            expected_tx_time: SimTime::from_micros(w[3] as u64),
            inter_probe: 1.0,
            rtt: SimTime::ZERO,
        })
    }

    /// Decodes a reverse header; deadline and expected transmission time are not on the wire.
    pub fn decode_reverse(buf: &[u8]) -> Result<SchedulingHeader, CodecError> {
        let w = words(buf)?;
        Ok(SchedulingHeader {
            rate: w[0] as f64 * 1e3,
            pause_by: decode_pause_by(w[1]),
            deadline: None,
            expected_tx_time: SimTime::ZERO,
            inter_probe: f32::from_bits(w[2]) as f64,
            rtt: SimTime::from_nanos(w[3] as u64),
        })
    }
}
