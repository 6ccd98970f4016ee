//! Discrete-event plumbing: the event queue, links and packets.

pub mod event;
pub mod link;
pub mod packet;

pub use event::{Event, EventQueue};
pub use link::{EnqueueOutcome, Link, LinkCounters, LinkParams};
pub use packet::{AckOf, Packet, PacketKind, PacketSizes};
