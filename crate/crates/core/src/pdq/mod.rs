//! PDQ sender, receiver and switch logic.

pub mod criticality;
pub mod header;
pub mod sender;
pub mod switch;

pub use criticality::{compare_criticality, CriticalityMode, FlowSummary};
pub use header::{receiver_on_data, SchedulingHeader};
pub use sender::{SenderFlowState, Termination};
pub use switch::{DataVerdict, ListCapacity, SwitchFlowEntry, SwitchLinkState, SwitchParams};
