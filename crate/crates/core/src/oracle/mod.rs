//! Reference schedulers and analyses used to check the protocols.

pub mod discard;
pub mod driver;
pub mod flow_level;
pub mod fluid;

pub use discard::{optimal_deadline_discard, DiscardPlan, Job};
pub use driver::{driver_analysis, CompetingFlow, DriverAnalysis};
pub use flow_level::{flow_level_simulate, FlowLevelOptions};
pub use fluid::{
    centralized_pdq_schedule, fluid_d3, fluid_edf, fluid_fair_sharing, fluid_sjf, FluidFlow, FluidSchedule,
};
