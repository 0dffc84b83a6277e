//! Deterministic simulator of a slicing-enabled private 4G/5G cell.

// Validation uses `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod control;
pub mod radio;
pub mod rng;
pub mod sim;
pub mod time;

pub use control::{ControlError, SliceCommand, SliceRegistry, StatsReport, TelemetryFrame};
pub use radio::{CellConfig, Direction, Rnti, SliceDescriptor, SliceId, UeContext};
pub use sim::{run_scenario, Report, ScenarioConfig};
pub use time::SimTime;
