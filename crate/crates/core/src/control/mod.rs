//! Slice registry, southbound agent, northbound API and autoscaling.

pub mod autoscale;
pub mod gateway;
pub mod northbound;
pub mod registry;
pub mod southbound;
pub mod stats;

pub use autoscale::{AutoscalePolicy, Autoscaler};
pub use gateway::{Ack, ConfigMessage, Envelope, Gateway, Origin, SlicingMode, UeInfo, UeSummary};
pub use northbound::{router, ApiError, ApiState, ErrorBody, ScenarioControl, ScenarioState, ScenarioStatus};
pub use registry::{ControlError, SliceCommand, SliceRegistry};
pub use southbound::{CellAgent, CommandLog, CommandLogEntry, ExchangeOutcome};
pub use stats::{DirectionStats, SliceStats, StatsError, StatsReport, TelemetryBuffer, TelemetryFrame, UeStats};
