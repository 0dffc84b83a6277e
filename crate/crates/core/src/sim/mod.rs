//! Scenario configuration, the event-driven engine, reports and live mode.

pub mod config;
pub mod engine;
pub mod event_queue;
pub mod live;
pub mod presets;
pub mod report;

pub use config::{AppBinding, CellSpec, ConfigError, RobotAppConfig, ScenarioConfig, TimelineAction, TimelineEntry, UeConfig};
pub use engine::{replay_scenario, run_scenario, Engine, RunOptions};
pub use event_queue::{EventClass, EventQueue};
pub use live::{LiveControl, LiveError, LiveOutcome, LiveSession, LiveSnapshot};
pub use presets::{preset, PRESET_NAMES};
pub use report::{compare_runs, percentile, AuditKind, AuditViolation, CompareError, Comparison, Percentiles, Report};
