//! Scenario configuration files.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apps::{ControllerGains, EventSourceConfig, PathGeometry, PathSpec, Pose, RobotGeometry, VideoParams};
use crate::control::{AutoscalePolicy, SliceRegistry, SlicingMode};
use crate::radio::{valid_imsi, CellConfig, CellError, CqiTable, LinkImpairment, Rnti, SliceDescriptor, SliceId, UnallocatedPrbs};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid cell: {0}")]
    Cell(#[from] CellError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Either a named preset (`lte10`, `nr80`) or explicit values. Explicit
/// fields override the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcarrier_spacing_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prb_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tti_duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cqi_table: Option<Vec<u32>>,
}

impl CellSpec {
    pub fn preset(name: &str) -> Self {
        CellSpec {
            preset: Some(name.into()),
            ..Default::default()
        }
    }

    pub fn resolve(&self) -> Result<CellConfig, ConfigError> {
        let base = match &self.preset {
            Some(name) => Some(CellConfig::preset(name)?),
            None => None,
        };
        let bw = self
            .bandwidth_hz
            .or(base.as_ref().map(|b| b.bandwidth_hz))
            .ok_or_else(|| invalid("cell needs a preset or bandwidth_hz"))?;
        let scs = self
            .subcarrier_spacing_hz
            .or(base.as_ref().map(|b| b.subcarrier_spacing_hz))
            .ok_or_else(|| invalid("cell needs a preset or subcarrier_spacing_hz"))?;
        let explicit_grid = self.bandwidth_hz.is_some() || self.subcarrier_spacing_hz.is_some();
        let prb = self
            .prb_count
            .or(if explicit_grid { None } else { base.as_ref().map(|b| b.prb_count) });
        let tti = self
            .tti_duration_s
            .or(base.as_ref().map(|b| b.tti_duration_s))
            .unwrap_or(1e-3);
        let table = match &self.cqi_table {
            Some(t) => CqiTable::new(t.clone())?,
            None => base.map(|b| b.cqi_table).unwrap_or_else(CqiTable::linear_default),
        };
        Ok(CellConfig::new(bw, scs, prb, tti, table)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppBinding {
    /// Path-controlled robot: feedback uplink, commands downlink.
    Robot,
    /// Uplink actuation commands with a delivery deadline.
    EventOperator,
    /// Downlink constant-bitrate video.
    Video,
    /// Attached but silent.
    None,
}

fn default_cqi() -> u8 {
    15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub rnti: Rnti,
    pub imsi: String,
    pub app: AppBinding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_id: Option<SliceId>,
    #[serde(default = "default_cqi")]
    pub cqi_dl: u8,
    #[serde(default = "default_cqi")]
    pub cqi_ul: u8,
    #[serde(default)]
    pub control_priority_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineAction {
    RelocateUe { rnti: Rnti, slice_id: SliceId },
    CreateSlice { slice: SliceDescriptor },
    UpdateSlice { slice: SliceDescriptor },
    DeleteSlice { slice_id: SliceId },
    EnableAutoscale {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy: Option<AutoscalePolicy>,
    },
    DisableAutoscale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineEntry {
    pub t: f64,
    pub action: TimelineAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotAppConfig {
    pub control_period_s: f64,
    pub physics_dt_s: f64,
    pub geometry: RobotGeometry,
    pub gains: ControllerGains,
    pub path: PathSpec,
    /// Defaults to the start of the path, aligned with it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_pose: Option<Pose>,
}

impl Default for RobotAppConfig {
    fn default() -> Self {
        RobotAppConfig {
            control_period_s: 0.02,
            physics_dt_s: 1e-3,
            geometry: RobotGeometry::default(),
            gains: ControllerGains::default(),
            path: PathSpec {
                geometry: PathGeometry::Circle {
                    center: [0.0, 0.0],
                    radius: 1.5,
                    clockwise: false,
                },
                cruise_speed: 0.2,
            },
            initial_pose: None,
        }
    }
}

impl RobotAppConfig {
    pub fn start_pose(&self) -> Pose {
        if let Some(p) = self.initial_pose {
            return p;
        }
        match &self.path.geometry {
            PathGeometry::StraightLine { origin, direction } => {
                Pose::new(origin[0], origin[1], direction[1].atan2(direction[0]))
            }
            PathGeometry::Circle {
                center,
                radius,
                clockwise,
            } => {
                let heading = if *clockwise {
                    -std::f64::consts::FRAC_PI_2
                } else {
                    std::f64::consts::FRAC_PI_2
                };
                Pose::new(center[0] + radius, center[1], heading)
            }
            PathGeometry::Waypoints { points, .. } => {
                let (a, b) = (points[0], points[1]);
                Pose::new(a[0], a[1], (b[1] - a[1]).atan2(b[0] - a[0]))
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.control_period_s > 0.0) {
            return Err("robot.control_period_s must be positive".into());
        }
        if !(self.physics_dt_s > 0.0 && self.physics_dt_s <= self.control_period_s) {
            return Err("robot.physics_dt_s must lie in (0, control_period_s]".into());
        }
        self.geometry.validate()?;
        self.gains.validate()?;
        self.path.validate()
    }
}

fn default_baseline_share() -> f64 {
    1.0
}

fn default_stats_period() -> f64 {
    0.1
}

fn default_unallocated() -> UnallocatedPrbs {
    UnallocatedPrbs::Lend
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub mode: SlicingMode,
    pub duration_s: f64,
    pub seed: u64,
    pub cell: CellSpec,
    /// Share of the grid held by the implicit pool in baseline mode.
    #[serde(default = "default_baseline_share")]
    pub baseline_share: f64,
    #[serde(default = "default_unallocated")]
    pub unallocated_prbs: UnallocatedPrbs,
    #[serde(default = "default_stats_period")]
    pub stats_period_s: f64,
    #[serde(default)]
    pub link: LinkImpairment,
    #[serde(default)]
    pub slices: Vec<SliceDescriptor>,
    #[serde(default)]
    pub ues: Vec<UeConfig>,
    #[serde(default)]
    pub timeline: Vec<TimelineEntry>,
    #[serde(default)]
    pub robot: RobotAppConfig,
    #[serde(default)]
    pub event: EventSourceConfig,
    #[serde(default)]
    pub video: VideoParams,
    #[serde(default)]
    pub autoscale: AutoscalePolicy,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Loads TOML, or JSON when the extension is `.json`, and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is representable in TOML")
    }

    pub fn stats_period_ttis(&self, cell: &CellConfig) -> u64 {
        (self.stats_period_s / cell.tti_duration_s).round().max(1.0) as u64
    }

    pub fn validate(&self) -> Result<CellConfig, ConfigError> {
        let cell = self.cell.resolve()?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid(format!("duration_s must be positive, got {}", self.duration_s)));
        }
        let ratio = self.stats_period_s / cell.tti_duration_s;
        if !(ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-6) {
            return Err(invalid("stats_period_s must be a positive multiple of the TTI"));
        }
        if !(self.baseline_share > 0.0 && self.baseline_share <= 1.0) {
            return Err(invalid("baseline_share must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.link.loss_p) {
            return Err(invalid("link.loss_p must lie in [0, 1)"));
        }
        if !(self.link.processing_delay_s >= 0.0 && self.link.processing_delay_s.is_finite()) {
            return Err(invalid("link.processing_delay_s must be non-negative"));
        }
        self.autoscale.validate().map_err(invalid)?;

        let registry = match self.mode {
            SlicingMode::Baseline => {
                if !self.slices.is_empty() {
                    return Err(invalid("baseline mode forbids slice definitions"));
                }
                SliceRegistry::default()
            }
            SlicingMode::Sliced => {
                SliceRegistry::from_slices(&self.slices).map_err(|e| invalid(format!("slices: {e}")))?
            }
        };

        let mut seen = BTreeSet::new();
        for ue in &self.ues {
            if !seen.insert(ue.rnti) {
                return Err(invalid(format!("duplicate rnti {}", ue.rnti)));
            }
            if !valid_imsi(&ue.imsi) {
                return Err(invalid(format!("rnti {}: imsi must be 6 to 15 digits", ue.rnti)));
            }
            if ue.cqi_dl > 15 || ue.cqi_ul > 15 {
                return Err(invalid(format!("rnti {}: cqi must lie in 0..=15", ue.rnti)));
            }
            match (self.mode, ue.slice_id) {
                (SlicingMode::Baseline, Some(_)) => {
                    return Err(invalid(format!("rnti {}: baseline mode has no slices to bind", ue.rnti)))
                }
                (SlicingMode::Sliced, None) => {
                    return Err(invalid(format!("rnti {}: sliced mode needs slice_id", ue.rnti)))
                }
                (SlicingMode::Sliced, Some(s)) if !registry.contains(s) => {
                    return Err(invalid(format!("rnti {}: unknown slice {s}", ue.rnti)))
                }
                _ => {}
            }
        }
        let uses = |app: AppBinding| self.ues.iter().any(|u| u.app == app);
        if uses(AppBinding::Robot) {
            self.robot.validate().map_err(invalid)?;
        }
        if uses(AppBinding::EventOperator) {
            self.event.validate().map_err(invalid)?;
        }
        if uses(AppBinding::Video) {
            self.video.validate().map_err(invalid)?;
        }

        for entry in &self.timeline {
            if !(entry.t >= 0.0 && entry.t <= self.duration_s) {
                return Err(invalid(format!("timeline time {} outside [0, {}]", entry.t, self.duration_s)));
            }
            match &entry.action {
                TimelineAction::EnableAutoscale { policy: Some(p) } => p.validate().map_err(invalid)?,
                TimelineAction::RelocateUe { rnti, .. } if !seen.contains(rnti) => {
                    return Err(invalid(format!("timeline relocates unknown rnti {rnti}")))
                }
                TimelineAction::RelocateUe { .. }
                | TimelineAction::CreateSlice { .. }
                | TimelineAction::UpdateSlice { .. }
                | TimelineAction::DeleteSlice { .. }
                    if self.mode == SlicingMode::Baseline =>
                {
                    return Err(invalid("baseline mode timeline cannot manage slices"))
                }
                _ => {}
            }
        }
        Ok(cell)
    }
}
