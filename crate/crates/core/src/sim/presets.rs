//! Shipped scenarios reproducing the two demonstration runs.

use super::config::{AppBinding, CellSpec, ScenarioConfig, TimelineAction, TimelineEntry, UeConfig};
use crate::apps::{EventSourceConfig, VideoParams};
use crate::control::{AutoscalePolicy, SlicingMode};
use crate::radio::{LinkImpairment, RbAvailability, Rnti, SliceDescriptor, SliceId, UnallocatedPrbs};

pub const PRESET_NAMES: [&str; 2] = ["paper-baseline", "paper-sliced"];

pub const ROBOT_RNTI: Rnti = Rnti(1025);
pub const OPERATOR_RNTI: Rnti = Rnti(1026);
pub const VIDEO_RNTI: Rnti = Rnti(2838);

pub const CONTROL_SLICE: SliceId = SliceId(1);
pub const DATA_SLICE: SliceId = SliceId(2);

pub const RELOCATION_TIME_S: f64 = 30.0;

fn ue(rnti: Rnti, imsi: &str, app: AppBinding, slice_id: Option<SliceId>, control: bool) -> UeConfig {
    UeConfig {
        rnti,
        imsi: imsi.into(),
        app,
        slice_id,
        cqi_dl: 15,
        cqi_ul: 15,
        control_priority_flag: control,
    }
}

fn demo_ues(slice: Option<SliceId>) -> Vec<UeConfig> {
    vec![
        ue(ROBOT_RNTI, "208950000000001", AppBinding::Robot, slice, true),
        ue(OPERATOR_RNTI, "208950000000002", AppBinding::EventOperator, slice, true),
        ue(VIDEO_RNTI, "208950000000003", AppBinding::Video, slice, false),
    ]
}

fn common(name: &str, mode: SlicingMode) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        mode,
        duration_s: 60.0,
        seed: 20_190_415,
        cell: CellSpec::preset("lte10"),
        baseline_share: 1.0,
        unallocated_prbs: UnallocatedPrbs::Lend,
        stats_period_s: 0.1,
        link: LinkImpairment::default(),
        slices: Vec::new(),
        ues: Vec::new(),
        timeline: Vec::new(),
        robot: Default::default(),
        event: EventSourceConfig::default(),
        video: VideoParams::default(),
        autoscale: AutoscalePolicy::default(),
    }
}

/// All UEs share the control slice's 5% of the grid with control traffic
/// strictly first; the rest of the grid stays reserved.
pub fn paper_baseline() -> ScenarioConfig {
    let mut c = common("paper-baseline", SlicingMode::Baseline);
    c.baseline_share = 0.05;
    c.unallocated_prbs = UnallocatedPrbs::Reserve;
    c.ues = demo_ues(None);
    c
}

/// Control slice (5%, high availability) and data slice (95%); the video
/// UE moves to the data slice at 30 s.
pub fn paper_sliced() -> ScenarioConfig {
    let mut c = common("paper-sliced", SlicingMode::Sliced);
    c.slices = vec![
        SliceDescriptor {
            slice_id: CONTROL_SLICE,
            label: "control".into(),
            dl_share: 0.05,
            ul_share: 0.05,
            priority: 10,
            rb_availability: RbAvailability::High,
        },
        SliceDescriptor {
            slice_id: DATA_SLICE,
            label: "data".into(),
            dl_share: 0.95,
            ul_share: 0.95,
            priority: 1,
            rb_availability: RbAvailability::Low,
        },
    ];
    c.ues = demo_ues(Some(CONTROL_SLICE));
    c.timeline = vec![TimelineEntry {
        t: RELOCATION_TIME_S,
        action: TimelineAction::RelocateUe {
            rnti: VIDEO_RNTI,
            slice_id: DATA_SLICE,
        },
    }];
    c
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "paper-baseline" => Some(paper_baseline()),
        "paper-sliced" => Some(paper_sliced()),
        _ => None,
    }
}
