//! Controller-side slicing gateway: validates northbound requests against
//! its registry mirror and forwards accepted ones to the cell agent.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::sync::mpsc::{Receiver, Sender};

use serde::{Deserialize, Serialize};

use super::registry::{ControlError, SliceCommand, SliceRegistry};
use super::stats::StatsReport;
use crate::radio::{Rnti, SliceDescriptor, SliceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlicingMode {
    /// One implicit pool, no slice management.
    Baseline,
    Sliced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Northbound,
    Timeline,
    Autoscale,
    Replay,
}

/// Southbound configuration message. Bodies use the northbound JSON shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "body", rename_all = "snake_case")]
pub enum ConfigMessage {
    CreateSlice(SliceDescriptor),
    UpdateSlice(SliceDescriptor),
    DeleteSlice { slice_id: SliceId },
    RelocateUe { rnti: Rnti, slice_id: SliceId },
}

impl From<SliceCommand> for ConfigMessage {
    fn from(c: SliceCommand) -> Self {
        match c {
            SliceCommand::Create { descriptor } => ConfigMessage::CreateSlice(descriptor),
            SliceCommand::Update { descriptor } => ConfigMessage::UpdateSlice(descriptor),
            SliceCommand::Delete { slice_id } => ConfigMessage::DeleteSlice { slice_id },
        }
    }
}

impl ConfigMessage {
    pub fn as_slice_command(&self) -> Option<SliceCommand> {
        match self {
            ConfigMessage::CreateSlice(d) => Some(SliceCommand::Create { descriptor: d.clone() }),
            ConfigMessage::UpdateSlice(d) => Some(SliceCommand::Update { descriptor: d.clone() }),
            ConfigMessage::DeleteSlice { slice_id } => Some(SliceCommand::Delete { slice_id: *slice_id }),
            ConfigMessage::RelocateUe { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub origin: Origin,
    pub message: ConfigMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeInfo {
    pub rnti: Rnti,
    pub imsi: String,
    pub slice_id: Option<SliceId>,
    pub cqi_dl: u8,
    pub cqi_ul: u8,
    pub control_priority_flag: bool,
}

/// Row of `GET /ues`: static attributes plus the last reported queue depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSummary {
    #[serde(flatten)]
    pub info: UeInfo,
    pub dl_queue_bytes: u64,
    pub ul_queue_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ack {
    Queued,
    /// Accepted with nothing to do, e.g. relocation to the current slice.
    Unchanged,
}

const HISTORY_LIMIT: usize = 6000;

pub struct Gateway {
    mode: SlicingMode,
    registry: SliceRegistry,
    ues: BTreeMap<Rnti, UeInfo>,
    outbox: Sender<Envelope>,
    stats_inbox: Receiver<StatsReport>,
    history: VecDeque<StatsReport>,
}

impl Gateway {
    pub fn new(
        mode: SlicingMode,
        registry: SliceRegistry,
        ues: Vec<UeInfo>,
        outbox: Sender<Envelope>,
        stats_inbox: Receiver<StatsReport>,
    ) -> Self {
        Gateway {
            mode,
            registry,
            ues: ues.into_iter().map(|u| (u.rnti, u)).collect(),
            outbox,
            stats_inbox,
            history: VecDeque::new(),
        }
    }

    pub fn mode(&self) -> SlicingMode {
        self.mode
    }

    pub fn registry(&self) -> &SliceRegistry {
        &self.registry
    }

    pub fn slices(&self) -> Vec<SliceDescriptor> {
        self.registry.to_vec()
    }

    pub fn bindings(&self) -> BTreeMap<Rnti, Option<SliceId>> {
        self.ues.iter().map(|(r, u)| (*r, u.slice_id)).collect()
    }

    pub fn ues(&self) -> Vec<UeSummary> {
        let latest = self.history.back();
        self.ues
            .values()
            .map(|info| {
                let q = latest.and_then(|r| r.ue(info.rnti));
                UeSummary {
                    info: info.clone(),
                    dl_queue_bytes: q.map_or(0, |u| u.dl_queue_bytes),
                    ul_queue_bytes: q.map_or(0, |u| u.ul_queue_bytes),
                }
            })
            .collect()
    }

    pub fn apply_slice_command(&mut self, origin: Origin, command: SliceCommand) -> Result<Ack, ControlError> {
        if self.mode == SlicingMode::Baseline {
            return Err(ControlError::SlicingDisabled);
        }
        let bindings = self.bindings();
        self.registry.apply(&command, &bindings)?;
        self.send(origin, command.into());
        Ok(Ack::Queued)
    }

    pub fn relocate_ue(&mut self, origin: Origin, rnti: Rnti, slice_id: SliceId) -> Result<Ack, ControlError> {
        if self.mode == SlicingMode::Baseline {
            return Err(ControlError::SlicingDisabled);
        }
        if !self.ues.contains_key(&rnti) {
            return Err(ControlError::UnknownRnti(rnti));
        }
        if !self.registry.contains(slice_id) {
            return Err(ControlError::UnknownSliceId(slice_id));
        }
        let ue = self.ues.get_mut(&rnti).expect("checked above");
        if ue.slice_id == Some(slice_id) {
            return Ok(Ack::Unchanged);
        }
        ue.slice_id = Some(slice_id);
        self.send(origin, ConfigMessage::RelocateUe { rnti, slice_id });
        Ok(Ack::Queued)
    }

    /// Validates and forwards any message; used for replayed logs.
    pub fn submit(&mut self, origin: Origin, message: ConfigMessage) -> Result<Ack, ControlError> {
        match message {
            ConfigMessage::RelocateUe { rnti, slice_id } => self.relocate_ue(origin, rnti, slice_id),
            other => {
                let cmd = other.as_slice_command().expect("slice message");
                self.apply_slice_command(origin, cmd)
            }
        }
    }

    fn send(&self, origin: Origin, message: ConfigMessage) {
        // A closed channel means the agent is gone; the request is moot.
        let _ = self.outbox.send(Envelope { origin, message });
    }

    /// Pulls reports pushed by the agent into the history.
    pub fn poll_stats(&mut self) -> usize {
        let mut n = 0;
        while let Ok(r) = self.stats_inbox.try_recv() {
            self.history.push_back(r);
            n += 1;
        }
        while self.history.len() > HISTORY_LIMIT {
            self.history.pop_front();
        }
        n
    }

    pub fn history(&self) -> &VecDeque<StatsReport> {
        &self.history
    }

    /// Merged report over the most recent `window_s` seconds of history.
    pub fn stats_window(&self, window_s: f64) -> Option<StatsReport> {
        let last = self.history.back()?;
        let from = last.window_end - window_s;
        let parts: Vec<StatsReport> = self
            .history
            .iter()
            .filter(|r| r.window_start >= from - 1e-9)
            .cloned()
            .collect();
        StatsReport::merge(&parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::RbAvailability;
    use std::sync::mpsc;

    fn desc(id: u32, share: f64) -> SliceDescriptor {
        SliceDescriptor {
            slice_id: SliceId(id),
            label: format!("s{id}"),
            dl_share: share,
            ul_share: share,
            priority: 0,
            rb_availability: RbAvailability::Low,
        }
    }

    fn ue(rnti: u16, slice: u32) -> UeInfo {
        UeInfo {
            rnti: Rnti(rnti),
            imsi: "001010000000001".into(),
            slice_id: Some(SliceId(slice)),
            cqi_dl: 15,
            cqi_ul: 15,
            control_priority_flag: false,
        }
    }

    fn gateway(mode: SlicingMode) -> (Gateway, Receiver<Envelope>) {
        let (tx, rx) = mpsc::channel();
        let (_stx, srx) = mpsc::channel();
        let reg = SliceRegistry::from_slices(&[desc(1, 0.05), desc(2, 0.95)]).unwrap();
        (Gateway::new(mode, reg, vec![ue(2838, 1)], tx, srx), rx)
    }

    #[test]
    fn relocation_is_queued_once() {
        let (mut gw, rx) = gateway(SlicingMode::Sliced);
        assert_eq!(gw.relocate_ue(Origin::Northbound, Rnti(2838), SliceId(2)), Ok(Ack::Queued));
        assert_eq!(gw.relocate_ue(Origin::Northbound, Rnti(2838), SliceId(2)), Ok(Ack::Unchanged));
        let msgs: Vec<Envelope> = rx.try_iter().collect();
        assert_eq!(msgs.len(), 1);
        assert_eq!(
            msgs[0].message,
            ConfigMessage::RelocateUe {
                rnti: Rnti(2838),
                slice_id: SliceId(2)
            }
        );
    }

    #[test]
    fn relocation_errors() {
        let (mut gw, rx) = gateway(SlicingMode::Sliced);
        assert_eq!(
            gw.relocate_ue(Origin::Northbound, Rnti(9999), SliceId(2)),
            Err(ControlError::UnknownRnti(Rnti(9999)))
        );
        assert_eq!(
            gw.relocate_ue(Origin::Northbound, Rnti(2838), SliceId(7)),
            Err(ControlError::UnknownSliceId(SliceId(7)))
        );
        assert!(rx.try_recv().is_err());
    }

    #[test]
    fn baseline_rejects_slicing() {
        let (mut gw, _rx) = gateway(SlicingMode::Baseline);
        let err = gw
            .apply_slice_command(Origin::Northbound, SliceCommand::Delete { slice_id: SliceId(2) })
            .unwrap_err();
        assert_eq!(err, ControlError::SlicingDisabled);
    }

    #[test]
    fn delete_checks_mirror_bindings() {
        let (mut gw, _rx) = gateway(SlicingMode::Sliced);
        let err = gw
            .apply_slice_command(Origin::Northbound, SliceCommand::Delete { slice_id: SliceId(1) })
            .unwrap_err();
        assert!(matches!(err, ControlError::SliceNonEmpty { .. }));
        gw.relocate_ue(Origin::Northbound, Rnti(2838), SliceId(2)).unwrap();
        gw.apply_slice_command(Origin::Northbound, SliceCommand::Delete { slice_id: SliceId(1) })
            .unwrap();
    }

    #[test]
    fn message_json_shape() {
        let m = ConfigMessage::RelocateUe {
            rnti: Rnti(2838),
            slice_id: SliceId(2),
        };
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v, serde_json::json!({"op": "relocate_ue", "body": {"rnti": 2838, "slice_id": 2}}));
    }
}
