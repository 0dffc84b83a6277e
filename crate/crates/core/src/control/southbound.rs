//! Cell-side agent: applies configuration at TTI boundaries and pushes
//! periodic statistics to the controller.

use std::sync::mpsc::{Receiver, Sender};

use serde::{Deserialize, Serialize};

use super::gateway::{ConfigMessage, Envelope, Origin};
use super::registry::{ControlError, SliceRegistry};
use super::stats::{StatsReport, TelemetryBuffer};
use crate::radio::{Scheduler, UeContext};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandLogEntry {
    pub tti: u64,
    pub origin: Origin,
    pub message: ConfigMessage,
}

/// Every configuration message applied by the agent, with its TTI.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandLog {
    pub end_tti: u64,
    pub entries: Vec<CommandLogEntry>,
}

#[derive(Debug, Default)]
pub struct ExchangeOutcome {
    pub applied: Vec<Envelope>,
    pub report: Option<StatsReport>,
    /// Messages the agent could not apply; the gateway should have caught them.
    pub rejected: Vec<(Envelope, ControlError)>,
}

pub struct CellAgent {
    inbox: Receiver<Envelope>,
    outbox: Sender<StatsReport>,
    registry: SliceRegistry,
    tti_duration: SimTime,
    stats_period_ttis: u64,
    last_report_tti: u64,
    log: Vec<CommandLogEntry>,
}

impl CellAgent {
    pub fn new(
        inbox: Receiver<Envelope>,
        outbox: Sender<StatsReport>,
        registry: SliceRegistry,
        tti_duration: SimTime,
        stats_period_ttis: u64,
    ) -> Self {
        CellAgent {
            inbox,
            outbox,
            registry,
            tti_duration,
            stats_period_ttis: stats_period_ttis.max(1),
            last_report_tti: 0,
            log: Vec::new(),
        }
    }

    pub fn registry(&self) -> &SliceRegistry {
        &self.registry
    }

    pub fn stats_period_ttis(&self) -> u64 {
        self.stats_period_ttis
    }

    pub fn log(&self) -> &[CommandLogEntry] {
        &self.log
    }

    /// Runs at the boundary before TTI `tti`: pushes the report for the
    /// period just ended if one is due, then applies every pending message
    /// in arrival order.
    pub fn southbound_exchange(
        &mut self,
        tti: u64,
        telemetry: &TelemetryBuffer,
        ues: &mut [UeContext],
        scheduler: &mut Scheduler,
    ) -> ExchangeOutcome {
        let mut out = ExchangeOutcome::default();
        if tti > 0 && tti.is_multiple_of(self.stats_period_ttis) {
            out.report = self.push_stats(tti, telemetry);
        }
        while let Ok(env) = self.inbox.try_recv() {
            match self.apply(&env.message, ues, scheduler) {
                Ok(()) => {
                    self.log.push(CommandLogEntry {
                        tti,
                        origin: env.origin,
                        message: env.message.clone(),
                    });
                    out.applied.push(env);
                }
                Err(e) => out.rejected.push((env, e)),
            }
        }
        out
    }

    /// Reports `[last report, tti)` if that span is non-empty.
    pub fn push_stats(&mut self, tti: u64, telemetry: &TelemetryBuffer) -> Option<StatsReport> {
        if tti <= self.last_report_tti {
            return None;
        }
        let start = SimTime::from_nanos(self.last_report_tti * self.tti_duration.as_nanos());
        let end = SimTime::from_nanos(tti * self.tti_duration.as_nanos());
        let report = telemetry.report_stats(start, end).ok()?;
        self.last_report_tti = tti;
        // The controller may have gone away; the agent keeps running.
        let _ = self.outbox.send(report.clone());
        Some(report)
    }

    fn apply(
        &mut self,
        message: &ConfigMessage,
        ues: &mut [UeContext],
        scheduler: &mut Scheduler,
    ) -> Result<(), ControlError> {
        match message {
            ConfigMessage::RelocateUe { rnti, slice_id } => {
                if !self.registry.contains(*slice_id) {
                    return Err(ControlError::UnknownSliceId(*slice_id));
                }
                let ue = ues
                    .iter_mut()
                    .find(|u| u.rnti == *rnti)
                    .ok_or(ControlError::UnknownRnti(*rnti))?;
                ue.slice_id = Some(*slice_id);
                Ok(())
            }
            other => {
                let cmd = other.as_slice_command().expect("slice message");
                let bindings = ues.iter().map(|u| (u.rnti, u.slice_id)).collect();
                self.registry.apply(&cmd, &bindings)?;
                if let ConfigMessage::DeleteSlice { slice_id } = other {
                    scheduler.forget_slice(*slice_id);
                }
                Ok(())
            }
        }
    }
}
