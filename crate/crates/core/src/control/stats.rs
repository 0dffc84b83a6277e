//! Telemetry recording and windowed statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::{Direction, Rnti, SliceId, TtiAllocation, UeContext};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("window [{start}, {end}) is empty or inverted")]
    EmptyWindow { start: f64, end: f64 },
    #[error("window [{start}, {end}) is outside recorded telemetry [{recorded_from}, {recorded_until}]")]
    OutOfRange {
        start: f64,
        end: f64,
        recorded_from: f64,
        recorded_until: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SliceTtiRecord {
    start: SimTime,
    dir: Direction,
    slice_id: SliceId,
    quota: u32,
    granted: u32,
    share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct DeliveryRecord {
    at: SimTime,
    rnti: Rnti,
    dir: Direction,
    bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct UeSample {
    at: SimTime,
    rnti: Rnti,
    slice_id: Option<SliceId>,
    dl_queue_bytes: u64,
    ul_queue_bytes: u64,
}

/// Append-only per-TTI telemetry. Records must be appended in time order.
#[derive(Debug, Clone, Default)]
pub struct TelemetryBuffer {
    slices: Vec<SliceTtiRecord>,
    deliveries: Vec<DeliveryRecord>,
    ue_samples: Vec<UeSample>,
    recorded_from: SimTime,
    recorded_until: SimTime,
}

impl TelemetryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn recorded_until(&self) -> SimTime {
        self.recorded_until
    }

    /// Marks telemetry as covering up to `t` (end of the last processed TTI).
    pub fn advance_to(&mut self, t: SimTime) {
        self.recorded_until = self.recorded_until.max(t);
    }

    pub fn record_allocation(&mut self, start: SimTime, alloc: &TtiAllocation, shares: &BTreeMap<SliceId, f64>) {
        for q in &alloc.quotas {
            self.slices.push(SliceTtiRecord {
                start,
                dir: alloc.direction,
                slice_id: q.slice_id,
                quota: q.quota,
                granted: q.granted,
                share: shares.get(&q.slice_id).copied().unwrap_or(0.0),
            });
        }
    }

    pub fn record_delivery(&mut self, at: SimTime, rnti: Rnti, dir: Direction, bytes: u64) {
        self.deliveries.push(DeliveryRecord {
            at,
            rnti,
            dir,
            bits: bytes * 8,
        });
    }

    pub fn record_ues(&mut self, at: SimTime, ues: &[UeContext]) {
        for ue in ues {
            self.ue_samples.push(UeSample {
                at,
                rnti: ue.rnti,
                slice_id: ue.slice_id,
                dl_queue_bytes: ue.dl_queue_bytes,
                ul_queue_bytes: ue.ul_queue_bytes,
            });
        }
    }

    /// Drops records older than `t`; windows must then start at or after `t`.
    pub fn prune_before(&mut self, t: SimTime) {
        self.slices.retain(|r| r.start >= t);
        self.deliveries.retain(|r| r.at >= t);
        // Keep the latest sample per UE before `t` so state lookups still work.
        let mut latest_before: BTreeMap<Rnti, UeSample> = BTreeMap::new();
        for s in self.ue_samples.iter().filter(|s| s.at < t) {
            latest_before.insert(s.rnti, s.clone());
        }
        self.ue_samples.retain(|s| s.at >= t);
        let mut head: Vec<UeSample> = latest_before.into_values().collect();
        head.append(&mut self.ue_samples);
        self.ue_samples = head;
        self.recorded_from = self.recorded_from.max(t);
    }

    /// Statistics over `[start, end)`: delivered bits divided by the window
    /// length; utilisation is granted-and-used PRBs over quota.
    pub fn report_stats(&self, start: SimTime, end: SimTime) -> Result<StatsReport, StatsError> {
        if end <= start {
            return Err(StatsError::EmptyWindow {
                start: start.as_secs_f64(),
                end: end.as_secs_f64(),
            });
        }
        if start < self.recorded_from || end > self.recorded_until {
            return Err(StatsError::OutOfRange {
                start: start.as_secs_f64(),
                end: end.as_secs_f64(),
                recorded_from: self.recorded_from.as_secs_f64(),
                recorded_until: self.recorded_until.as_secs_f64(),
            });
        }
        let len_s = (end - start).as_secs_f64();

        let mut ue_state: BTreeMap<Rnti, &UeSample> = BTreeMap::new();
        let upto = self.ue_samples.partition_point(|s| s.at < end);
        for s in &self.ue_samples[..upto] {
            ue_state.insert(s.rnti, s);
        }
        let mut bits: BTreeMap<(Rnti, Direction), u64> = BTreeMap::new();
        let lo = self.deliveries.partition_point(|d| d.at < start);
        let hi = self.deliveries.partition_point(|d| d.at < end);
        for d in &self.deliveries[lo..hi] {
            *bits.entry((d.rnti, d.dir)).or_default() += d.bits;
        }

        let ues = ue_state
            .values()
            .map(|s| {
                let dl_bits = bits.get(&(s.rnti, Direction::Dl)).copied().unwrap_or(0);
                let ul_bits = bits.get(&(s.rnti, Direction::Ul)).copied().unwrap_or(0);
                UeStats {
                    rnti: s.rnti,
                    slice_id: s.slice_id,
                    dl_throughput_bps: dl_bits as f64 / len_s,
                    ul_throughput_bps: ul_bits as f64 / len_s,
                    dl_bits,
                    ul_bits,
                    dl_queue_bytes: s.dl_queue_bytes,
                    ul_queue_bytes: s.ul_queue_bytes,
                }
            })
            .collect();

        let mut per_slice: BTreeMap<SliceId, SliceStats> = BTreeMap::new();
        let lo = self.slices.partition_point(|r| r.start < start);
        let hi = self.slices.partition_point(|r| r.start < end);
        for r in &self.slices[lo..hi] {
            let entry = per_slice.entry(r.slice_id).or_insert_with(|| SliceStats::empty(r.slice_id));
            let used = u64::from(r.granted.min(r.quota));
            let dir = entry.direction_mut(r.dir);
            dir.prbs_quota += u64::from(r.quota);
            dir.prbs_used += used;
            dir.prbs_granted += u64::from(r.granted);
            dir.share = r.share;
            dir.ttis += 1;
        }
        let slices = per_slice
            .into_values()
            .map(|mut s| {
                s.finish();
                s
            })
            .collect();

        Ok(StatsReport {
            window_start: start.as_secs_f64(),
            window_end: end.as_secs_f64(),
            ues,
            slices,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeStats {
    pub rnti: Rnti,
    pub slice_id: Option<SliceId>,
    pub dl_throughput_bps: f64,
    pub ul_throughput_bps: f64,
    pub dl_bits: u64,
    pub ul_bits: u64,
    pub dl_queue_bytes: u64,
    pub ul_queue_bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub utilization: f64,
    pub prbs_used: u64,
    pub prbs_quota: u64,
    pub prbs_granted: u64,
    /// Configured share at the end of the window.
    pub share: f64,
    pub ttis: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub slice_id: SliceId,
    pub dl: DirectionStats,
    pub ul: DirectionStats,
}

impl SliceStats {
    fn empty(slice_id: SliceId) -> Self {
        SliceStats {
            slice_id,
            dl: DirectionStats::default(),
            ul: DirectionStats::default(),
        }
    }

    pub fn direction(&self, dir: Direction) -> &DirectionStats {
        match dir {
            Direction::Dl => &self.dl,
            Direction::Ul => &self.ul,
        }
    }

    fn direction_mut(&mut self, dir: Direction) -> &mut DirectionStats {
        match dir {
            Direction::Dl => &mut self.dl,
            Direction::Ul => &mut self.ul,
        }
    }

    fn finish(&mut self) {
        for d in [&mut self.dl, &mut self.ul] {
            d.utilization = if d.prbs_quota == 0 {
                0.0
            } else {
                d.prbs_used as f64 / d.prbs_quota as f64
            };
        }
    }

    /// The busier of the two directions.
    pub fn peak_utilization(&self) -> f64 {
        self.dl.utilization.max(self.ul.utilization)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub window_start: f64,
    pub window_end: f64,
    pub ues: Vec<UeStats>,
    pub slices: Vec<SliceStats>,
}

impl StatsReport {
    pub fn window_len(&self) -> f64 {
        self.window_end - self.window_start
    }

    pub fn ue(&self, rnti: Rnti) -> Option<&UeStats> {
        self.ues.iter().find(|u| u.rnti == rnti)
    }

    pub fn slice(&self, id: SliceId) -> Option<&SliceStats> {
        self.slices.iter().find(|s| s.slice_id == id)
    }

    /// Combines consecutive reports into one covering their union. UE state
    /// and shares come from the latest report.
    pub fn merge(reports: &[StatsReport]) -> Option<StatsReport> {
        let first = reports.first()?;
        let last = reports.last()?;
        let len_s = last.window_end - first.window_start;
        let mut ues: BTreeMap<Rnti, UeStats> = BTreeMap::new();
        let mut bits: BTreeMap<Rnti, (u64, u64)> = BTreeMap::new();
        let mut slices: BTreeMap<SliceId, SliceStats> = BTreeMap::new();
        for r in reports {
            for u in &r.ues {
                let b = bits.entry(u.rnti).or_default();
                b.0 += u.dl_bits;
                b.1 += u.ul_bits;
                ues.insert(u.rnti, u.clone());
            }
            for s in &r.slices {
                let e = slices.entry(s.slice_id).or_insert_with(|| SliceStats::empty(s.slice_id));
                for dir in Direction::BOTH {
                    let src = s.direction(dir);
                    let dst = e.direction_mut(dir);
                    dst.prbs_quota += src.prbs_quota;
                    dst.prbs_used += src.prbs_used;
                    dst.prbs_granted += src.prbs_granted;
                    dst.ttis += src.ttis;
                    dst.share = src.share;
                }
            }
        }
        let ues = ues
            .into_values()
            .map(|mut u| {
                let (dl, ul) = bits[&u.rnti];
                u.dl_bits = dl;
                u.ul_bits = ul;
                u.dl_throughput_bps = dl as f64 / len_s;
                u.ul_throughput_bps = ul as f64 / len_s;
                u
            })
            .collect();
        let slices = slices
            .into_values()
            .map(|mut s| {
                s.finish();
                s
            })
            .collect();
        Some(StatsReport {
            window_start: first.window_start,
            window_end: last.window_end,
            ues,
            slices,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeFrame {
    pub rnti: Rnti,
    pub slice_id: Option<SliceId>,
    pub dl_mbps: f64,
    pub ul_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceFrame {
    pub id: SliceId,
    pub util_dl: f64,
    pub util_ul: f64,
    pub share_dl: f64,
}

/// One server-pushed telemetry frame per stats period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub t: f64,
    pub per_ue: Vec<UeFrame>,
    pub per_slice: Vec<SliceFrame>,
}

impl From<&StatsReport> for TelemetryFrame {
    fn from(r: &StatsReport) -> Self {
        TelemetryFrame {
            t: r.window_end,
            per_ue: r
                .ues
                .iter()
                .map(|u| UeFrame {
                    rnti: u.rnti,
                    slice_id: u.slice_id,
                    dl_mbps: u.dl_throughput_bps / 1e6,
                    ul_mbps: u.ul_throughput_bps / 1e6,
                })
                .collect(),
            per_slice: r
                .slices
                .iter()
                .map(|s| SliceFrame {
                    id: s.slice_id,
                    util_dl: s.dl.utilization,
                    util_ul: s.ul.utilization,
                    share_dl: s.dl.share,
                })
                .collect(),
        }
    }
}
