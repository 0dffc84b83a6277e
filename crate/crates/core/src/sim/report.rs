//! Run reports, run comparison and CSV export.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::ScenarioConfig;
use crate::apps::{PlaybackState, StallInterval};
use crate::radio::{Direction, Rnti, SliceId};

/// Nearest-rank percentile of an unsorted sample; `None` when empty.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl Percentiles {
    pub fn of(samples: &[f64]) -> Option<Self> {
        Some(Percentiles {
            p50: percentile(samples, 50.0)?,
            p95: percentile(samples, 95.0)?,
            p99: percentile(samples, 99.0)?,
        })
    }
}

/// Per-stats-period throughput of one UE; `t` is the end of each period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSeries {
    pub rnti: Rnti,
    pub t: Vec<f64>,
    pub slice_id: Vec<Option<SliceId>>,
    pub dl_mbps: Vec<f64>,
    pub ul_mbps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotMetrics {
    pub rnti: Rnti,
    pub feedback_sent: u64,
    pub commands_delivered: u64,
    /// Feedback emission to delivery of the command answering it.
    pub rtt_ms: Vec<f64>,
    pub rtt: Option<Percentiles>,
    pub feedback_delay_ms: Vec<f64>,
    pub command_delay_ms: Vec<f64>,
    /// (time s, signed cross-track error m) at each control tick.
    pub cross_track: Vec<(f64, f64)>,
    pub rms_cross_track_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMetrics {
    pub rnti: Rnti,
    pub emitted: u64,
    pub delivered: u64,
    pub latency_ms: Vec<f64>,
    pub latency: Option<Percentiles>,
    pub deadline_s: f64,
    pub deadline_met: u64,
    /// Undelivered at the end although older than the deadline.
    pub overdue: u64,
    pub deadline_met_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub rnti: Rnti,
    pub bitrate_bps: f64,
    pub delivered_bytes: u64,
    pub goodput_bps: f64,
    pub stall_count: u32,
    pub total_stall_duration_s: f64,
    pub startup_delay_s: Option<f64>,
    pub stalls: Vec<StallInterval>,
    pub final_state: PlaybackState,
    pub final_buffer_s: f64,
}

impl VideoMetrics {
    /// Stall intervals overlapping `(from, to]`.
    pub fn stalls_in(&self, from: f64, to: f64) -> usize {
        self.stalls
            .iter()
            .filter(|s| s.start_s <= to && s.end_s.is_none_or(|e| e > from))
            .count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionShare {
    /// Mean configured share over the TTIs the slice existed.
    pub configured: f64,
    /// Mean quota over the grid size.
    pub quota: f64,
    /// Mean granted PRBs (including borrowed) over the grid size.
    pub granted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceShareReport {
    pub slice_id: SliceId,
    pub label: String,
    pub ttis: u64,
    pub dl: DirectionShare,
    pub ul: DirectionShare,
}

impl SliceShareReport {
    pub fn direction(&self, dir: Direction) -> &DirectionShare {
        match dir {
            Direction::Dl => &self.dl,
            Direction::Ul => &self.ul,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    PrbExclusivity,
    SliceBinding,
    BitsMismatch,
    WorkConservation,
    QueueConservation,
    CommandRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditViolation {
    pub tti: u64,
    pub kind: AuditKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config: ScenarioConfig,
    pub simulated_s: f64,
    pub stats_period_s: f64,
    pub prb_count: u32,
    pub throughput: Vec<UeSeries>,
    pub robots: Vec<RobotMetrics>,
    pub operators: Vec<OperatorMetrics>,
    pub videos: Vec<VideoMetrics>,
    pub slices: Vec<SliceShareReport>,
    pub audit: Vec<AuditViolation>,
}

impl Report {
    /// Canonical serialisation; identical inputs give identical bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn series(&self, rnti: Rnti) -> Option<&UeSeries> {
        self.throughput.iter().find(|s| s.rnti == rnti)
    }

    pub fn robot(&self, rnti: Rnti) -> Option<&RobotMetrics> {
        self.robots.iter().find(|r| r.rnti == rnti)
    }

    pub fn operator(&self, rnti: Rnti) -> Option<&OperatorMetrics> {
        self.operators.iter().find(|r| r.rnti == rnti)
    }

    pub fn video(&self, rnti: Rnti) -> Option<&VideoMetrics> {
        self.videos.iter().find(|r| r.rnti == rnti)
    }

    pub fn slice(&self, id: SliceId) -> Option<&SliceShareReport> {
        self.slices.iter().find(|s| s.slice_id == id)
    }

    /// Mean delivered throughput over stats periods ending in `(from, to]`.
    pub fn mean_throughput_bps(&self, rnti: Rnti, dir: Direction, from: f64, to: f64) -> Option<f64> {
        let s = self.series(rnti)?;
        let vals = match dir {
            Direction::Dl => &s.dl_mbps,
            Direction::Ul => &s.ul_mbps,
        };
        let picked: Vec<f64> = s
            .t
            .iter()
            .zip(vals)
            .filter(|(t, _)| **t > from + 1e-9 && **t <= to + 1e-9)
            .map(|(_, v)| *v)
            .collect();
        if picked.is_empty() {
            return None;
        }
        Some(picked.iter().sum::<f64>() / picked.len() as f64 * 1e6)
    }

    pub fn write_csv(&self, dir: &Path) -> Result<(), ReportIoError> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("throughput.csv"))?;
        w.write_record(["t_s", "rnti", "slice_id", "dl_mbps", "ul_mbps"])?;
        for s in &self.throughput {
            for i in 0..s.t.len() {
                w.write_record([
                    s.t[i].to_string(),
                    s.rnti.to_string(),
                    s.slice_id[i].map(|x| x.to_string()).unwrap_or_default(),
                    s.dl_mbps[i].to_string(),
                    s.ul_mbps[i].to_string(),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("rtt.csv"))?;
        w.write_record(["rnti", "sample", "rtt_ms"])?;
        for r in &self.robots {
            for (i, v) in r.rtt_ms.iter().enumerate() {
                w.write_record([r.rnti.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("cross_track.csv"))?;
        w.write_record(["rnti", "t_s", "error_m"])?;
        for r in &self.robots {
            for (t, e) in &r.cross_track {
                w.write_record([r.rnti.to_string(), t.to_string(), e.to_string()])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("event_latency.csv"))?;
        w.write_record(["rnti", "sample", "latency_ms"])?;
        for o in &self.operators {
            for (i, v) in o.latency_ms.iter().enumerate() {
                w.write_record([o.rnti.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("stalls.csv"))?;
        w.write_record(["rnti", "start_s", "end_s"])?;
        for v in &self.videos {
            for s in &v.stalls {
                w.write_record([
                    v.rnti.to_string(),
                    s.start_s.to_string(),
                    s.end_s.map(|e| e.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("slices.csv"))?;
        w.write_record([
            "slice_id",
            "label",
            "ttis",
            "dl_configured",
            "dl_quota",
            "dl_granted",
            "ul_configured",
            "ul_quota",
            "ul_granted",
        ])?;
        for s in &self.slices {
            w.write_record([
                s.slice_id.to_string(),
                s.label.clone(),
                s.ttis.to_string(),
                s.dl.configured.to_string(),
                s.dl.quota.to_string(),
                s.dl.granted.to_string(),
                s.ul.configured.to_string(),
                s.ul.quota.to_string(),
                s.ul.granted.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ReportIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("simulated durations differ: {0} s vs {1} s")]
    DurationMismatch(f64, f64),
    #[error("stats periods differ: {0} s vs {1} s")]
    StatsPeriodMismatch(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `b - a`.
    pub delta: f64,
}

/// The baseline-versus-sliced contrast, `b` relative to `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub stall_delta: i64,
    pub stall_duration_delta_s: f64,
    pub video_goodput_delta_bps: f64,
    pub rtt_p99_delta_ms: Option<f64>,
    pub rtt_tolerance_ms: f64,
    pub rtt_within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metrics: Vec<MetricDelta>,
    pub headline: Headline,
}

pub const RTT_TOLERANCE_MS: f64 = 1.0;

pub fn compare_runs(a: &Report, b: &Report) -> Result<Comparison, CompareError> {
    if (a.simulated_s - b.simulated_s).abs() > 1e-9 {
        return Err(CompareError::DurationMismatch(a.simulated_s, b.simulated_s));
    }
    if (a.stats_period_s - b.stats_period_s).abs() > 1e-12 {
        return Err(CompareError::StatsPeriodMismatch(a.stats_period_s, b.stats_period_s));
    }
    let mut metrics = Vec::new();
    let mut push = |metric: String, x: f64, y: f64| {
        metrics.push(MetricDelta {
            metric,
            a: x,
            b: y,
            delta: y - x,
        })
    };

    let (mut stalls_a, mut stalls_b) = (0i64, 0i64);
    let (mut dur_a, mut dur_b, mut gp_a, mut gp_b) = (0.0, 0.0, 0.0, 0.0);
    for va in &a.videos {
        let Some(vb) = b.video(va.rnti) else { continue };
        let r = va.rnti;
        push(format!("video.{r}.stall_count"), va.stall_count as f64, vb.stall_count as f64);
        push(
            format!("video.{r}.total_stall_duration_s"),
            va.total_stall_duration_s,
            vb.total_stall_duration_s,
        );
        push(format!("video.{r}.goodput_mbps"), va.goodput_bps / 1e6, vb.goodput_bps / 1e6);
        stalls_a += i64::from(va.stall_count);
        stalls_b += i64::from(vb.stall_count);
        dur_a += va.total_stall_duration_s;
        dur_b += vb.total_stall_duration_s;
        gp_a += va.goodput_bps;
        gp_b += vb.goodput_bps;
    }

    let mut rtt_delta: Option<f64> = None;
    for ra in &a.robots {
        let Some(rb) = b.robot(ra.rnti) else { continue };
        let r = ra.rnti;
        if let (Some(pa), Some(pb)) = (ra.rtt, rb.rtt) {
            push(format!("robot.{r}.rtt_p50_ms"), pa.p50, pb.p50);
            push(format!("robot.{r}.rtt_p95_ms"), pa.p95, pb.p95);
            push(format!("robot.{r}.rtt_p99_ms"), pa.p99, pb.p99);
            let d = pb.p99 - pa.p99;
            if rtt_delta.is_none_or(|x| d.abs() > x.abs()) {
                rtt_delta = Some(d);
            }
        }
        push(format!("robot.{r}.rms_cross_track_m"), ra.rms_cross_track_m, rb.rms_cross_track_m);
    }

    for oa in &a.operators {
        let Some(ob) = b.operator(oa.rnti) else { continue };
        let r = oa.rnti;
        push(
            format!("operator.{r}.deadline_met_fraction"),
            oa.deadline_met_fraction,
            ob.deadline_met_fraction,
        );
        if let (Some(pa), Some(pb)) = (oa.latency, ob.latency) {
            push(format!("operator.{r}.latency_p99_ms"), pa.p99, pb.p99);
        }
    }

    for sa in &a.throughput {
        let Some(sb) = b.series(sa.rnti) else { continue };
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let r = sa.rnti;
        push(format!("ue.{r}.mean_dl_mbps"), mean(&sa.dl_mbps), mean(&sb.dl_mbps));
        push(format!("ue.{r}.mean_ul_mbps"), mean(&sa.ul_mbps), mean(&sb.ul_mbps));
    }

    Ok(Comparison {
        metrics,
        headline: Headline {
            stall_delta: stalls_b - stalls_a,
            stall_duration_delta_s: dur_b - dur_a,
            video_goodput_delta_bps: gp_b - gp_a,
            rtt_p99_delta_ms: rtt_delta,
            rtt_tolerance_ms: RTT_TOLERANCE_MS,
            rtt_within_tolerance: rtt_delta.is_none_or(|d| d.abs() <= RTT_TOLERANCE_MS + 1e-9),
        },
    })
}
