//! Utilisation-watermark share rebalancing.

use serde::{Deserialize, Serialize};

use super::registry::{SliceCommand, SliceRegistry};
use super::stats::StatsReport;
use crate::radio::SliceId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoscalePolicy {
    pub enabled: bool,
    pub high_watermark: f64,
    pub low_watermark: f64,
    pub step: f64,
    pub min_share: f64,
    pub evaluation_period_s: f64,
    pub cooldown_s: f64,
}

impl Default for AutoscalePolicy {
    fn default() -> Self {
        AutoscalePolicy {
            enabled: false,
            high_watermark: 0.9,
            low_watermark: 0.5,
            step: 0.05,
            min_share: 0.02,
            evaluation_period_s: 1.0,
            cooldown_s: 5.0,
        }
    }
}

impl AutoscalePolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 <= self.low_watermark && self.low_watermark < self.high_watermark && self.high_watermark <= 1.0) {
            return Err(format!(
                "watermarks must satisfy 0 <= low < high <= 1, got low {} high {}",
                self.low_watermark, self.high_watermark
            ));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(format!("step must be in (0, 1], got {}", self.step));
        }
        if !(self.min_share >= 0.0 && self.min_share <= 1.0) {
            return Err(format!("min_share must be in [0, 1], got {}", self.min_share));
        }
        if !(self.evaluation_period_s > 0.0) {
            return Err("evaluation_period_s must be positive".into());
        }
        if !(self.cooldown_s >= 0.0) {
            return Err("cooldown_s must be non-negative".into());
        }
        Ok(())
    }
}

fn round_share(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoscaler {
    pub policy: AutoscalePolicy,
    last_shift: Option<f64>,
}

impl Autoscaler {
    pub fn new(policy: AutoscalePolicy) -> Self {
        Autoscaler {
            policy,
            last_shift: None,
        }
    }

    pub fn last_shift(&self) -> Option<f64> {
        self.last_shift
    }

    /// Mean per-slice utilisation (busier direction) over the evaluation
    /// period ending at the newest report; `None` without full coverage.
    pub fn window_utilization(&self, history: &[StatsReport]) -> Option<Vec<(SliceId, f64)>> {
        let last = history.last()?;
        let from = last.window_end - self.policy.evaluation_period_s;
        let parts: Vec<StatsReport> = history
            .iter()
            .filter(|r| r.window_start >= from - 1e-9)
            .cloned()
            .collect();
        let merged = StatsReport::merge(&parts)?;
        if merged.window_start > from + 1e-9 {
            return None;
        }
        Some(
            merged
                .slices
                .iter()
                .map(|s| (s.slice_id, s.peak_utilization()))
                .collect(),
        )
    }

    /// Evaluates the policy at the end of the newest report. At most one
    /// shift per cooldown: the donor's decrease comes first so every prefix
    /// of the returned commands is valid.
    pub fn autoscale_step(&mut self, history: &[StatsReport], registry: &SliceRegistry) -> Vec<SliceCommand> {
        if !self.policy.enabled {
            return Vec::new();
        }
        let Some(now) = history.last().map(|r| r.window_end) else {
            return Vec::new();
        };
        if let Some(t) = self.last_shift {
            if now - t < self.policy.cooldown_s - 1e-9 {
                return Vec::new();
            }
        }
        let Some(util) = self.window_utilization(history) else {
            return Vec::new();
        };
        let util: Vec<(SliceId, f64)> = util.into_iter().filter(|(id, _)| registry.contains(*id)).collect();

        let hot = util
            .iter()
            .filter(|(_, u)| *u > self.policy.high_watermark)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(id, _)| *id);
        let Some(hot) = hot else {
            return Vec::new();
        };
        let floor = self.policy.min_share.max(0.0);
        let step = self.policy.step;
        let cold = util
            .iter()
            .filter(|(id, u)| *id != hot && *u < self.policy.low_watermark)
            .filter(|(id, _)| {
                let d = registry.get(*id).expect("filtered on registry");
                d.dl_share - step >= floor - 1e-12 && d.ul_share - step >= floor - 1e-12
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(id, _)| *id);
        let Some(cold) = cold else {
            return Vec::new();
        };

        let mut donor = registry.get(cold).expect("present").clone();
        donor.dl_share = round_share(donor.dl_share - step);
        donor.ul_share = round_share(donor.ul_share - step);
        let mut taker = registry.get(hot).expect("present").clone();
        taker.dl_share = round_share(taker.dl_share + step).min(1.0);
        taker.ul_share = round_share(taker.ul_share + step).min(1.0);
        self.last_shift = Some(now);
        vec![
            SliceCommand::Update { descriptor: donor },
            SliceCommand::Update { descriptor: taker },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::stats::{DirectionStats, SliceStats};
    use crate::radio::{RbAvailability, SliceDescriptor};
    use std::collections::BTreeMap;

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

    fn dir(util: f64) -> DirectionStats {
        DirectionStats {
            utilization: util,
            prbs_used: (util * 1000.0).round() as u64,
            prbs_quota: 1000,
            prbs_granted: (util * 1000.0).round() as u64,
            share: 0.0,
            ttis: 100,
        }
    }

    fn report(t: f64, u1: f64, u2: f64) -> StatsReport {
        StatsReport {
            window_start: t,
            window_end: t + 0.1,
            ues: vec![],
            slices: vec![
                SliceStats {
                    slice_id: SliceId(1),
                    dl: dir(u1),
                    ul: dir(0.0),
                },
                SliceStats {
                    slice_id: SliceId(2),
                    dl: dir(u2),
                    ul: dir(0.0),
                },
            ],
        }
    }

    fn enabled() -> Autoscaler {
        Autoscaler::new(AutoscalePolicy {
            enabled: true,
            ..Default::default()
        })
    }

    fn history(n: usize, u1: f64, u2: f64) -> Vec<StatsReport> {
        (0..n).map(|i| report(i as f64 * 0.1, u1, u2)).collect()
    }

    #[test]
    fn hot_slice_takes_step_from_cold() {
        let reg = SliceRegistry::from_slices(&[desc(1, 0.05), desc(2, 0.95)]).unwrap();
        let mut a = enabled();
        let cmds = a.autoscale_step(&history(10, 0.98, 0.10), &reg);
        assert_eq!(cmds.len(), 2);
        let SliceCommand::Update { descriptor: d2 } = &cmds[0] else { panic!() };
        let SliceCommand::Update { descriptor: d1 } = &cmds[1] else { panic!() };
        assert_eq!((d2.slice_id, d2.dl_share, d2.ul_share), (SliceId(2), 0.9, 0.9));
        assert_eq!((d1.slice_id, d1.dl_share, d1.ul_share), (SliceId(1), 0.1, 0.1));
    }

    #[test]
    fn dead_band_emits_nothing() {
        let reg = SliceRegistry::from_slices(&[desc(1, 0.05), desc(2, 0.95)]).unwrap();
        assert!(enabled().autoscale_step(&history(10, 0.7, 0.7), &reg).is_empty());
    }

    #[test]
    fn donor_floor_binds() {
        let reg = SliceRegistry::from_slices(&[desc(1, 0.93), desc(2, 0.02)]).unwrap();
        assert!(enabled().autoscale_step(&history(10, 0.98, 0.10), &reg).is_empty());
    }

    #[test]
    fn needs_a_full_period_and_respects_cooldown() {
        let mut reg = SliceRegistry::from_slices(&[desc(1, 0.05), desc(2, 0.95)]).unwrap();
        let mut a = enabled();
        assert!(a.autoscale_step(&history(9, 0.98, 0.10), &reg).is_empty());
        let h = history(10, 0.98, 0.10);
        let b = BTreeMap::new();
        for c in a.autoscale_step(&h, &reg) {
            reg.apply(&c, &b).unwrap();
        }
        let h = history(20, 0.98, 0.10);
        assert!(a.autoscale_step(&h, &reg).is_empty());
        let h = history(60, 0.98, 0.10);
        assert_eq!(a.autoscale_step(&h, &reg).len(), 2);
    }

    #[test]
    fn disabled_is_inert() {
        let reg = SliceRegistry::from_slices(&[desc(1, 0.05), desc(2, 0.95)]).unwrap();
        let mut a = Autoscaler::new(AutoscalePolicy::default());
        assert!(a.autoscale_step(&history(10, 0.98, 0.10), &reg).is_empty());
    }
}
