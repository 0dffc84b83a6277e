//! Operator actuation commands sent on the uplink.

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EventMode {
    Poisson { rate_hz: f64 },
    Scripted { times: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSourceConfig {
    #[serde(flatten)]
    pub mode: EventMode,
    #[serde(default = "default_command_size")]
    pub command_size_bytes: u32,
    #[serde(default = "default_deadline")]
    pub deadline_s: f64,
}

fn default_command_size() -> u32 {
    64
}

fn default_deadline() -> f64 {
    0.05
}

impl Default for EventSourceConfig {
    fn default() -> Self {
        EventSourceConfig {
            mode: EventMode::Poisson { rate_hz: 2.0 },
            command_size_bytes: default_command_size(),
            deadline_s: default_deadline(),
        }
    }
}

impl EventSourceConfig {
    pub fn validate(&self) -> Result<(), String> {
        match &self.mode {
            EventMode::Poisson { rate_hz } if !(*rate_hz > 0.0) => {
                return Err("poisson rate must be positive".into())
            }
            EventMode::Scripted { times } if times.is_empty() => {
                return Err("scripted schedule must not be empty".into())
            }
            EventMode::Scripted { times } if times.iter().any(|t| !(*t >= 0.0)) => {
                return Err("scripted times must be non-negative".into())
            }
            _ => {}
        }
        if !(self.deadline_s > 0.0) {
            return Err("deadline must be positive".into());
        }
        if self.command_size_bytes == 0 {
            return Err("command size must be positive".into());
        }
        Ok(())
    }
}

/// Generates emission instants one at a time.
#[derive(Debug, Clone)]
pub struct EventSource {
    config: EventSourceConfig,
    rng: StreamRng,
    scripted: Vec<SimTime>,
    next_scripted: usize,
    last: SimTime,
    next: Option<SimTime>,
    emitted: u64,
}

impl EventSource {
    pub fn new(config: EventSourceConfig, rng: StreamRng) -> Self {
        let mut scripted: Vec<SimTime> = match &config.mode {
            EventMode::Scripted { times } => times.iter().map(|&t| SimTime::from_secs_f64(t)).collect(),
            EventMode::Poisson { .. } => Vec::new(),
        };
        scripted.sort();
        let mut source = EventSource {
            config,
            rng,
            scripted,
            next_scripted: 0,
            last: SimTime::ZERO,
            next: None,
            emitted: 0,
        };
        source.next = source.draw_next();
        source
    }

    pub fn config(&self) -> &EventSourceConfig {
        &self.config
    }

    fn draw_next(&mut self) -> Option<SimTime> {
        match self.config.mode {
            EventMode::Poisson { rate_hz } => {
                let gap = Exp::new(rate_hz).expect("validated rate").sample(&mut self.rng);
                Some(self.last + SimTime::from_secs_f64(gap))
            }
            EventMode::Scripted { .. } => {
                let t = self.scripted.get(self.next_scripted).copied();
                self.next_scripted += 1;
                t
            }
        }
    }

    pub fn next_emission(&self) -> Option<SimTime> {
        self.next
    }

    /// Emits every command due at or before `now`; returns their sequence numbers.
    pub fn step(&mut self, now: SimTime) -> Vec<u64> {
        let mut out = Vec::new();
        while let Some(t) = self.next {
            if t > now {
                break;
            }
            out.push(self.emitted);
            self.emitted += 1;
            self.last = t;
            self.next = self.draw_next();
        }
        out
    }
}

pub fn deadline_met(latency_s: f64, deadline_s: f64) -> bool {
    latency_s <= deadline_s
}
