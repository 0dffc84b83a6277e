//! Constant-bitrate video with a playout buffer and stall detection.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoParams {
    pub bitrate_bps: f64,
    pub segment_size_bytes: u32,
    pub initial_buffer_s: f64,
    pub rebuffer_resume_s: f64,
    /// Segments are split into packets of at most this size.
    pub packet_bytes: u32,
    pub playout_tick_s: f64,
}

impl Default for VideoParams {
    fn default() -> Self {
        VideoParams {
            bitrate_bps: 5_000_000.0,
            segment_size_bytes: 62_500,
            initial_buffer_s: 2.0,
            rebuffer_resume_s: 1.0,
            packet_bytes: 1500,
            playout_tick_s: 0.01,
        }
    }
}

impl VideoParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.bitrate_bps > 0.0) || self.segment_size_bytes == 0 || self.packet_bytes == 0 {
            return Err("bitrate, segment size and packet size must be positive".into());
        }
        if !(self.initial_buffer_s >= 0.0 && self.rebuffer_resume_s >= 0.0) {
            return Err("buffer thresholds must be non-negative".into());
        }
        if !(self.playout_tick_s > 0.0) {
            return Err("playout tick must be positive".into());
        }
        Ok(())
    }

    /// Media seconds carried by one segment.
    pub fn segment_duration_s(&self) -> f64 {
        f64::from(self.segment_size_bytes) * 8.0 / self.bitrate_bps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaybackState {
    Buffering,
    Playing,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StallInterval {
    pub start_s: f64,
    /// `None` while the stall is ongoing.
    pub end_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSession {
    pub params: VideoParams,
    pub buffer_s: f64,
    pub state: PlaybackState,
    pub stall_count: u32,
    pub total_stall_duration_s: f64,
    pub played_s: f64,
    pub received_media_s: f64,
    pub startup_delay_s: Option<f64>,
    pub stalls: Vec<StallInterval>,
    clock_ns: u64,
    stalled_ns: u64,
}

impl VideoSession {
    pub fn new(params: VideoParams) -> Self {
        VideoSession {
            params,
            buffer_s: 0.0,
            state: PlaybackState::Buffering,
            stall_count: 0,
            total_stall_duration_s: 0.0,
            played_s: 0.0,
            received_media_s: 0.0,
            startup_delay_s: None,
            stalls: Vec::new(),
            clock_ns: 0,
            stalled_ns: 0,
        }
    }

    pub fn clock_s(&self) -> f64 {
        self.clock_ns as f64 / 1e9
    }

    /// Adds delivered media, then plays (or waits) for `dt` seconds.
    pub fn step(&mut self, delivered_bytes: u64, dt: f64) {
        debug_assert!(dt > 0.0);
        let media = delivered_bytes as f64 * 8.0 / self.params.bitrate_bps;
        self.buffer_s += media;
        self.received_media_s += media;

        match self.state {
            PlaybackState::Buffering if self.buffer_s >= self.params.initial_buffer_s => {
                self.state = PlaybackState::Playing;
                self.startup_delay_s = Some(self.clock_s());
            }
            PlaybackState::Stalled if self.buffer_s >= self.params.rebuffer_resume_s => {
                self.state = PlaybackState::Playing;
                if let Some(last) = self.stalls.last_mut() {
                    last.end_s = Some(self.clock_ns as f64 / 1e9);
                }
            }
            _ => {}
        }

        // Integer clock so long sessions report clean timestamps.
        self.clock_ns += (dt * 1e9).round() as u64;
        match self.state {
            PlaybackState::Playing => {
                let played = dt.min(self.buffer_s);
                self.buffer_s -= played;
                self.played_s += played;
                if self.buffer_s <= 0.0 {
                    self.buffer_s = 0.0;
                    self.state = PlaybackState::Stalled;
                    self.stall_count += 1;
                    self.stalls.push(StallInterval {
                        start_s: self.clock_s(),
                        end_s: None,
                    });
                }
            }
            PlaybackState::Stalled => {
                self.stalled_ns += (dt * 1e9).round() as u64;
                self.total_stall_duration_s = self.stalled_ns as f64 / 1e9;
            }
            PlaybackState::Buffering => {}
        }
    }

    /// Stalls overlapping the half-open window (from, to].
    pub fn stalls_in(&self, from: f64, to: f64) -> usize {
        self.stalls
            .iter()
            .filter(|s| s.start_s <= to && s.end_s.is_none_or(|e| e > from))
            .count()
    }
}
