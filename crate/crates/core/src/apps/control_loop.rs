//! Closed-loop robot control over a (possibly simulated) link.
//!
//! The robot samples its encoders every control period and applies the most
//! recently delivered command at that tick, holding it until a newer one
//! arrives. The path controller reacts to each feedback message as it is
//! delivered.

use serde::{Deserialize, Serialize};

use super::path::{path_controller_step, ControllerGains, PathSpec};
use super::robot::{odometry_update, Pose, RobotGeometry, RobotState};
use crate::time::SimTime;

pub const CONTROL_MESSAGE_BYTES: usize = 32;

/// Downlink wheel-speed command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub omega_left_cmd: f64,
    pub omega_right_cmd: f64,
    pub seq: u64,
    /// Sequence number of the feedback this command answers.
    pub feedback_seq: u64,
}

/// Uplink encoder report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub encoder_left: i64,
    pub encoder_right: i64,
    pub seq: u64,
    pub timestamp: SimTime,
}

impl Command {
    pub fn to_bytes(&self) -> [u8; CONTROL_MESSAGE_BYTES] {
        let mut out = [0u8; CONTROL_MESSAGE_BYTES];
        out[0..8].copy_from_slice(&self.omega_left_cmd.to_le_bytes());
        out[8..16].copy_from_slice(&self.omega_right_cmd.to_le_bytes());
        out[16..24].copy_from_slice(&self.seq.to_le_bytes());
        out[24..32].copy_from_slice(&self.feedback_seq.to_le_bytes());
        out
    }

    pub fn from_bytes(b: &[u8; CONTROL_MESSAGE_BYTES]) -> Self {
        let word = |i: usize| <[u8; 8]>::try_from(&b[i..i + 8]).unwrap();
        Command {
            omega_left_cmd: f64::from_le_bytes(word(0)),
            omega_right_cmd: f64::from_le_bytes(word(8)),
            seq: u64::from_le_bytes(word(16)),
            feedback_seq: u64::from_le_bytes(word(24)),
        }
    }
}

impl Feedback {
    pub fn to_bytes(&self) -> [u8; CONTROL_MESSAGE_BYTES] {
        let mut out = [0u8; CONTROL_MESSAGE_BYTES];
        out[0..8].copy_from_slice(&self.encoder_left.to_le_bytes());
        out[8..16].copy_from_slice(&self.encoder_right.to_le_bytes());
        out[16..24].copy_from_slice(&self.seq.to_le_bytes());
        out[24..32].copy_from_slice(&self.timestamp.as_nanos().to_le_bytes());
        out
    }

    pub fn from_bytes(b: &[u8; CONTROL_MESSAGE_BYTES]) -> Self {
        let word = |i: usize| <[u8; 8]>::try_from(&b[i..i + 8]).unwrap();
        Feedback {
            encoder_left: i64::from_le_bytes(word(0)),
            encoder_right: i64::from_le_bytes(word(8)),
            seq: u64::from_le_bytes(word(16)),
            timestamp: SimTime::from_nanos(u64::from_le_bytes(word(24))),
        }
    }
}

/// Robot side: physics, encoder sampling and zero-order-hold actuation.
#[derive(Debug, Clone)]
pub struct RobotEndpoint {
    pub state: RobotState,
    physics_dt: SimTime,
    integrated_to: SimTime,
    applied: Option<Command>,
    latest: Option<Command>,
    next_seq: u64,
}

impl RobotEndpoint {
    pub fn new(state: RobotState, physics_dt: SimTime) -> Self {
        assert!(physics_dt > SimTime::ZERO, "physics step must be positive");
        RobotEndpoint {
            state,
            physics_dt,
            integrated_to: SimTime::ZERO,
            applied: None,
            latest: None,
            next_seq: 0,
        }
    }

    /// Integrates the current wheel speeds up to `now`.
    pub fn advance_to(&mut self, now: SimTime) {
        while self.integrated_to < now {
            let dt = self.physics_dt.min(now - self.integrated_to);
            self.state.step(dt.as_secs_f64());
            self.integrated_to = self.integrated_to + dt;
        }
    }

    /// Stores a delivered command; stale or duplicate sequence numbers are ignored.
    pub fn on_command(&mut self, cmd: Command) {
        if self.latest.is_none_or(|c| cmd.seq > c.seq) {
            self.latest = Some(cmd);
        }
    }

    /// Control tick: apply the newest delivered command, then report encoders.
    pub fn tick(&mut self, now: SimTime) -> Feedback {
        self.advance_to(now);
        if self.latest != self.applied {
            if let Some(cmd) = self.latest {
                self.state.omega_left = cmd.omega_left_cmd;
                self.state.omega_right = cmd.omega_right_cmd;
            }
            self.applied = self.latest;
        }
        let fb = Feedback {
            encoder_left: self.state.encoder_left,
            encoder_right: self.state.encoder_right,
            seq: self.next_seq,
            timestamp: now,
        };
        self.next_seq += 1;
        fb
    }

    pub fn applied_command(&self) -> Option<Command> {
        self.applied
    }
}

/// Controller side: dead-reckoning from feedback plus the path controller.
#[derive(Debug, Clone)]
pub struct ControllerEndpoint {
    pub estimate: Pose,
    pub path: PathSpec,
    pub gains: ControllerGains,
    geometry: RobotGeometry,
    last_encoders: (i64, i64),
    last_feedback: Option<u64>,
    next_seq: u64,
}

impl ControllerEndpoint {
    /// The controller knows the start pose and that encoders start at zero.
    pub fn new(start: Pose, path: PathSpec, gains: ControllerGains, geometry: RobotGeometry) -> Self {
        ControllerEndpoint {
            estimate: start,
            path,
            gains,
            geometry,
            last_encoders: (0, 0),
            last_feedback: None,
            next_seq: 0,
        }
    }

    /// Returns `None` for feedback older than what was already processed.
    pub fn on_feedback(&mut self, fb: &Feedback) -> Option<Command> {
        if self.last_feedback.is_some_and(|s| fb.seq <= s) {
            return None;
        }
        self.last_feedback = Some(fb.seq);
        let (dl, dr) = (
            fb.encoder_left - self.last_encoders.0,
            fb.encoder_right - self.last_encoders.1,
        );
        self.last_encoders = (fb.encoder_left, fb.encoder_right);
        self.estimate = odometry_update(self.estimate, dl, dr, &self.geometry);
        let wheels = path_controller_step(&self.estimate, &self.path, &self.gains, &self.geometry);
        let cmd = Command {
            omega_left_cmd: wheels.omega_left,
            omega_right_cmd: wheels.omega_right,
            seq: self.next_seq,
            feedback_seq: fb.seq,
        };
        self.next_seq += 1;
        Some(cmd)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IdealLoopTrace {
    /// (time s, signed cross-track error m) sampled at each tick.
    pub cross_track: Vec<(f64, f64)>,
    /// Feedback sequence answered by the command applied at each tick.
    pub applied_feedback_seq: Vec<Option<u64>>,
    /// Distance between controller estimate and true pose at each tick.
    pub estimate_error: Vec<f64>,
}

impl IdealLoopTrace {
    pub fn rms_cross_track_after(&self, t0: f64) -> f64 {
        let tail: Vec<f64> = self
            .cross_track
            .iter()
            .filter(|(t, _)| *t >= t0)
            .map(|(_, e)| e * e)
            .collect();
        if tail.is_empty() {
            return 0.0;
        }
        (tail.iter().sum::<f64>() / tail.len() as f64).sqrt()
    }
}

/// Runs the loop over a zero-delay, lossless link.
pub fn run_ideal_loop(
    mut robot: RobotEndpoint,
    mut controller: ControllerEndpoint,
    period: SimTime,
    duration: SimTime,
) -> IdealLoopTrace {
    let mut trace = IdealLoopTrace::default();
    let mut now = SimTime::ZERO;
    while now <= duration {
        let fb = robot.tick(now);
        trace.applied_feedback_seq.push(robot.applied_command().map(|c| c.feedback_seq));
        let (e, _) = controller.path.tracking_error(&robot.state.pose);
        trace.cross_track.push((now.as_secs_f64(), e));
        if let Some(cmd) = controller.on_feedback(&fb) {
            trace.estimate_error.push(controller.estimate.distance_to(&robot.state.pose));
            robot.on_command(cmd);
        }
        now = now + period;
    }
    trace
}
