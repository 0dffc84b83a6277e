//! The three workloads: closed-loop robot control, operator actuation
//! commands, and video streaming.

pub mod control_loop;
pub mod event;
pub mod path;
pub mod robot;
pub mod video;

pub use control_loop::{
    run_ideal_loop, Command, ControllerEndpoint, Feedback, IdealLoopTrace, RobotEndpoint,
    CONTROL_MESSAGE_BYTES,
};
pub use event::{deadline_met, EventMode, EventSource, EventSourceConfig};
pub use path::{path_controller_step, ControllerGains, PathGeometry, PathSpec, WheelCommand};
pub use robot::{constant_twist_pose, normalize_angle, odometry_update, Pose, RobotGeometry, RobotState};
pub use video::{PlaybackState, StallInterval, VideoParams, VideoSession};
