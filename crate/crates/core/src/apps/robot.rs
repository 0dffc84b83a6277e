//! Differential-drive kinematics and encoder odometry.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Wraps an angle into (-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let wrapped = a.rem_euclid(TAU);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotGeometry {
    pub wheel_radius: f64,
    pub axle_length: f64,
    pub ticks_per_rev: u32,
}

impl Default for RobotGeometry {
    /// GoPiGo3-class platform.
    fn default() -> Self {
        RobotGeometry {
            wheel_radius: 0.033,
            axle_length: 0.117,
            ticks_per_rev: 360,
        }
    }
}

impl RobotGeometry {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wheel_radius > 0.0) || !(self.axle_length > 0.0) || self.ticks_per_rev == 0 {
            return Err("wheel_radius, axle_length and ticks_per_rev must be positive".into());
        }
        Ok(())
    }

    /// Body twist (v, ω) for the given wheel speeds.
    pub fn twist(&self, omega_left: f64, omega_right: f64) -> (f64, f64) {
        let v = self.wheel_radius * (omega_left + omega_right) / 2.0;
        let w = self.wheel_radius * (omega_right - omega_left) / self.axle_length;
        (v, w)
    }

    /// Wheel speeds (left, right) realising the body twist.
    pub fn wheel_speeds(&self, v: f64, w: f64) -> (f64, f64) {
        let half = w * self.axle_length / 2.0;
        ((v - half) / self.wheel_radius, (v + half) / self.wheel_radius)
    }

    pub fn metres_per_tick(&self) -> f64 {
        TAU * self.wheel_radius / f64::from(self.ticks_per_rev)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub geometry: RobotGeometry,
    pub omega_left: f64,
    pub omega_right: f64,
    pub encoder_left: i64,
    pub encoder_right: i64,
    residual_left: f64,
    residual_right: f64,
}

impl RobotState {
    pub fn new(pose: Pose, geometry: RobotGeometry) -> Self {
        RobotState {
            pose,
            geometry,
            omega_left: 0.0,
            omega_right: 0.0,
            encoder_left: 0,
            encoder_right: 0,
            residual_left: 0.0,
            residual_right: 0.0,
        }
    }

    /// Explicit Euler step of the unicycle model; encoders accumulate
    /// fractional ticks and emit whole ones.
    pub fn step(&mut self, dt: f64) {
        debug_assert!(dt > 0.0);
        let (v, w) = self.geometry.twist(self.omega_left, self.omega_right);
        let theta = self.pose.theta;
        self.pose.x += v * theta.cos() * dt;
        self.pose.y += v * theta.sin() * dt;
        self.pose.theta = normalize_angle(theta + w * dt);

        let per_rad = f64::from(self.geometry.ticks_per_rev) / TAU;
        self.residual_left += self.omega_left * dt * per_rad;
        self.residual_right += self.omega_right * dt * per_rad;
        let whole_left = self.residual_left.trunc();
        let whole_right = self.residual_right.trunc();
        self.encoder_left += whole_left as i64;
        self.encoder_right += whole_right as i64;
        self.residual_left -= whole_left;
        self.residual_right -= whole_right;
    }
}

/// Dead-reckoning from encoder increments, advancing along the midpoint heading.
pub fn odometry_update(pose: Pose, delta_left: i64, delta_right: i64, geometry: &RobotGeometry) -> Pose {
    let per_tick = geometry.metres_per_tick();
    let s_left = delta_left as f64 * per_tick;
    let s_right = delta_right as f64 * per_tick;
    let ds = (s_left + s_right) / 2.0;
    let dtheta = (s_right - s_left) / geometry.axle_length;
    let mid = pose.theta + dtheta / 2.0;
    Pose {
        x: pose.x + ds * mid.cos(),
        y: pose.y + ds * mid.sin(),
        theta: normalize_angle(pose.theta + dtheta),
    }
}

/// Exact pose after moving with constant wheel speeds for `t` seconds.
pub fn constant_twist_pose(start: Pose, geometry: &RobotGeometry, omega_left: f64, omega_right: f64, t: f64) -> Pose {
    let (v, w) = geometry.twist(omega_left, omega_right);
    if w.abs() < 1e-12 {
        return Pose::new(
            start.x + v * start.theta.cos() * t,
            start.y + v * start.theta.sin() * t,
            start.theta,
        );
    }
    let theta_end = start.theta + w * t;
    Pose::new(
        start.x + v / w * (theta_end.sin() - start.theta.sin()),
        start.y - v / w * (theta_end.cos() - start.theta.cos()),
        theta_end,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn robot(omega_left: f64, omega_right: f64) -> RobotState {
        let mut r = RobotState::new(Pose::default(), RobotGeometry::default());
        r.omega_left = omega_left;
        r.omega_right = omega_right;
        r
    }

    #[test]
    fn straight_line_step() {
        let mut r = robot(10.0, 10.0);
        r.step(0.02);
        assert!((r.pose.x - 0.0066).abs() < 1e-12);
        assert_eq!(r.pose.y, 0.0);
        assert_eq!(r.pose.theta, 0.0);
    }

    #[test]
    fn spin_in_place() {
        let mut r = robot(-4.0, 4.0);
        r.step(0.01);
        assert_eq!((r.pose.x, r.pose.y), (0.0, 0.0));
        let expected = 0.033 * 2.0 * 4.0 / 0.117 * 0.01;
        assert!((r.pose.theta - expected).abs() < 1e-12);
    }

    #[test]
    fn angle_normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_angle(7.0) - (7.0 - TAU)).abs() < 1e-12);
    }

    #[test]
    fn euler_tracks_constant_twist_arc() {
        // Circle radius (L/2)(ωR+ωL)/(ωR−ωL) = 0.0585 * 18 / 2 = 0.5265 m.
        let mut r = robot(8.0, 10.0);
        for _ in 0..10_000 {
            r.step(1e-3);
        }
        let exact = constant_twist_pose(Pose::default(), &r.geometry, 8.0, 10.0, 10.0);
        assert!(r.pose.distance_to(&exact) < 1e-3, "err {}", r.pose.distance_to(&exact));
    }

    #[test]
    fn encoders_follow_wheel_rotation() {
        let mut r = robot(2.0 * PI, -2.0 * PI);
        for _ in 0..1000 {
            r.step(1e-3);
        }
        // One revolution each way.
        assert!((r.encoder_left - 360).abs() <= 1);
        assert!((r.encoder_right + 360).abs() <= 1);
    }

    #[test]
    fn odometry_straight_and_rotate() {
        let g = RobotGeometry::default();
        let p = odometry_update(Pose::default(), 100, 100, &g);
        let dist = TAU * 100.0 / 360.0 * 0.033;
        assert!((p.x - dist).abs() < 1e-12);
        assert_eq!(p.theta, 0.0);

        let p = odometry_update(Pose::default(), -50, 50, &g);
        assert!(p.x.abs() < 1e-15 && p.y.abs() < 1e-15);
        assert!(p.theta > 0.0);
    }

    #[test]
    fn inverse_kinematics_round_trip() {
        let g = RobotGeometry::default();
        let (l, r) = g.wheel_speeds(0.2, 0.7);
        let (v, w) = g.twist(l, r);
        assert!((v - 0.2).abs() < 1e-12 && (w - 0.7).abs() < 1e-12);
    }
}
