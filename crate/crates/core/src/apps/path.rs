//! Reference paths and the cross-track/heading path controller.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use super::robot::{normalize_angle, Pose, RobotGeometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathGeometry {
    StraightLine {
        origin: [f64; 2],
        direction: [f64; 2],
    },
    Circle {
        center: [f64; 2],
        radius: f64,
        #[serde(default)]
        clockwise: bool,
    },
    Waypoints {
        points: Vec<[f64; 2]>,
        #[serde(default)]
        looped: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    #[serde(flatten)]
    pub geometry: PathGeometry,
    pub cruise_speed: f64,
}

/// Closest point on a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub x: f64,
    pub y: f64,
    /// Heading of the path tangent at the point.
    pub heading: f64,
    /// Position along the path; used to break distance ties.
    pub param: f64,
}

impl PathSpec {
    pub fn validate(&self) -> Result<(), String> {
        match &self.geometry {
            PathGeometry::StraightLine { direction, .. } => {
                if direction[0].hypot(direction[1]) < 1e-12 {
                    return Err("straight line direction must be nonzero".into());
                }
            }
            PathGeometry::Circle { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err("circle radius must be positive".into());
                }
            }
            PathGeometry::Waypoints { points, .. } => {
                if points.len() < 2 {
                    return Err("waypoint path needs at least two points".into());
                }
                if points.windows(2).any(|w| w[0] == w[1]) {
                    return Err("consecutive waypoints must differ".into());
                }
            }
        }
        if !(self.cruise_speed > 0.0) {
            return Err("cruise_speed must be positive".into());
        }
        Ok(())
    }

    pub fn nearest(&self, x: f64, y: f64) -> PathPoint {
        match &self.geometry {
            PathGeometry::StraightLine { origin, direction } => {
                let norm = direction[0].hypot(direction[1]);
                let (ux, uy) = (direction[0] / norm, direction[1] / norm);
                let t = (x - origin[0]) * ux + (y - origin[1]) * uy;
                PathPoint {
                    x: origin[0] + t * ux,
                    y: origin[1] + t * uy,
                    heading: uy.atan2(ux),
                    param: t,
                }
            }
            PathGeometry::Circle {
                center,
                radius,
                clockwise,
            } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                // At the centre every point is equidistant; take angle 0.
                let angle = if dx.hypot(dy) < 1e-12 { 0.0 } else { dy.atan2(dx) };
                let heading = if *clockwise {
                    angle - FRAC_PI_2
                } else {
                    angle + FRAC_PI_2
                };
                PathPoint {
                    x: center[0] + radius * angle.cos(),
                    y: center[1] + radius * angle.sin(),
                    heading: normalize_angle(heading),
                    param: angle.rem_euclid(TAU),
                }
            }
            PathGeometry::Waypoints { points, looped } => {
                let segments = if *looped { points.len() } else { points.len() - 1 };
                let mut best: Option<(f64, PathPoint)> = None;
                for i in 0..segments {
                    let a = points[i];
                    let b = points[(i + 1) % points.len()];
                    let (sx, sy) = (b[0] - a[0], b[1] - a[1]);
                    let len2 = sx * sx + sy * sy;
                    let t = (((x - a[0]) * sx + (y - a[1]) * sy) / len2).clamp(0.0, 1.0);
                    let (px, py) = (a[0] + t * sx, a[1] + t * sy);
                    let d = (x - px).hypot(y - py);
                    // Strictly closer only, so ties keep the lowest path parameter.
                    if best.is_none_or(|(bd, _)| d < bd - 1e-12) {
                        best = Some((
                            d,
                            PathPoint {
                                x: px,
                                y: py,
                                heading: sy.atan2(sx),
                                param: i as f64 + t,
                            },
                        ));
                    }
                }
                best.expect("validated path has a segment").1
            }
        }
    }

    /// Signed cross-track error (positive when the pose is left of the path)
    /// and heading error (path tangent minus pose heading).
    pub fn tracking_error(&self, pose: &Pose) -> (f64, f64) {
        let p = self.nearest(pose.x, pose.y);
        let (tx, ty) = (p.heading.cos(), p.heading.sin());
        let cross = tx * (pose.y - p.y) - ty * (pose.x - p.x);
        let heading_err = normalize_angle(p.heading - pose.theta);
        (cross, heading_err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    pub k_e: f64,
    pub k_h: f64,
    /// Turn-rate saturation (rad/s).
    pub omega_max: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            k_e: 10.0,
            k_h: 3.0,
            omega_max: 2.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k_e > 0.0 && self.k_h > 0.0 && self.omega_max > 0.0) {
            return Err("controller gains and omega_max must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelCommand {
    pub omega_left: f64,
    pub omega_right: f64,
    pub cross_track: f64,
    pub heading_error: f64,
}

/// Proportional steering on cross-track and heading error at the path's
/// cruise speed, mapped to wheel speeds.
pub fn path_controller_step(
    estimate: &Pose,
    path: &PathSpec,
    gains: &ControllerGains,
    geometry: &RobotGeometry,
) -> WheelCommand {
    let (e, psi) = path.tracking_error(estimate);
    let v = path.cruise_speed;
    let w = (-gains.k_e * e + gains.k_h * psi).clamp(-gains.omega_max, gains.omega_max);
    let (omega_left, omega_right) = geometry.wheel_speeds(v, w);
    WheelCommand {
        omega_left,
        omega_right,
        cross_track: e,
        heading_error: psi,
    }
}
