use super::kinematics::{step_kinematic, VehicleState, MAX_STEER_RAD};
use super::Vec2;
use crate::error::{Error, Result};

/// Proportional speed-tracking gain (1/s).
pub const SPEED_GAIN: f64 = 0.8;
/// Deceleration used when easing to a stop line (m/s²), capped by the brake bound.
const STOP_LINE_DECEL: f64 = 3.0;
/// Speed below which a vehicle approaching a stop line counts as stopped.
const STOPPED_SPEED: f64 = 0.05;

/// Where a vehicle must come to rest before continuing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopPoint {
    /// Arc length along the path of the stop position (m).
    pub arc_length: f64,
    pub dwell_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
    pub target_speed: f64,
    pub brake_decel: f64,
    pub stop: Option<StopPoint>,
}

impl WaypointPath {
    pub fn new(points: Vec<Vec2>, target_speed: f64, brake_decel: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config(format!(
                "waypoint path needs at least 2 points, got {}",
                points.len()
            )));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for w in points.windows(2) {
            let d = w[0].distance(w[1]);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Config(format!(
                    "consecutive waypoints must be distinct and finite: {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
            cumulative.push(cumulative.last().unwrap() + d);
        }
        Ok(Self {
            points,
            cumulative,
            target_speed,
            brake_decel,
            stop: None,
        })
    }

    pub fn with_stop(mut self, stop: StopPoint) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn arc_length_at(&self, index: usize) -> f64 {
        self.cumulative[index]
    }

    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    /// Tangent direction (rad) of the first segment.
    pub fn start_heading(&self) -> f64 {
        let d = self.points[1] - self.points[0];
        d.y.atan2(d.x)
    }

    pub fn closest_index(&self, p: Vec2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let d = (*q - p).dot(*q - p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Arc length of the projection of `p` onto the path, searched on the
    /// segments adjacent to the closest waypoint.
    pub fn project(&self, p: Vec2) -> f64 {
        let i = self.closest_index(p);
        let mut best_s = self.cumulative[i];
        let mut best_d = p.distance(self.points[i]);
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(self.points.len() - 1);
        for j in lo..hi {
            let a = self.points[j];
            let b = self.points[j + 1];
            let ab = b - a;
            let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            let q = a + ab * t;
            let d = p.distance(q);
            if d < best_d {
                best_d = d;
                best_s = self.cumulative[j] + t * ab.norm();
            }
        }
        best_s
    }

    pub fn remaining_from(&self, p: Vec2) -> f64 {
        (self.length() - self.project(p)).max(0.0)
    }
}

pub fn lookahead_distance(speed: f64) -> f64 {
    (0.8 * speed).max(5.0)
}

/// `a_max` in m/s²: heavier cars accelerate more slowly.
pub fn max_accel_for_mass(mass_kg: f64) -> f64 {
    (4.0 * 1500.0 / mass_kg).clamp(1.5, 6.0)
}

/// Pure-pursuit steering toward the first waypoint at least `lookahead`
/// of arc length past the closest waypoint (the last waypoint if none is).
pub fn pure_pursuit_steer(
    state: &VehicleState,
    path: &WaypointPath,
    lookahead: f64,
    wheelbase: f64,
) -> f64 {
    let pos = Vec2::new(state.x, state.y);
    let closest = path.closest_index(pos);
    let s0 = path.cumulative[closest];
    let goal_idx = path.cumulative[closest..]
        .iter()
        .position(|&s| s - s0 >= lookahead)
        .map(|k| closest + k)
        .unwrap_or(path.points.len() - 1);
    let to_goal = path.points[goal_idx] - pos;
    if to_goal.dot(to_goal) == 0.0 {
        return 0.0;
    }
    let alpha = to_goal.y.atan2(to_goal.x) - state.heading;
    let steer = (2.0 * wheelbase * alpha.sin() / lookahead).atan();
    steer.clamp(-MAX_STEER_RAD, MAX_STEER_RAD)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongitudinalCommand {
    pub accel: f64,
    /// True once the end-of-path braking phase has begun.
    pub braking: bool,
}

/// Speed tracking with end-of-path braking.
///
/// Braking starts when the remaining path is within the constant-deceleration
/// stopping distance and, once latched, never releases.
pub fn longitudinal_accel(
    state: &VehicleState,
    path: &WaypointPath,
    dist_to_path_end: f64,
    a_max: f64,
    braking_latched: bool,
) -> LongitudinalCommand {
    let stopping_margin = state.speed * state.speed / (2.0 * path.brake_decel);
    if braking_latched || dist_to_path_end <= stopping_margin {
        return LongitudinalCommand {
            accel: -path.brake_decel,
            braking: true,
        };
    }
    let accel =
        (SPEED_GAIN * (path.target_speed - state.speed)).clamp(-path.brake_decel, a_max);
    LongitudinalCommand {
        accel,
        braking: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StopPhase {
    Approach,
    Dwell { remaining_s: f64 },
    Done,
}

/// One vehicle with its guideline path and controller state.
#[derive(Debug, Clone)]
pub struct Agent {
    pub state: VehicleState,
    pub path: WaypointPath,
    pub a_max: f64,
    pub wheelbase: f64,
    braking: bool,
    stop_phase: StopPhase,
    /// Steering command issued on the most recent step (rad).
    pub last_steer_cmd: f64,
}

impl Agent {
    pub fn new(state: VehicleState, path: WaypointPath, a_max: f64, wheelbase: f64) -> Self {
        let stop_phase = if path.stop.is_some() {
            StopPhase::Approach
        } else {
            StopPhase::Done
        };
        Self {
            state,
            path,
            a_max,
            wheelbase,
            braking: false,
            stop_phase,
            last_steer_cmd: 0.0,
        }
    }

    pub fn is_braking(&self) -> bool {
        self.braking
    }

    /// Steering command for the current state.
    pub fn steer_command(&self) -> f64 {
        pure_pursuit_steer(
            &self.state,
            &self.path,
            lookahead_distance(self.state.speed),
            self.wheelbase,
        )
    }

    fn stop_line_accel(&mut self, s: f64, dt: f64) -> Option<f64> {
        let stop = self.path.stop?;
        match self.stop_phase {
            StopPhase::Done => None,
            StopPhase::Dwell { remaining_s } => {
                let remaining_s = remaining_s - dt;
                self.stop_phase = if remaining_s <= 0.0 {
                    StopPhase::Done
                } else {
                    StopPhase::Dwell { remaining_s }
                };
                Some(-self.path.brake_decel)
            }
            StopPhase::Approach => {
                let d = stop.arc_length - s;
                let v = self.state.speed;
                if v <= STOPPED_SPEED && d < 1.0 {
                    self.stop_phase = StopPhase::Dwell {
                        remaining_s: stop.dwell_s,
                    };
                    return Some(-self.path.brake_decel);
                }
                let comfort = STOP_LINE_DECEL.min(self.path.brake_decel);
                if d <= 0.0 {
                    return Some(-self.path.brake_decel);
                }
                let required = v * v / (2.0 * d);
                if required >= comfort {
                    Some(-required.min(self.path.brake_decel))
                } else {
                    None
                }
            }
        }
    }

    /// Advances the agent by one timestep, returning the steering command used.
    pub fn step(&mut self, dt: f64) -> Result<f64> {
        let pos = Vec2::new(self.state.x, self.state.y);
        let s = self.path.project(pos);
        let steer = self.steer_command();
        let accel = match self.stop_line_accel(s, dt) {
            Some(a) => a,
            None => {
                let cmd = longitudinal_accel(
                    &self.state,
                    &self.path,
                    (self.path.length() - s).max(0.0),
                    self.a_max,
                    self.braking,
                );
                self.braking = cmd.braking;
                cmd.accel
            }
        };
        self.state = step_kinematic(&self.state, accel, steer, dt, self.wheelbase)?;
        self.last_steer_cmd = steer;
        Ok(steer)
    }
}
