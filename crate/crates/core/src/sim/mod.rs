//! Two-agent kinematic simulation: bicycle-model stepping, waypoint following,
//! end-of-path braking and oriented-box contact checks.

mod collision;
mod control;
mod kinematics;
mod outcome;

pub use collision::{min_clearance, obb_intersect, FootprintOBB};
pub use control::{
    longitudinal_accel, lookahead_distance, max_accel_for_mass, pure_pursuit_steer, Agent,
    LongitudinalCommand, StopPoint, WaypointPath, SPEED_GAIN,
};
pub use kinematics::{step_kinematic, VehicleState, MAX_STEER_RAD};
pub use outcome::{classify_outcome, Outcome, OutcomeKind};

/// Physics timestep (s).
pub const DT_S: f64 = 0.02;
/// Episode length (s).
pub const EPISODE_DURATION_S: f64 = 10.0;
/// Physics steps per episode.
pub const STEPS_PER_EPISODE: usize = 500;
pub const WHEELBASE_M: f64 = 2.7;
pub const VEHICLE_LENGTH_M: f64 = 4.5;
pub const VEHICLE_WIDTH_M: f64 = 1.9;
pub const NEAR_MISS_THRESHOLD_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, s)
    }

    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Footprint of a vehicle centered on its reference point.
pub fn footprint(state: &VehicleState) -> FootprintOBB {
    FootprintOBB::new(
        Vec2::new(state.x, state.y),
        VEHICLE_LENGTH_M / 2.0,
        VEHICLE_WIDTH_M / 2.0,
        state.heading,
    )
}
