use crate::error::{Error, Result};

/// Front-wheel angle limit, 30 degrees.
pub const MAX_STEER_RAD: f64 = std::f64::consts::PI / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Counterclockwise from +x (rad).
    pub heading: f64,
    pub speed: f64,
    /// Front-wheel angle, positive = left (rad).
    pub steer: f64,
}

/// Forward-Euler kinematic bicycle update. Position and heading use the
/// pre-step speed; the stored steer is the clamped command.
pub fn step_kinematic(
    state: &VehicleState,
    accel: f64,
    steer_cmd: f64,
    dt: f64,
    wheelbase: f64,
) -> Result<VehicleState> {
    debug_assert!(dt > 0.0 && wheelbase > 0.0);
    let steer = steer_cmd.clamp(-MAX_STEER_RAD, MAX_STEER_RAD);
    let (sin_h, cos_h) = state.heading.sin_cos();
    let next = VehicleState {
        x: state.x + state.speed * cos_h * dt,
        y: state.y + state.speed * sin_h * dt,
        heading: state.heading + (state.speed / wheelbase) * steer.tan() * dt,
        speed: state.speed + accel * dt,
        steer,
    };
    let finite = [next.x, next.y, next.heading, next.speed, next.steer]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite(format!(
            "step from {state:?} with accel {accel}, steer {steer_cmd} gave {next:?}"
        )));
    }
    Ok(VehicleState {
        speed: next.speed.max(0.0),
        ..next
    })
}
