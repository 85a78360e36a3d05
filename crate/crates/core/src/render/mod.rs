//! Grayscale forward dash-cam renderer.
//!
//! Each pixel casts one ray from the ego camera against the flat ground plane
//! and the other vehicle's footprint extruded to [`VEHICLE_HEIGHT_M`]. The
//! nearest hit is shaded from the [`RenderProfile`], fogged by depth, then
//! noise is added in row-major order.

mod pgm;

pub use pgm::{read_pgm, write_pgm, encode_pgm, decode_pgm};

use crate::catalog::{RoadGeometry, SignalState};
use crate::sim::{FootprintOBB, Vec2, VehicleState};
use crate::rng::RngStream;

pub const IMAGE_WIDTH: usize = 200;
pub const IMAGE_HEIGHT: usize = 66;
pub const VEHICLE_HEIGHT_M: f64 = 1.5;
pub const STRIPE_WIDTH_M: f64 = 0.15;
pub const STOP_LINE_WIDTH_M: f64 = 0.4;
pub const DASH_ON_M: f64 = 3.0;
pub const DASH_OFF_M: f64 = 6.0;
/// Matches the catalog's stop-line placement outside the crossing road.
const STOP_LINE_SETBACK_M: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major 8-bit grayscale.
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub mount_height: f64,
    /// Radians below the horizon.
    pub pitch: f64,
    pub horizontal_fov: f64,
    pub image_width: usize,
    pub image_height: usize,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            mount_height: 1.2,
            pitch: 1.5f64.to_radians(),
            horizontal_fov: std::f64::consts::FRAC_PI_2,
            image_width: IMAGE_WIDTH,
            image_height: IMAGE_HEIGHT,
        }
    }
}

impl CameraModel {
    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        self.image_width as f64 / 2.0 / (self.horizontal_fov / 2.0).tan()
    }

    /// Image-plane offsets of a pixel center from the principal point
    /// (right, down).
    pub fn pixel_offset(&self, col: usize, row: usize) -> (f64, f64) {
        (
            col as f64 + 0.5 - self.image_width as f64 / 2.0,
            row as f64 + 0.5 - self.image_height as f64 / 2.0,
        )
    }

    /// Row coordinate (continuous, pixel-center convention) of the horizon.
    pub fn horizon_row(&self) -> f64 {
        self.image_height as f64 / 2.0 - self.focal_px() * self.pitch.tan() - 0.5
    }

    /// Projects a world point seen from `ego` to continuous pixel coordinates
    /// (column, row) using the pixel-center convention, or `None` if behind.
    pub fn project(&self, ego: &VehicleState, p: [f64; 3]) -> Option<(f64, f64)> {
        let frame = CameraFrame::new(self, ego);
        let d = [p[0] - frame.origin[0], p[1] - frame.origin[1], p[2] - frame.origin[2]];
        let z = dot3(d, frame.forward);
        if z <= 0.0 {
            return None;
        }
        let f = self.focal_px();
        let u = f * dot3(d, frame.right) / z;
        let v = f * dot3(d, frame.down) / z;
        Some((
            u + self.image_width as f64 / 2.0 - 0.5,
            v + self.image_height as f64 / 2.0 - 0.5,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderProfile {
    pub road: u8,
    pub lane_marking: u8,
    pub sky: u8,
    pub ground: u8,
    pub vehicle_body: u8,
    pub fog_color: u8,
    pub noise_std: f64,
    /// Half-width (m) of the per-frame random lateral shift of lane markings.
    pub geometry_jitter: f64,
}

impl Default for RenderProfile {
    fn default() -> Self {
        Self {
            road: 90,
            lane_marking: 235,
            sky: 185,
            ground: 60,
            vehicle_body: 25,
            fog_color: 200,
            noise_std: 2.0,
            geometry_jitter: 0.0,
        }
    }
}

impl RenderProfile {
    /// Stage-2 proxy domain: different intensities, heavier noise, jittered markings.
    pub fn shifted() -> Self {
        Self {
            road: 120,
            lane_marking: 205,
            sky: 150,
            ground: 95,
            vehicle_body: 55,
            fog_color: 175,
            noise_std: 8.0,
            geometry_jitter: 0.3,
        }
    }

    /// No noise, no jitter; used by tests that need exact intensities.
    pub fn clean() -> Self {
        Self {
            noise_std: 0.0,
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        self.noise_std >= 0.0
            && self.noise_std.is_finite()
            && self.geometry_jitter >= 0.0
            && self.geometry_jitter.is_finite()
    }
}

/// `round(intensity * f + fog_color * (1 - f))` with `f = exp(-density * depth)`.
/// Zero density returns the intensity unchanged, even at infinite depth.
pub fn apply_fog(intensity: f64, depth: f64, density: f64, fog_color: f64) -> f64 {
    if density == 0.0 {
        return intensity;
    }
    let f = (-density * depth).exp();
    (intensity * f + fog_color * (1.0 - f)).round()
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

struct CameraFrame {
    origin: [f64; 3],
    forward: [f64; 3],
    right: [f64; 3],
    down: [f64; 3],
}

impl CameraFrame {
    fn new(camera: &CameraModel, ego: &VehicleState) -> Self {
        let (sh, ch) = ego.heading.sin_cos();
        let (sp, cp) = camera.pitch.sin_cos();
        // Ground frame is right-handed with z up, so "right" of the heading is (sin, -cos).
        Self {
            origin: [ego.x, ego.y, camera.mount_height],
            forward: [cp * ch, cp * sh, -sp],
            right: [sh, -ch, 0.0],
            down: [-sp * ch, -sp * sh, -cp],
        }
    }

    fn ray(&self, f: f64, u: f64, v: f64) -> [f64; 3] {
        let mut d = [0.0; 3];
        for (i, di) in d.iter_mut().enumerate() {
            *di = f * self.forward[i] + u * self.right[i] + v * self.down[i];
        }
        d
    }
}

/// Ray parameter of the first hit with the extruded box, if any.
fn ray_box(origin: [f64; 3], d: [f64; 3], obb: &FootprintOBB) -> Option<f64> {
    let (ax, ay) = obb.axes();
    let rel = Vec2::new(origin[0], origin[1]) - obb.center;
    let dir = Vec2::new(d[0], d[1]);
    let slabs = [
        (rel.dot(ax), dir.dot(ax), obb.half_length),
        (rel.dot(ay), dir.dot(ay), obb.half_width),
        (origin[2] - VEHICLE_HEIGHT_M / 2.0, d[2], VEHICLE_HEIGHT_M / 2.0),
    ];
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (o, dd, half) in slabs {
        if dd == 0.0 {
            if o.abs() > half {
                return None;
            }
            continue;
        }
        let a = (-half - o) / dd;
        let b = (half - o) / dd;
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t1 < t0 || t1 <= 0.0 {
        return None;
    }
    Some(t0.max(0.0))
}

/// Per-frame marking layout, including any jitter.
struct Markings {
    offset: f64,
}

fn stripe(coord: f64, line: f64, width: f64) -> bool {
    (coord - line).abs() <= width / 2.0
}

fn dash_on(along: f64) -> bool {
    along.rem_euclid(DASH_ON_M + DASH_OFF_M) < DASH_ON_M
}

enum Surface {
    Road,
    Marking,
    Ground,
}

fn classify_ground(p: Vec2, road: &RoadGeometry, signal: SignalState, m: &Markings) -> Surface {
    let s = STRIPE_WIDTH_M;
    match *road {
        RoadGeometry::Highway {
            lane_width,
            length,
            opposite_direction,
        } => {
            if p.x < 0.0 || p.x > length || p.y.abs() > lane_width {
                return Surface::Ground;
            }
            let y = p.y - m.offset;
            let edge = stripe(y, lane_width, s) || stripe(y, -lane_width, s);
            let center = stripe(y, 0.0, s) && (opposite_direction || dash_on(p.x));
            if edge || center {
                Surface::Marking
            } else {
                Surface::Road
            }
        }
        RoadGeometry::Intersection {
            arm_length,
            lane_width,
        } => {
            let w = lane_width;
            let in_ew = p.y.abs() <= w && p.x.abs() <= arm_length;
            let in_ns = p.x.abs() <= w && p.y.abs() <= arm_length;
            if !in_ew && !in_ns {
                return Surface::Ground;
            }
            let (x, y) = (p.x - m.offset, p.y - m.offset);
            if in_ew && p.x.abs() > w {
                if stripe(y, 0.0, s) || stripe(y, w, s) || stripe(y, -w, s) {
                    return Surface::Marking;
                }
            }
            if in_ns && p.y.abs() > w {
                if stripe(x, 0.0, s) || stripe(x, w, s) || stripe(x, -w, s) {
                    return Surface::Marking;
                }
            }
            if signal != SignalState::Uncontrolled {
                let line = w + STOP_LINE_SETBACK_M;
                let sw = STOP_LINE_WIDTH_M;
                let hit = (stripe(p.x, -line, sw) && (-w..=0.0).contains(&p.y))
                    || (stripe(p.x, line, sw) && (0.0..=w).contains(&p.y))
                    || (stripe(p.y, -line, sw) && (0.0..=w).contains(&p.x))
                    || (stripe(p.y, line, sw) && (-w..=0.0).contains(&p.x));
                if hit {
                    return Surface::Marking;
                }
            }
            Surface::Road
        }
    }
}

/// Shaded intensity and hit depth per pixel, before fog and noise. Sky pixels
/// carry infinite depth.
fn shade(
    ego: &VehicleState,
    other: &FootprintOBB,
    road: &RoadGeometry,
    signal: SignalState,
    camera: &CameraModel,
    profile: &RenderProfile,
    markings: &Markings,
) -> Vec<(u8, f64)> {
    let frame = CameraFrame::new(camera, ego);
    let f = camera.focal_px();
    let mut out = Vec::with_capacity(camera.image_width * camera.image_height);
    for row in 0..camera.image_height {
        for col in 0..camera.image_width {
            let (u, v) = camera.pixel_offset(col, row);
            let d = frame.ray(f, u, v);
            let len = dot3(d, d).sqrt();
            let ground_t = if d[2] < 0.0 {
                Some(frame.origin[2] / -d[2])
            } else {
                None
            };
            let box_t = ray_box(frame.origin, d, other);
            let px = match (box_t, ground_t) {
                (Some(tb), Some(tg)) if tb <= tg => (profile.vehicle_body, tb * len),
                (Some(tb), None) => (profile.vehicle_body, tb * len),
                (_, Some(tg)) => {
                    let hit = Vec2::new(frame.origin[0] + tg * d[0], frame.origin[1] + tg * d[1]);
                    let shade = match classify_ground(hit, road, signal, markings) {
                        Surface::Road => profile.road,
                        Surface::Marking => profile.lane_marking,
                        Surface::Ground => profile.ground,
                    };
                    (shade, tg * len)
                }
                (None, None) => (profile.sky, f64::INFINITY),
            };
            out.push(px);
        }
    }
    out
}

fn draw_markings(profile: &RenderProfile, rng: &mut RngStream) -> Markings {
    let offset = if profile.geometry_jitter > 0.0 {
        rng.uniform(-profile.geometry_jitter, profile.geometry_jitter)
    } else {
        0.0
    };
    Markings { offset }
}

/// Renders without applying fog. Consumes the same random draws as
/// [`render_frame`].
#[allow(clippy::too_many_arguments)]
pub fn render_frame_unfogged(
    ego: &VehicleState,
    other: &FootprintOBB,
    road: &RoadGeometry,
    signal: SignalState,
    camera: &CameraModel,
    profile: &RenderProfile,
    rng: &mut RngStream,
) -> Image {
    let markings = draw_markings(profile, rng);
    let shaded = shade(ego, other, road, signal, camera, profile, &markings);
    finish(camera, profile, shaded.into_iter().map(|(i, _)| i as f64), rng)
}

/// Renders one dash-cam frame. `fog_density` is in 1/m and must lie in `[0, 0.05]`.
#[allow(clippy::too_many_arguments)]
pub fn render_frame(
    ego: &VehicleState,
    other: &FootprintOBB,
    road: &RoadGeometry,
    signal: SignalState,
    camera: &CameraModel,
    profile: &RenderProfile,
    fog_density: f64,
    rng: &mut RngStream,
) -> Image {
    debug_assert!((0.0..=0.05).contains(&fog_density), "fog density {fog_density}");
    let markings = draw_markings(profile, rng);
    let shaded = shade(ego, other, road, signal, camera, profile, &markings);
    let fog = profile.fog_color as f64;
    let values = shaded
        .into_iter()
        .map(|(i, depth)| apply_fog(i as f64, depth, fog_density, fog));
    finish(camera, profile, values, rng)
}

fn finish(
    camera: &CameraModel,
    profile: &RenderProfile,
    values: impl Iterator<Item = f64>,
    rng: &mut RngStream,
) -> Image {
    let pixels = values
        .map(|v| {
            let v = if profile.noise_std > 0.0 {
                v + profile.noise_std * rng.standard_normal()
            } else {
                v
            };
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Image {
        width: camera.image_width,
        height: camera.image_height,
        pixels,
    }
}
