//! The fifteen pre-crash scenario templates and their instantiation into
//! concrete episode setups.
//!
//! Coordinates are meters in a right-handed ground frame. Highway roads run
//! along +x from `x = 0` to [`HIGHWAY_LENGTH_M`] with lanes centered at
//! `y = ±LANE_WIDTH_M / 2`. Intersections are centered on the origin with arms
//! along both axes; traffic keeps right, so the eastbound lane is at
//! `y = -LANE_WIDTH_M / 2` and the northbound lane at `x = +LANE_WIDTH_M / 2`.
//! The ego vehicle always approaches an intersection from the west.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sampling::ParameterSample;
use crate::sim::{StopPoint, Vec2, VehicleState, WaypointPath, EPISODE_DURATION_S};

pub const LANE_WIDTH_M: f64 = 3.5;
pub const HIGHWAY_LENGTH_M: f64 = 300.0;
pub const ARM_LENGTH_M: f64 = 100.0;
/// Distance along the arm from the intersection center to each start pose.
pub const START_DISTANCE_M: f64 = 60.0;
/// Radius of the quarter-circle turn guide (lane width + 2 m).
pub const TURN_RADIUS_M: f64 = LANE_WIDTH_M + 2.0;
/// Longitudinal position of the ego start on the highway.
pub const HIGHWAY_EGO_START_X: f64 = 20.0;

const WAYPOINT_SPACING_M: f64 = 0.5;
/// Where an intersection path ends along its exit arm.
const EXIT_DISTANCE_M: f64 = 90.0;
/// Highway paths end this far before the end of the road.
const HIGHWAY_END_MARGIN_M: f64 = 2.0;
/// Distance over which the ego blends from its perturbed start into lane center.
const EGO_BLEND_M: f64 = 25.0;
const EGO_MAX_LATERAL_OFFSET_M: f64 = 1.0;
const EGO_MAX_HEADING_ERROR_RAD: f64 = 5.0 * PI / 180.0;
/// Stop lines sit this far outside the crossing road's edge.
const STOP_LINE_SETBACK_M: f64 = 1.5;
const STOP_DWELL_S: f64 = 1.0;

/// Same-direction lane-change geometry: adversary start lead over the ego and
/// straight run before the maneuver begins.
const LANE_CHANGE_LEAD_M: f64 = 8.0;
const LANE_CHANGE_RUN_UP_M: f64 = 70.0;
const DRIFT_RUN_UP_M: f64 = 30.0;
/// Oncoming traffic starts this far before the end of the road.
const ONCOMING_START_MARGIN_M: f64 = 20.0;
const OVERTAKE_HOLD_M: f64 = 15.0;
const REAR_END_GAP_M: f64 = 30.0;
const DECELERATING_LEAD_RUN_M: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Environment {
    Highway,
    Intersection,
}

impl Environment {
    pub fn as_str(self) -> &'static str {
        match self {
            Environment::Highway => "highway",
            Environment::Intersection => "intersection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrafficControl {
    None,
    Signal,
    StopSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTemplate {
    pub id: &'static str,
    pub name: &'static str,
    pub environment: Environment,
    pub ego_behavior: &'static str,
    pub adversary_behavior: &'static str,
    pub uses_lane_change_params: bool,
    pub in_default_dataset: bool,
    pub traffic_control: TrafficControl,
}

const fn intersection(
    id: &'static str,
    name: &'static str,
    adversary_behavior: &'static str,
    traffic_control: TrafficControl,
) -> ScenarioTemplate {
    ScenarioTemplate {
        id,
        name,
        environment: Environment::Intersection,
        ego_behavior: "straight_through",
        adversary_behavior,
        uses_lane_change_params: false,
        in_default_dataset: true,
        traffic_control,
    }
}

const fn highway(
    id: &'static str,
    name: &'static str,
    adversary_behavior: &'static str,
    in_default_dataset: bool,
) -> ScenarioTemplate {
    ScenarioTemplate {
        id,
        name,
        environment: Environment::Highway,
        ego_behavior: "lane_keep",
        adversary_behavior,
        uses_lane_change_params: true,
        in_default_dataset,
        traffic_control: TrafficControl::None,
    }
}

static CATALOG: [ScenarioTemplate; 15] = [
    intersection("RunningRedLight", "Running Red Light", "cross_perpendicular", TrafficControl::Signal),
    intersection("RunningStopSign", "Running Stop Sign", "cross_perpendicular", TrafficControl::StopSign),
    intersection("TurningSameDirection", "Turning/Same Direction", "turn_left_merge", TrafficControl::Signal),
    highway("ChangingLanesSameDirection", "Changing Lanes/Same Direction", "lane_change", true),
    highway("DriftingSameDirection", "Drifting/Same Direction", "drift", true),
    highway("OppositeDirectionManeuver", "Opposite Direction/Maneuver", "overtake_oncoming", true),
    highway("OppositeDirectionNoManeuver", "Opposite Direction/No Maneuver", "drift_oncoming", true),
    highway("RearEndLeadAccelerating", "Rear-End/Lead Vehicle Accelerating", "lead_accelerating", false),
    highway("RearEndLeadMovingSlower", "Rear-End/Lead Vehicle Moving Slower", "lead_slower", false),
    highway("RearEndLeadDecelerating", "Rear-End/Lead Vehicle Decelerating", "lead_decelerating", false),
    intersection("LtapOdAtSignal", "LTAP/OD at Signal", "left_turn_opposite", TrafficControl::Signal),
    intersection("TurnRightAtSignal", "Turn Right at Signal", "turn_right_merge", TrafficControl::Signal),
    intersection("LtapOdAtNonSignal", "LTAP/OD at Non-Signal", "left_turn_opposite", TrafficControl::None),
    intersection("StraightCrossingPathAtNonSignal", "Straight Crossing Path at Non-Signal", "cross_perpendicular", TrafficControl::None),
    intersection("TurnAtNonSignal", "Turn at Non-Signal", "turn_left_across", TrafficControl::None),
];

/// All templates in catalog order.
pub fn list_scenarios() -> Vec<ScenarioTemplate> {
    CATALOG.to_vec()
}

pub fn find_scenario(id: &str) -> Result<ScenarioTemplate> {
    CATALOG
        .iter()
        .find(|t| t.id == id)
        .cloned()
        .ok_or_else(|| Error::UnknownScenario(id.to_string()))
}

/// Templates included in datasets by default (rear-end rows are excluded).
pub fn default_dataset_scenarios() -> Vec<ScenarioTemplate> {
    CATALOG.iter().filter(|t| t.in_default_dataset).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoadGeometry {
    Highway {
        lane_width: f64,
        length: f64,
        opposite_direction: bool,
    },
    Intersection {
        arm_length: f64,
        lane_width: f64,
    },
}

impl RoadGeometry {
    pub fn lane_width(&self) -> f64 {
        match *self {
            RoadGeometry::Highway { lane_width, .. } | RoadGeometry::Intersection { lane_width, .. } => {
                lane_width
            }
        }
    }
}

/// Traffic-control state; constant over an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalState {
    Uncontrolled,
    /// Ego faces green, the adversary faces red.
    EgoGreenAdversaryRed,
    FourWayStop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSetup {
    pub scenario_id: String,
    pub ego_initial: VehicleState,
    pub adversary_initial: VehicleState,
    pub ego_path: WaypointPath,
    pub adversary_path: WaypointPath,
    pub road_geometry: RoadGeometry,
    pub signal_state: SignalState,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EgoRule {
    LaneKeep,
    StraightThrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AdversaryRule {
    CrossPerpendicular,
    TurnLeftMerge,
    TurnRightMerge,
    TurnLeftAcross,
    LeftTurnOpposite,
    LaneChange,
    Drift,
    OvertakeOncoming,
    DriftOncoming,
    LeadAccelerating,
    LeadSlower,
    LeadDecelerating,
}

fn ego_rule(id: &str) -> Option<EgoRule> {
    Some(match id {
        "lane_keep" => EgoRule::LaneKeep,
        "straight_through" => EgoRule::StraightThrough,
        _ => return None,
    })
}

fn adversary_rule(id: &str) -> Option<AdversaryRule> {
    use AdversaryRule::*;
    Some(match id {
        "cross_perpendicular" => CrossPerpendicular,
        "turn_left_merge" => TurnLeftMerge,
        "turn_right_merge" => TurnRightMerge,
        "turn_left_across" => TurnLeftAcross,
        "left_turn_opposite" => LeftTurnOpposite,
        "lane_change" => LaneChange,
        "drift" => Drift,
        "overtake_oncoming" => OvertakeOncoming,
        "drift_oncoming" => DriftOncoming,
        "lead_accelerating" => LeadAccelerating,
        "lead_slower" => LeadSlower,
        "lead_decelerating" => LeadDecelerating,
        _ => return None,
    })
}

/// Builds a dense polyline through `points`.
struct PathBuilder {
    points: Vec<Vec2>,
}

impl PathBuilder {
    fn start(p: Vec2) -> Self {
        Self { points: vec![p] }
    }

    fn last(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    fn push(&mut self, p: Vec2) {
        if self.last().distance(p) > 1e-9 {
            self.points.push(p);
        }
    }

    fn line_to(mut self, to: Vec2) -> Self {
        let from = self.last();
        let n = (from.distance(to) / WAYPOINT_SPACING_M).ceil().max(1.0) as usize;
        for i in 1..=n {
            self.push(from + (to - from) * (i as f64 / n as f64));
        }
        self
    }

    /// Circular arc from angle `a0` to `a1` (radians, sign gives direction).
    fn arc(mut self, center: Vec2, radius: f64, a0: f64, a1: f64) -> Self {
        let n = ((a1 - a0).abs() * radius / WAYPOINT_SPACING_M).ceil().max(1.0) as usize;
        for i in 0..=n {
            let a = a0 + (a1 - a0) * (i as f64 / n as f64);
            self.push(center + Vec2::from_angle(a) * radius);
        }
        self
    }

    /// Travels `distance` along the direction `dir` (a unit vector) while the
    /// lateral offset, measured along `dir.perp()`, changes by `shift` with a
    /// raised-cosine profile. The endpoints are exact.
    fn shift(mut self, dir: Vec2, distance: f64, shift: f64) -> Self {
        let from = self.last();
        let n = (distance / WAYPOINT_SPACING_M).ceil().max(1.0) as usize;
        let lateral = dir.perp();
        for i in 1..=n {
            let u = i as f64 / n as f64;
            let blend = if i == n { 1.0 } else { 0.5 * (1.0 - (PI * u).cos()) };
            self.push(from + dir * (distance * u) + lateral * (shift * blend));
        }
        self
    }

    fn build(self, target_speed: f64, brake_decel: f64) -> Result<WaypointPath> {
        WaypointPath::new(self.points, target_speed, brake_decel)
    }
}

fn state_at_start(path: &WaypointPath, speed: f64, heading_offset: f64) -> VehicleState {
    let p = path.start();
    VehicleState {
        x: p.x,
        y: p.y,
        heading: path.start_heading() + heading_offset,
        speed,
        steer: 0.0,
    }
}

/// Ego start perturbation: lateral offset from lane center (m) and heading error (rad).
fn draw_ego_perturbation(rng: &mut RngStream) -> (f64, f64) {
    let lateral = rng.uniform(-EGO_MAX_LATERAL_OFFSET_M, EGO_MAX_LATERAL_OFFSET_M);
    let heading = rng.uniform(-EGO_MAX_HEADING_ERROR_RAD, EGO_MAX_HEADING_ERROR_RAD);
    (lateral, heading)
}

/// Builds the episode setup for `template` from one parameter draw.
///
/// The stream supplies, in order: the ego's lateral start offset, its heading
/// error, and a mirror bit (which lane the ego takes on same-direction
/// highways, which side a crossing adversary comes from).
pub fn instantiate(
    template: &ScenarioTemplate,
    params: &ParameterSample,
    rng: &mut RngStream,
) -> Result<EpisodeSetup> {
    let unknown = |rule: &str| Error::UnknownBehaviorRule {
        template: template.id.to_string(),
        rule: rule.to_string(),
    };
    let ego = ego_rule(template.ego_behavior).ok_or_else(|| unknown(template.ego_behavior))?;
    let adversary =
        adversary_rule(template.adversary_behavior).ok_or_else(|| unknown(template.adversary_behavior))?;

    let (lateral, heading_err) = draw_ego_perturbation(rng);
    let mirror = if rng.next_u64() >> 63 == 0 { 1.0 } else { -1.0 };

    let setup = match (template.environment, ego) {
        (Environment::Highway, EgoRule::LaneKeep) => {
            highway_setup(template, adversary, params, lateral, heading_err, mirror)?
        }
        (Environment::Intersection, EgoRule::StraightThrough) => {
            intersection_setup(template, adversary, params, lateral, heading_err, mirror)?
        }
        _ => return Err(unknown(template.ego_behavior)),
    };
    Ok(setup)
}

fn highway_setup(
    template: &ScenarioTemplate,
    rule: AdversaryRule,
    params: &ParameterSample,
    lateral: f64,
    heading_err: f64,
    mirror: f64,
) -> Result<EpisodeSetup> {
    use AdversaryRule::*;
    let half = LANE_WIDTH_M / 2.0;
    let end_x = HIGHWAY_LENGTH_M - HIGHWAY_END_MARGIN_M;
    let brake = params.brake_decel_mps2;
    let v_ego = params.speed_mps;
    let v_adv = params.adversary_speed_mps;
    let opposite = matches!(rule, OvertakeOncoming | DriftOncoming);
    let same_lane = matches!(rule, LeadAccelerating | LeadSlower | LeadDecelerating);

    // Oncoming traffic keeps right: ego in the y < 0 lane. Otherwise the ego
    // lane is picked by the mirror bit.
    let side = if opposite { 1.0 } else { mirror };
    let ego_y = -half * side;
    let ego_start = Vec2::new(HIGHWAY_EGO_START_X, ego_y + lateral);
    let ego_path = PathBuilder::start(ego_start)
        .shift(Vec2::new(1.0, 0.0), EGO_BLEND_M, -lateral)
        .line_to(Vec2::new(end_x, ego_y))
        .build(v_ego, brake)?;
    let ego_initial = state_at_start(&ego_path, v_ego, heading_err);

    let east = Vec2::new(1.0, 0.0);
    let west = Vec2::new(-1.0, 0.0);
    let adv_y = if same_lane { ego_y } else { -ego_y };
    // Lateral shift toward the ego lane, expressed in each direction's left-normal.
    let toward_ego = |dir: Vec2, magnitude: f64| {
        let sign = (ego_y - adv_y).signum() * dir.perp().y.signum();
        sign * magnitude
    };
    let lc = params.lane_change_distance_m;
    let vo = params.vertical_offset_m;

    let (adversary_path, adversary_speed) = match rule {
        LaneChange | Drift => {
            let (run_up, distance) = if rule == LaneChange {
                (LANE_CHANGE_RUN_UP_M, lc)
            } else {
                (DRIFT_RUN_UP_M, 3.0 * lc)
            };
            let x0 = HIGHWAY_EGO_START_X + LANE_CHANGE_LEAD_M;
            let path = PathBuilder::start(Vec2::new(x0, adv_y))
                .line_to(Vec2::new(x0 + run_up, adv_y))
                .shift(east, distance, toward_ego(east, vo));
            let last = path.last();
            let path = if last.x < end_x {
                path.line_to(Vec2::new(end_x, last.y))
            } else {
                path
            };
            (path.build(v_adv, brake)?, v_adv)
        }
        OvertakeOncoming | DriftOncoming => {
            let x0 = HIGHWAY_LENGTH_M - ONCOMING_START_MARGIN_M;
            let meet_x = 0.5 * (HIGHWAY_EGO_START_X + x0);
            let mut b = PathBuilder::start(Vec2::new(x0, adv_y));
            if rule == OvertakeOncoming {
                let begin = meet_x + OVERTAKE_HOLD_M / 2.0 + lc;
                b = b
                    .line_to(Vec2::new(begin, adv_y))
                    .shift(west, lc, toward_ego(west, vo));
                let held_y = b.last().y;
                b = b
                    .line_to(Vec2::new(meet_x - OVERTAKE_HOLD_M / 2.0, held_y))
                    .shift(west, lc, -toward_ego(west, vo));
            } else {
                let begin = meet_x + lc / 2.0;
                b = b
                    .line_to(Vec2::new(begin, adv_y))
                    .shift(west, lc, toward_ego(west, vo));
            }
            let last = b.last();
            let end = HIGHWAY_END_MARGIN_M;
            if last.x > end {
                b = b.line_to(Vec2::new(end, last.y));
            }
            (b.build(v_adv, brake)?, v_adv)
        }
        LeadAccelerating | LeadSlower | LeadDecelerating => {
            let x0 = HIGHWAY_EGO_START_X + REAR_END_GAP_M;
            let (end, target, initial) = match rule {
                LeadAccelerating => (end_x, v_adv, 0.4 * v_adv),
                LeadSlower => (end_x, 0.5 * v_ego, 0.5 * v_ego),
                _ => (x0 + DECELERATING_LEAD_RUN_M, v_adv, v_adv),
            };
            let path = PathBuilder::start(Vec2::new(x0, adv_y))
                .line_to(Vec2::new(end, adv_y))
                .build(target, brake)?;
            (path, initial)
        }
        _ => {
            return Err(Error::UnknownBehaviorRule {
                template: template.id.to_string(),
                rule: template.adversary_behavior.to_string(),
            })
        }
    };
    let adversary_initial = state_at_start(&adversary_path, adversary_speed, 0.0);

    Ok(EpisodeSetup {
        scenario_id: template.id.to_string(),
        ego_initial,
        adversary_initial,
        ego_path,
        adversary_path,
        road_geometry: RoadGeometry::Highway {
            lane_width: LANE_WIDTH_M,
            length: HIGHWAY_LENGTH_M,
            opposite_direction: opposite,
        },
        signal_state: SignalState::Uncontrolled,
        duration_s: EPISODE_DURATION_S,
    })
}

fn intersection_setup(
    template: &ScenarioTemplate,
    rule: AdversaryRule,
    params: &ParameterSample,
    lateral: f64,
    heading_err: f64,
    mirror: f64,
) -> Result<EpisodeSetup> {
    use AdversaryRule::*;
    let half = LANE_WIDTH_M / 2.0;
    let r = TURN_RADIUS_M;
    let brake = params.brake_decel_mps2;
    let v_ego = params.speed_mps;
    let v_adv = params.adversary_speed_mps;
    // Every start pose is START_DISTANCE_M along its arm on its lane center.
    let start_radius = START_DISTANCE_M.hypot(half);

    // Ego: eastbound, perturbed start kept on the same circle as the adversary.
    let ego_y = -half;
    let start_y = ego_y + lateral;
    let start_x = -(start_radius * start_radius - start_y * start_y).sqrt();
    let mut ego_path = PathBuilder::start(Vec2::new(start_x, start_y))
        .shift(Vec2::new(1.0, 0.0), EGO_BLEND_M, -lateral)
        .line_to(Vec2::new(EXIT_DISTANCE_M, ego_y))
        .build(v_ego, brake)?;
    if template.traffic_control == TrafficControl::StopSign {
        let front_at = -(LANE_WIDTH_M + STOP_LINE_SETBACK_M);
        let center_at = Vec2::new(front_at - crate::sim::VEHICLE_LENGTH_M / 2.0, ego_y);
        let arc_length = ego_path.project(center_at);
        ego_path = ego_path.with_stop(StopPoint {
            arc_length,
            dwell_s: STOP_DWELL_S,
        });
    }
    let ego_initial = state_at_start(&ego_path, v_ego, heading_err);

    let s = START_DISTANCE_M;
    let exit = EXIT_DISTANCE_M;
    let builder = match rule {
        CrossPerpendicular => {
            // From the south (northbound) or, mirrored, from the north.
            let x = half * mirror;
            PathBuilder::start(Vec2::new(x, -s * mirror)).line_to(Vec2::new(x, exit * mirror))
        }
        TurnRightMerge => PathBuilder::start(Vec2::new(half, -s))
            .line_to(Vec2::new(half, -half - r))
            .arc(Vec2::new(half + r, -half - r), r, PI, FRAC_PI_2)
            .line_to(Vec2::new(exit, -half)),
        TurnLeftMerge => PathBuilder::start(Vec2::new(-half, s))
            .line_to(Vec2::new(-half, r - half))
            .arc(Vec2::new(r - half, r - half), r, PI, 1.5 * PI)
            .line_to(Vec2::new(exit, -half)),
        TurnLeftAcross => PathBuilder::start(Vec2::new(half, -s))
            .line_to(Vec2::new(half, half - r))
            .arc(Vec2::new(half - r, half - r), r, 0.0, FRAC_PI_2)
            .line_to(Vec2::new(-exit, half)),
        LeftTurnOpposite => PathBuilder::start(Vec2::new(s, half))
            .line_to(Vec2::new(r - half, half))
            .arc(Vec2::new(r - half, half - r), r, FRAC_PI_2, PI)
            .line_to(Vec2::new(-half, -exit)),
        _ => {
            return Err(Error::UnknownBehaviorRule {
                template: template.id.to_string(),
                rule: template.adversary_behavior.to_string(),
            })
        }
    };
    let adversary_path = builder.build(v_adv, brake)?;
    let adversary_initial = state_at_start(&adversary_path, v_adv, 0.0);

    let signal_state = match template.traffic_control {
        TrafficControl::None => SignalState::Uncontrolled,
        TrafficControl::Signal => SignalState::EgoGreenAdversaryRed,
        TrafficControl::StopSign => SignalState::FourWayStop,
    };
    Ok(EpisodeSetup {
        scenario_id: template.id.to_string(),
        ego_initial,
        adversary_initial,
        ego_path,
        adversary_path,
        road_geometry: RoadGeometry::Intersection {
            arm_length: ARM_LENGTH_M,
            lane_width: LANE_WIDTH_M,
        },
        signal_state,
        duration_s: EPISODE_DURATION_S,
    })
}
