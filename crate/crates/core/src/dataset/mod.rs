//! Episode execution, dataset writing, statistics and splits.

mod generate;
mod labeled;
mod manifest;
mod split;

pub use generate::{
    generate_dataset, plan_templates, preview_frame, simulate_episode, survey_outcomes, GenerateOptions,
    PREVIEW_TIME_S,
};
pub use labeled::{load_labeled_set, LabeledSet};
pub use manifest::{
    collision_stats, collision_stats_from_csv, episode_row, format_episode_id, frame_row,
    parse_episode_rows, parse_frame_rows, read_episode_rows, read_frame_rows, require_success,
    EpisodeRow, FrameRow, OutcomeCounts, StatsSummary, EPISODES_CSV, EPISODES_HEADER, FRAMES_CSV,
    FRAMES_HEADER, SUCCESS_MARKER,
};
pub use split::{largest_remainder, split_dataset, SplitSummary, SPLIT_NAMES};

use crate::catalog::EpisodeSetup;
use crate::config::RunConfig;
use crate::error::Result;
use crate::render::{render_frame, CameraModel, Image, RenderProfile};
use crate::rng::{derive_stream, RngStream};
use crate::sampling::ParameterSample;
use crate::sim::{
    classify_outcome, footprint, max_accel_for_mass, min_clearance, Agent, Outcome, STEPS_PER_EPISODE,
    WHEELBASE_M,
};

/// The adversary's mass is not sampled; its acceleration limit uses this.
pub const ADVERSARY_MASS_KG: f64 = 1500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_index: usize,
    pub t_s: f64,
    /// Relative to the dataset root.
    pub image_path: String,
    /// Ego front-wheel command, degrees, left positive.
    pub steering_deg: f64,
    pub speed_mps: f64,
    /// Set on and after the first step with contact.
    pub contact: bool,
    /// `None` when the episode was run without rendering.
    pub image: Option<Image>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode_id: u64,
    pub scenario_id: String,
    pub master_seed: u64,
    pub episode_index: u64,
    pub params: ParameterSample,
    pub outcome: Outcome,
    pub frames: Vec<Frame>,
}

/// Stable identifier of an episode: the first seed word of its stream.
pub fn episode_id(master_seed: u64, episode_index: u64) -> u64 {
    derive_stream(master_seed, episode_index).state()[0]
}

pub fn image_rel_path(episode_index: u64, frame_index: usize) -> String {
    format!("images/{episode_index:06}/{frame_index:03}.pgm")
}

/// Simulates both agents for the full episode. Clearance is evaluated on every
/// physics step; a frame is recorded every `config.frame_stride()` steps,
/// before the step is taken. With `profile = None` nothing is rendered and
/// `rng` is not touched.
pub fn run_episode(
    setup: &EpisodeSetup,
    params: &ParameterSample,
    config: &RunConfig,
    profile: Option<&RenderProfile>,
    rng: &mut RngStream,
) -> Result<EpisodeRecord> {
    config.validate()?;
    let mut ego = Agent::new(
        setup.ego_initial,
        setup.ego_path.clone(),
        max_accel_for_mass(params.mass_kg),
        WHEELBASE_M,
    );
    let mut adversary = Agent::new(
        setup.adversary_initial,
        setup.adversary_path.clone(),
        max_accel_for_mass(ADVERSARY_MASS_KG),
        WHEELBASE_M,
    );
    let camera = CameraModel::default();
    let stride = config.frame_stride();
    let episode_index = rng.episode_index();
    let mut trace = Vec::with_capacity(STEPS_PER_EPISODE);
    let mut frames = Vec::with_capacity(STEPS_PER_EPISODE / stride);
    let mut contact = false;

    for step in 0..STEPS_PER_EPISODE {
        let other = footprint(&adversary.state);
        let clearance = min_clearance(&footprint(&ego.state), &other);
        trace.push(clearance);
        contact |= clearance <= 0.0;
        if step % stride == 0 {
            let frame_index = frames.len();
            let image = profile.map(|p| {
                render_frame(
                    &ego.state,
                    &other,
                    &setup.road_geometry,
                    setup.signal_state,
                    &camera,
                    p,
                    params.fog_density_per_m,
                    rng,
                )
            });
            frames.push(Frame {
                frame_index,
                t_s: step as f64 * config.dt_s(),
                image_path: image_rel_path(episode_index, frame_index),
                steering_deg: ego.steer_command().to_degrees(),
                speed_mps: ego.state.speed,
                contact,
                image,
            });
        }
        ego.step(config.dt_s())?;
        adversary.step(config.dt_s())?;
    }

    Ok(EpisodeRecord {
        episode_id: episode_id(rng.master_seed(), episode_index),
        scenario_id: setup.scenario_id.clone(),
        master_seed: rng.master_seed(),
        episode_index,
        params: *params,
        outcome: classify_outcome(&trace, config.near_miss_threshold_m)?,
        frames,
    })
}
