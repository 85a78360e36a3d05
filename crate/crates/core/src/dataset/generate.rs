//! Parallel episode generation with an order-preserving writer.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::manifest::{
    episode_row, frame_row, StatsSummary, EPISODES_CSV, EPISODES_HEADER, FRAMES_CSV, FRAMES_HEADER,
    SUCCESS_MARKER,
};
use super::{run_episode, EpisodeRecord};
use crate::catalog::{default_dataset_scenarios, instantiate, ScenarioTemplate};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::render::{write_pgm, RenderProfile};
use crate::rng::derive_stream;
use crate::sampling::{sample_parameters, SamplingConfig};

/// Episodes simulated per worker between writer flushes.
const EPISODES_PER_WORKER_CHUNK: usize = 2;

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    /// Templates cycled over, in this order.
    pub scenarios: Vec<ScenarioTemplate>,
    pub episodes: u64,
    pub master_seed: u64,
    pub sampling: SamplingConfig,
    pub run: RunConfig,
    pub profile: RenderProfile,
    pub workers: usize,
}

impl GenerateOptions {
    /// Default templates, configs and profile; one worker.
    pub fn new(episodes: u64, master_seed: u64) -> Self {
        Self {
            scenarios: default_dataset_scenarios(),
            episodes,
            master_seed,
            sampling: SamplingConfig::default(),
            run: RunConfig::default(),
            profile: RenderProfile::default(),
            workers: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episode count must be >= 1".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("no scenarios selected".into()));
        }
        if !self.profile.is_valid() {
            return Err(Error::Config("render profile is invalid".into()));
        }
        self.sampling.validate()?;
        self.run.validate()
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

/// Template index for each of `n` episodes by smooth weighted round-robin.
/// Equal weights give plain round-robin `0, 1, 2, ...`.
pub fn plan_templates(weights: &[f64], n: u64) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Config("scenario weights must be >= 0 with a positive sum".into()));
    }
    let mut current = vec![0.0; weights.len()];
    let mut plan = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mut best = 0;
        for (i, w) in weights.iter().enumerate() {
            current[i] += w;
            if current[i] > current[best] {
                best = i;
            }
        }
        current[best] -= total;
        plan.push(best);
    }
    Ok(plan)
}

fn template_plan(opts: &GenerateOptions) -> Result<Vec<usize>> {
    let weights: Vec<f64> = match &opts.run.scenario_weights {
        None => vec![1.0; opts.scenarios.len()],
        Some(map) => opts
            .scenarios
            .iter()
            .map(|t| map.get(t.id).copied().unwrap_or(1.0))
            .collect(),
    };
    plan_templates(&weights, opts.episodes)
}

/// Samples, instantiates and runs episode `index`. Errors are tagged with the
/// episode index and scenario.
pub fn simulate_episode(
    template: &ScenarioTemplate,
    index: u64,
    opts: &GenerateOptions,
    render: bool,
) -> Result<EpisodeRecord> {
    let run = || -> Result<EpisodeRecord> {
        let mut rng = derive_stream(opts.master_seed, index);
        let params = sample_parameters(template, &opts.sampling, &mut rng)?;
        let setup = instantiate(template, &params, &mut rng)?;
        run_episode(&setup, &params, &opts.run, render.then_some(&opts.profile), &mut rng)
    };
    run().map_err(|e| Error::Episode {
        index,
        scenario: template.id.to_string(),
        source: Box::new(e),
    })
}

/// Time of the frame written by [`preview_frame`].
pub const PREVIEW_TIME_S: f64 = 5.0;

/// Runs episode 0 of `template` under `opts.master_seed` and returns the frame
/// recorded closest to [`PREVIEW_TIME_S`].
pub fn preview_frame(template: &ScenarioTemplate, opts: &GenerateOptions) -> Result<crate::render::Image> {
    opts.run.validate()?;
    let rec = simulate_episode(template, 0, opts, true)?;
    let frame = rec
        .frames
        .into_iter()
        .min_by(|a, b| (a.t_s - PREVIEW_TIME_S).abs().total_cmp(&(b.t_s - PREVIEW_TIME_S).abs()))
        .expect("episodes always record frames");
    Ok(frame.image.expect("rendered episode"))
}

/// Runs every episode without rendering and tallies outcomes.
pub fn survey_outcomes(opts: &GenerateOptions) -> Result<StatsSummary> {
    opts.validate()?;
    let plan = template_plan(opts)?;
    let records: Vec<Result<(String, crate::sim::OutcomeKind)>> = opts.pool()?.install(|| {
        plan.par_iter()
            .enumerate()
            .map(|(i, &t)| {
                simulate_episode(&opts.scenarios[t], i as u64, opts, false)
                    .map(|r| (r.scenario_id, r.outcome.kind))
            })
            .collect()
    });
    let mut stats = StatsSummary::default();
    for r in records {
        let (id, kind) = r?;
        stats.add(&id, kind);
    }
    Ok(stats)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn remove_if_present(path: &Path) -> Result<()> {
    let res = if path.is_dir() {
        std::fs::remove_dir_all(path)
    } else {
        std::fs::remove_file(path)
    };
    match res {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

/// Creates `out_dir` or clears a previous dataset in it. A non-empty
/// directory that is not a dataset is refused.
fn prepare_out_dir(out_dir: &Path) -> Result<()> {
    // Invalidate first so an interrupted rewrite never looks complete.
    remove_if_present(&out_dir.join(SUCCESS_MARKER))?;
    if out_dir.exists() {
        // Stale splits would point at replaced images, so they go too.
        let ours = [FRAMES_CSV, EPISODES_CSV, "images", "train", "val", "test"];
        let entries = std::fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let mut foreign = false;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(out_dir, e))?;
            let name = entry.file_name();
            foreign |= !ours.iter().any(|o| name == *o);
        }
        if foreign && !out_dir.join(FRAMES_CSV).exists() {
            return Err(Error::Config(format!(
                "{} is not empty and does not hold a dataset",
                out_dir.display()
            )));
        }
        for o in ours {
            remove_if_present(&out_dir.join(o))?;
        }
    }
    std::fs::create_dir_all(out_dir.join("images")).map_err(|e| Error::io(out_dir, e))
}

/// Generates `opts.episodes` episodes into `out_dir`. Workers simulate and
/// render in parallel; a single writer commits episodes in index order, so the
/// output is byte-identical for any worker count. `_SUCCESS` is written last.
pub fn generate_dataset(opts: &GenerateOptions, out_dir: &Path) -> Result<StatsSummary> {
    opts.validate()?;
    let plan = template_plan(opts)?;
    prepare_out_dir(out_dir)?;
    let pool = opts.pool()?;

    let frames_path = out_dir.join(FRAMES_CSV);
    let episodes_path = out_dir.join(EPISODES_CSV);
    let mut frames_csv = create(&frames_path)?;
    let mut episodes_csv = create(&episodes_path)?;
    writeln!(frames_csv, "{FRAMES_HEADER}").map_err(|e| Error::io(&frames_path, e))?;
    writeln!(episodes_csv, "{EPISODES_HEADER}").map_err(|e| Error::io(&episodes_path, e))?;

    let mut stats = StatsSummary::default();
    let chunk = opts.workers.max(1) * EPISODES_PER_WORKER_CHUNK;
    let indexed: Vec<(u64, usize)> = plan.iter().enumerate().map(|(i, &t)| (i as u64, t)).collect();
    for batch in indexed.chunks(chunk) {
        let records: Vec<Result<EpisodeRecord>> = pool.install(|| {
            batch
                .par_iter()
                .map(|&(i, t)| simulate_episode(&opts.scenarios[t], i, opts, true))
                .collect()
        });
        for rec in records {
            let rec = rec?;
            let ep_dir = out_dir.join(format!("images/{:06}", rec.episode_index));
            std::fs::create_dir_all(&ep_dir).map_err(|e| Error::io(&ep_dir, e))?;
            for f in &rec.frames {
                let image = f.image.as_ref().expect("rendered episode");
                write_pgm(&out_dir.join(&f.image_path), image)?;
                writeln!(frames_csv, "{}", frame_row(rec.episode_id, f))
                    .map_err(|e| Error::io(&frames_path, e))?;
            }
            writeln!(episodes_csv, "{}", episode_row(&rec)).map_err(|e| Error::io(&episodes_path, e))?;
            stats.add(&rec.scenario_id, rec.outcome.kind);
        }
    }
    frames_csv.flush().map_err(|e| Error::io(&frames_path, e))?;
    episodes_csv.flush().map_err(|e| Error::io(&episodes_path, e))?;
    let marker = out_dir.join(SUCCESS_MARKER);
    std::fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
    Ok(stats)
}
