//! Python module `crashforge`: catalog, dataset generation, statistics and previews.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use crashforge::catalog::{default_dataset_scenarios, find_scenario, list_scenarios};
use crashforge::dataset::{collision_stats, generate_dataset, preview_frame, split_dataset, GenerateOptions, StatsSummary};
use crashforge::learner::NetworkSpec;
use crashforge::render::{apply_fog, RenderProfile};
use crashforge::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::IncompleteDataset(_) => PyIOError::new_err(e.to_string()),
        Error::UnknownScenario(_) | Error::Config(_) | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn render_profile(name: &str) -> PyResult<RenderProfile> {
    match name {
        "sim" => Ok(RenderProfile::default()),
        "shifted" => Ok(RenderProfile::shifted()),
        _ => Err(PyValueError::new_err(format!("unknown profile `{name}` (sim or shifted)"))),
    }
}

fn stats_dict<'py>(py: Python<'py>, stats: &StatsSummary) -> PyResult<Bound<'py, PyDict>> {
    let counts = |c: &crashforge::dataset::OutcomeCounts| -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("episodes", c.total())?;
        d.set_item("collision", c.collision)?;
        d.set_item("near_miss", c.near_miss)?;
        d.set_item("pass", c.pass)?;
        d.set_item("collision_rate", c.collision_rate())?;
        d.set_item("near_miss_rate", c.near_miss_rate())?;
        Ok(d)
    };
    let out = counts(&stats.overall)?;
    let per = PyDict::new(py);
    for (id, c) in &stats.per_scenario {
        per.set_item(id, counts(c)?)?;
    }
    out.set_item("per_scenario", per)?;
    Ok(out)
}

/// List of catalog rows as dicts.
#[pyfunction]
fn scenarios(py: Python<'_>) -> PyResult<Vec<Bound<'_, PyDict>>> {
    list_scenarios()
        .iter()
        .map(|t| {
            let d = PyDict::new(py);
            d.set_item("id", t.id)?;
            d.set_item("name", t.name)?;
            d.set_item("environment", t.environment.as_str())?;
            d.set_item("in_default_dataset", t.in_default_dataset)?;
            Ok(d)
        })
        .collect()
}

/// Generates a dataset and returns its outcome statistics.
#[pyfunction]
#[pyo3(signature = (out_dir, episodes, seed, workers=1, profile="sim", frame_rate=5, include_rear_end=false))]
fn generate<'py>(
    py: Python<'py>,
    out_dir: PathBuf,
    episodes: u64,
    seed: u64,
    workers: usize,
    profile: &str,
    frame_rate: u32,
    include_rear_end: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut opts = GenerateOptions::new(episodes, seed);
    opts.workers = workers;
    opts.profile = render_profile(profile)?;
    opts.run.frame_rate_hz = frame_rate;
    opts.scenarios = if include_rear_end {
        list_scenarios()
    } else {
        default_dataset_scenarios()
    };
    let stats = py.allow_threads(|| generate_dataset(&opts, &out_dir)).map_err(to_py)?;
    stats_dict(py, &stats)
}

#[pyfunction]
fn stats(py: Python<'_>, dir: PathBuf) -> PyResult<Bound<'_, PyDict>> {
    stats_dict(py, &collision_stats(&dir).map_err(to_py)?)
}

/// Splits by episode; returns `(episodes, frames)` per split.
#[pyfunction]
#[pyo3(signature = (dir, seed, ratios=(0.8, 0.1, 0.1), exclude_post_contact=true))]
fn split(
    dir: PathBuf,
    seed: u64,
    ratios: (f64, f64, f64),
    exclude_post_contact: bool,
) -> PyResult<Vec<(usize, usize)>> {
    let s = split_dataset(&dir, [ratios.0, ratios.1, ratios.2], seed, exclude_post_contact).map_err(to_py)?;
    Ok((0..3).map(|i| (s.episodes[i], s.frames[i])).collect())
}

/// Mid-episode frame as `(width, height, pixels)`.
#[pyfunction]
#[pyo3(signature = (scenario, seed, profile="sim"))]
fn render_preview(py: Python<'_>, scenario: &str, seed: u64, profile: &str) -> PyResult<(usize, usize, Py<PyBytes>)> {
    let template = find_scenario(scenario).map_err(to_py)?;
    let mut opts = GenerateOptions::new(1, seed);
    opts.profile = render_profile(profile)?;
    let img = preview_frame(&template, &opts).map_err(to_py)?;
    Ok((img.width, img.height, PyBytes::new(py, &img.pixels).unbind()))
}

/// Exponential fog blend of one intensity.
#[pyfunction]
fn fog(intensity: f64, depth: f64, density: f64, fog_color: f64) -> f64 {
    apply_fog(intensity, depth, density, fog_color)
}

#[pyfunction]
fn parameter_count() -> PyResult<usize> {
    NetworkSpec::standard().parameter_count().map_err(to_py)
}

#[pymodule]
#[pyo3(name = "crashforge")]
fn crashforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(render_preview, m)?)?;
    m.add_function(wrap_pyfunction!(fog, m)?)?;
    m.add_function(wrap_pyfunction!(parameter_count, m)?)?;
    Ok(())
}
