//! CSV manifests, the `_SUCCESS` marker and outcome statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{EpisodeRecord, Frame};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::sim::OutcomeKind;

pub const FRAMES_CSV: &str = "frames.csv";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const SUCCESS_MARKER: &str = "_SUCCESS";
pub const FRAMES_HEADER: &str = "episode_id,frame_index,t_s,image_path,steering_deg,speed_mps,contact";
pub const EPISODES_HEADER: &str = "episode_id,scenario_id,episode_index,outcome,min_clearance_m,mass_kg,speed_mps,fog_density,brake_decel,lane_change_m,vertical_offset_m";

pub fn format_episode_id(id: u64) -> String {
    format!("{id:016x}")
}

pub fn frame_row(episode_id: u64, f: &Frame) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        format_episode_id(episode_id),
        f.frame_index,
        sig6(f.t_s),
        f.image_path,
        sig6(f.steering_deg),
        sig6(f.speed_mps),
        f.contact as u8
    )
}

pub fn episode_row(rec: &EpisodeRecord) -> String {
    let p = &rec.params;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        format_episode_id(rec.episode_id),
        rec.scenario_id,
        rec.episode_index,
        rec.outcome.kind,
        sig6(rec.outcome.min_clearance_m),
        sig6(p.mass_kg),
        sig6(p.speed_mps),
        sig6(p.fog_density_per_m),
        sig6(p.brake_decel_mps2),
        sig6(p.lane_change_distance_m),
        sig6(p.vertical_offset_m),
    )
}

/// Fails with [`Error::IncompleteDataset`] unless `dir` holds the marker.
pub fn require_success(dir: &Path) -> Result<()> {
    if dir.join(SUCCESS_MARKER).is_file() {
        Ok(())
    } else {
        Err(Error::IncompleteDataset(dir.to_path_buf()))
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Splits `text` into rows after checking the header. Yields 1-based line
/// numbers alongside the fields.
pub(crate) fn csv_rows<'a>(
    text: &'a str,
    path: &Path,
    header: &str,
) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    let found = lines.next().unwrap_or("");
    if found != header {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{header}`"),
        });
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        rows.push((i + 2, fields));
    }
    Ok(rows)
}

pub(crate) fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad {name} `{s}`"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRow {
    pub episode_id: String,
    pub frame_index: usize,
    pub t_s: f64,
    pub image_path: String,
    pub steering_deg: f64,
    pub speed_mps: f64,
    pub contact: bool,
}

impl FrameRow {
    pub fn to_csv(&self, image_path: &str) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.episode_id,
            self.frame_index,
            sig6(self.t_s),
            image_path,
            sig6(self.steering_deg),
            sig6(self.speed_mps),
            self.contact as u8
        )
    }
}

pub fn parse_frame_rows(text: &str, path: &Path) -> Result<Vec<FrameRow>> {
    csv_rows(text, path, FRAMES_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let contact = match f[6] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: format!("bad contact `{other}`"),
                    })
                }
            };
            Ok(FrameRow {
                episode_id: f[0].to_string(),
                frame_index: field(path, line, "frame_index", f[1])?,
                t_s: field(path, line, "t_s", f[2])?,
                image_path: f[3].to_string(),
                steering_deg: field(path, line, "steering_deg", f[4])?,
                speed_mps: field(path, line, "speed_mps", f[5])?,
                contact,
            })
        })
        .collect()
}

/// Reads `DIR/frames.csv` of a complete dataset.
pub fn read_frame_rows(dir: &Path) -> Result<Vec<FrameRow>> {
    require_success(dir)?;
    let path = dir.join(FRAMES_CSV);
    parse_frame_rows(&read_text(&path)?, &path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub episode_id: String,
    pub scenario_id: String,
    pub episode_index: u64,
    pub outcome: OutcomeKind,
    /// The row exactly as stored.
    pub line: String,
}

pub fn parse_episode_rows(text: &str, path: &Path) -> Result<Vec<EpisodeRow>> {
    let rows = csv_rows(text, path, EPISODES_HEADER)?;
    let lines: Vec<&str> = text.lines().skip(1).collect();
    rows.into_iter()
        .map(|(line, f)| {
            let outcome = OutcomeKind::parse(f[3]).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("unknown outcome `{}`", f[3]),
            })?;
            for (i, name) in [(4, "min_clearance_m"), (5, "mass_kg"), (6, "speed_mps"), (7, "fog_density")] {
                field::<f64>(path, line, name, f[i])?;
            }
            Ok(EpisodeRow {
                episode_id: f[0].to_string(),
                scenario_id: f[1].to_string(),
                episode_index: field(path, line, "episode_index", f[2])?,
                outcome,
                line: lines[line - 2].to_string(),
            })
        })
        .collect()
}

pub fn read_episode_rows(dir: &Path) -> Result<Vec<EpisodeRow>> {
    require_success(dir)?;
    let path = dir.join(EPISODES_CSV);
    parse_episode_rows(&read_text(&path)?, &path)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutcomeCounts {
    pub collision: usize,
    pub near_miss: usize,
    pub pass: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, kind: OutcomeKind) {
        match kind {
            OutcomeKind::Collision => self.collision += 1,
            OutcomeKind::NearMiss => self.near_miss += 1,
            OutcomeKind::Pass => self.pass += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.collision + self.near_miss + self.pass
    }

    fn rate(&self, n: usize) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            n as f64 / self.total() as f64
        }
    }

    /// Fraction of episodes with physical contact.
    pub fn collision_rate(&self) -> f64 {
        self.rate(self.collision)
    }

    pub fn near_miss_rate(&self) -> f64 {
        self.rate(self.near_miss)
    }

    pub fn pass_rate(&self) -> f64 {
        self.rate(self.pass)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsSummary {
    pub overall: OutcomeCounts,
    pub per_scenario: BTreeMap<String, OutcomeCounts>,
}

impl StatsSummary {
    pub fn add(&mut self, scenario_id: &str, kind: OutcomeKind) {
        self.overall.add(kind);
        self.per_scenario.entry(scenario_id.to_string()).or_default().add(kind);
    }

    /// Plain-text table, one row per scenario plus the total.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<34} {:>8} {:>9} {:>9} {:>6} {:>10} {:>10}",
            "scenario", "episodes", "collision", "near_miss", "pass", "contact_%", "near_miss_%"
        );
        let rows = self.per_scenario.iter().map(|(k, v)| (k.as_str(), v));
        for (name, c) in rows.chain(std::iter::once(("TOTAL", &self.overall))) {
            let _ = writeln!(
                out,
                "{:<34} {:>8} {:>9} {:>9} {:>6} {:>10.2} {:>10.2}",
                name,
                c.total(),
                c.collision,
                c.near_miss,
                c.pass,
                100.0 * c.collision_rate(),
                100.0 * c.near_miss_rate()
            );
        }
        out
    }
}

/// Outcome statistics over the rows of an `episodes.csv`.
pub fn collision_stats_from_csv(text: &str, path: &Path) -> Result<StatsSummary> {
    let rows = parse_episode_rows(text, path)?;
    if rows.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let mut stats = StatsSummary::default();
    for r in &rows {
        stats.add(&r.scenario_id, r.outcome);
    }
    Ok(stats)
}

pub fn collision_stats(dir: &Path) -> Result<StatsSummary> {
    require_success(dir)?;
    let path = dir.join(EPISODES_CSV);
    collision_stats_from_csv(&read_text(&path)?, &path)
}
