//! Run-level settings for dataset generation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::catalog::find_scenario;
use crate::error::{Error, Result};
use crate::sim::{DT_S, NEAR_MISS_THRESHOLD_M};

/// Physics steps per second.
const PHYSICS_HZ: u32 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub frame_rate_hz: u32,
    pub near_miss_threshold_m: f64,
    /// Drop frames recorded after first contact when splitting.
    pub exclude_post_contact: bool,
    /// Relative template weights; `None` means plain round-robin.
    pub scenario_weights: Option<BTreeMap<String, f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frame_rate_hz: 5,
            near_miss_threshold_m: NEAR_MISS_THRESHOLD_M,
            exclude_post_contact: true,
            scenario_weights: None,
        }
    }
}

impl RunConfig {
    pub fn dt_s(&self) -> f64 {
        DT_S
    }

    /// Physics steps between consecutive frames.
    pub fn frame_stride(&self) -> usize {
        (PHYSICS_HZ / self.frame_rate_hz) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fr = self.frame_rate_hz;
        if !(1..=PHYSICS_HZ).contains(&fr) || PHYSICS_HZ % fr != 0 {
            return Err(Error::Config(format!(
                "frame_rate_hz must divide {PHYSICS_HZ}, got {fr}"
            )));
        }
        if !(self.near_miss_threshold_m > 0.0 && self.near_miss_threshold_m.is_finite()) {
            return Err(Error::Config(format!(
                "near_miss_threshold_m must be > 0, got {}",
                self.near_miss_threshold_m
            )));
        }
        if let Some(weights) = &self.scenario_weights {
            for (id, w) in weights {
                find_scenario(id)?;
                if !(*w >= 0.0 && w.is_finite()) {
                    return Err(Error::Config(format!("weight for {id} must be >= 0, got {w}")));
                }
            }
            if weights.values().all(|&w| w == 0.0) {
                return Err(Error::Config("scenario weights are all zero".into()));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    /// Weights use `scenario_weights.<ScenarioId> = w`.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| parse_err(format!("`{v}` is not a number")))
            };
            match key {
                "frame_rate_hz" => {
                    cfg.frame_rate_hz = value
                        .parse()
                        .map_err(|_| parse_err(format!("`{value}` is not a positive integer")))?
                }
                "near_miss_threshold_m" => cfg.near_miss_threshold_m = num(value)?,
                "exclude_post_contact" => {
                    cfg.exclude_post_contact = value
                        .parse()
                        .map_err(|_| parse_err(format!("`{value}` is not true/false")))?
                }
                "dt_s" => {
                    if num(value)? != DT_S {
                        return Err(parse_err(format!("dt_s is fixed at {DT_S}")));
                    }
                }
                _ => match key.strip_prefix("scenario_weights.") {
                    Some(id) => {
                        let w = num(value)?;
                        cfg.scenario_weights
                            .get_or_insert_with(BTreeMap::new)
                            .insert(id.to_string(), w);
                    }
                    None => return Err(parse_err(format!("unknown key `{key}`"))),
                },
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "frame_rate_hz = {}", self.frame_rate_hz);
        let _ = writeln!(out, "near_miss_threshold_m = {}", self.near_miss_threshold_m);
        let _ = writeln!(out, "exclude_post_contact = {}", self.exclude_post_contact);
        let _ = writeln!(out, "# read-only");
        let _ = writeln!(out, "dt_s = {}", DT_S);
        match &self.scenario_weights {
            None => {
                let _ = writeln!(out, "# scenario_weights unset: round-robin over default templates");
            }
            Some(w) => {
                for (id, v) in w {
                    let _ = writeln!(out, "scenario_weights.{id} = {v}");
                }
            }
        }
        out
    }
}
