//! Scenario parameters and the distributions they are drawn from.

use std::fmt::Write as _;
use std::path::Path;

use crate::catalog::{Environment, ScenarioTemplate};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Consecutive rejections after which truncated sampling gives up.
pub const MAX_REJECTIONS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionKind {
    GaussianTruncated,
    /// `mean + |N(0, std)|`, clamped to `[lower, upper]`.
    HalfNormal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl DistributionSpec {
    pub const fn gaussian(mean: f64, std: f64, lower: f64, upper: f64) -> Self {
        Self {
            kind: DistributionKind::GaussianTruncated,
            mean,
            std,
            lower,
            upper,
        }
    }

    pub const fn half_normal(std: f64, upper: f64) -> Self {
        Self {
            kind: DistributionKind::HalfNormal,
            mean: 0.0,
            std,
            lower: 0.0,
            upper,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let finite = [self.mean, self.std, self.lower, self.upper]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config(format!("{name}: non-finite distribution value")));
        }
        if self.std < 0.0 {
            return Err(Error::Config(format!("{name}: std must be >= 0")));
        }
        if self.lower >= self.upper {
            return Err(Error::Config(format!("{name}: lower must be < upper")));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        match self.kind {
            DistributionKind::GaussianTruncated => sample_gaussian_truncated(self, rng),
            DistributionKind::HalfNormal => Ok(sample_half_normal(self, rng)),
        }
    }
}

/// Rejection-resamples `N(mean, std)` until the value lies in `[lower, upper]`.
pub fn sample_gaussian_truncated(spec: &DistributionSpec, rng: &mut RngStream) -> Result<f64> {
    debug_assert_eq!(spec.kind, DistributionKind::GaussianTruncated);
    for _ in 0..MAX_REJECTIONS {
        let v = spec.mean + spec.std * rng.standard_normal();
        if v >= spec.lower && v <= spec.upper {
            return Ok(v);
        }
    }
    Err(Error::NonConvergent {
        mean: spec.mean,
        std: spec.std,
        lower: spec.lower,
        upper: spec.upper,
        attempts: MAX_REJECTIONS,
    })
}

pub fn sample_half_normal(spec: &DistributionSpec, rng: &mut RngStream) -> f64 {
    debug_assert_eq!(spec.kind, DistributionKind::HalfNormal);
    let v = spec.mean + (spec.std * rng.standard_normal()).abs();
    v.clamp(spec.lower, spec.upper)
}

/// One draw of the scenario parameters.
///
/// `adversary_speed_mps` is the second, independent speed draw; it is sampled
/// after the six shared parameters so their values do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSample {
    pub mass_kg: f64,
    pub speed_mps: f64,
    pub fog_density_per_m: f64,
    pub brake_decel_mps2: f64,
    pub lane_change_distance_m: f64,
    pub vertical_offset_m: f64,
    pub adversary_speed_mps: f64,
}

impl ParameterSample {
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let p = self;
        let checks = [
            ((800.0..=2500.0).contains(&p.mass_kg), "mass_kg in [800, 2500]"),
            (p.speed_mps > 0.0, "speed_mps > 0"),
            (p.adversary_speed_mps > 0.0, "adversary_speed_mps > 0"),
            ((2.0..=9.0).contains(&p.brake_decel_mps2), "brake_decel_mps2 in [2, 9]"),
            ((0.0..=0.05).contains(&p.fog_density_per_m), "fog_density_per_m in [0, 0.05]"),
            (p.lane_change_distance_m >= 10.0, "lane_change_distance_m >= 10"),
            (p.vertical_offset_m > 0.0, "vertical_offset_m > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, what)) => Err(format!("{what} violated by {p:?}")),
            None => Ok(()),
        }
    }
}

/// Distribution for every sampled parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub mass: DistributionSpec,
    pub speed_highway: DistributionSpec,
    pub speed_intersection: DistributionSpec,
    pub fog: DistributionSpec,
    pub brake: DistributionSpec,
    pub lane_change: DistributionSpec,
    pub vertical_offset: DistributionSpec,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            mass: DistributionSpec::gaussian(1500.0, 250.0, 800.0, 2500.0),
            speed_highway: DistributionSpec::gaussian(25.0, 3.0, 10.0, 40.0),
            speed_intersection: DistributionSpec::gaussian(12.5, 2.5, 4.0, 20.0),
            fog: DistributionSpec::half_normal(0.02, 0.05),
            brake: DistributionSpec::gaussian(6.0, 1.0, 2.0, 9.0),
            lane_change: DistributionSpec::gaussian(30.0, 8.0, 10.0, 80.0),
            vertical_offset: DistributionSpec::gaussian(3.5, 0.5, 1.5, 5.5),
        }
    }
}

const KEY_PREFIXES: [&str; 7] = [
    "mass",
    "speed.highway",
    "speed.intersection",
    "fog",
    "brake",
    "lane_change",
    "vertical_offset",
];

impl SamplingConfig {
    fn spec_mut(&mut self, prefix: &str) -> Option<&mut DistributionSpec> {
        Some(match prefix {
            "mass" => &mut self.mass,
            "speed.highway" => &mut self.speed_highway,
            "speed.intersection" => &mut self.speed_intersection,
            "fog" => &mut self.fog,
            "brake" => &mut self.brake,
            "lane_change" => &mut self.lane_change,
            "vertical_offset" => &mut self.vertical_offset,
            _ => return None,
        })
    }

    fn spec(&self, prefix: &str) -> &DistributionSpec {
        match prefix {
            "mass" => &self.mass,
            "speed.highway" => &self.speed_highway,
            "speed.intersection" => &self.speed_intersection,
            "fog" => &self.fog,
            "brake" => &self.brake,
            "lane_change" => &self.lane_change,
            "vertical_offset" => &self.vertical_offset,
            _ => unreachable!("unknown prefix {prefix}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for prefix in KEY_PREFIXES {
            self.spec(prefix).validate(prefix)?;
        }
        let bounded = [
            ("mass", 800.0, 2500.0),
            ("brake", 2.0, 9.0),
            ("fog", 0.0, 0.05),
        ];
        for (prefix, lo, hi) in bounded {
            let s = self.spec(prefix);
            if s.lower < lo || s.upper > hi {
                return Err(Error::Config(format!(
                    "{prefix}: bounds [{}, {}] exceed allowed range [{lo}, {hi}]",
                    s.lower, s.upper
                )));
            }
        }
        if self.lane_change.lower < 10.0 {
            return Err(Error::Config("lane_change.lower must be >= 10".into()));
        }
        for prefix in ["speed.highway", "speed.intersection", "vertical_offset"] {
            if self.spec(prefix).lower <= 0.0 {
                return Err(Error::Config(format!("{prefix}.lower must be > 0")));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
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
            let key = key.trim();
            let value = value.trim();
            let (prefix, field) = key
                .rsplit_once('.')
                .ok_or_else(|| parse_err(format!("unknown key `{key}`")))?;
            let spec = cfg
                .spec_mut(prefix)
                .ok_or_else(|| parse_err(format!("unknown key `{key}`")))?;
            let v: f64 = value
                .parse()
                .map_err(|_| parse_err(format!("`{value}` is not a number")))?;
            match field {
                "mean" => spec.mean = v,
                "std" => spec.std = v,
                "lower" => spec.lower = v,
                "upper" => spec.upper = v,
                _ => return Err(parse_err(format!("unknown key `{key}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Renders the config in the same `key = value` format `parse` accepts.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for prefix in KEY_PREFIXES {
            let s = self.spec(prefix);
            let kind = match s.kind {
                DistributionKind::GaussianTruncated => "truncated gaussian",
                DistributionKind::HalfNormal => "half-normal",
            };
            let _ = writeln!(out, "# {prefix}: {kind}");
            for (field, v) in [("mean", s.mean), ("std", s.std), ("lower", s.lower), ("upper", s.upper)] {
                let _ = writeln!(out, "{prefix}.{field} = {v}");
            }
        }
        out
    }
}

/// Draws the parameters in fixed order: mass, speed, fog, brake, lane-change
/// distance, vertical offset, then the adversary speed.
///
/// The two lane-change fields are drawn for every template so that streams stay
/// aligned across environments; intersection scenarios ignore them.
pub fn sample_parameters(
    template: &ScenarioTemplate,
    config: &SamplingConfig,
    rng: &mut RngStream,
) -> Result<ParameterSample> {
    let speed = match template.environment {
        Environment::Highway => &config.speed_highway,
        Environment::Intersection => &config.speed_intersection,
    };
    let mass_kg = config.mass.sample(rng)?;
    let speed_mps = speed.sample(rng)?;
    let fog_density_per_m = config.fog.sample(rng)?;
    let brake_decel_mps2 = config.brake.sample(rng)?;
    let lane_change_distance_m = config.lane_change.sample(rng)?;
    let vertical_offset_m = config.vertical_offset.sample(rng)?;
    let adversary_speed_mps = speed.sample(rng)?;
    Ok(ParameterSample {
        mass_kg,
        speed_mps,
        fog_density_per_m,
        brake_decel_mps2,
        lane_change_distance_m,
        vertical_offset_m,
        adversary_speed_mps,
    })
}
