use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeKind {
    Collision,
    NearMiss,
    Pass,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Collision => "collision",
            OutcomeKind::NearMiss => "near_miss",
            OutcomeKind::Pass => "pass",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "collision" => Some(OutcomeKind::Collision),
            "near_miss" => Some(OutcomeKind::NearMiss),
            "pass" => Some(OutcomeKind::Pass),
            _ => None,
        }
    }
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub kind: OutcomeKind,
    /// Minimum box-to-box gap over the episode; 0 for collisions.
    pub min_clearance_m: f64,
}

pub fn classify_outcome(clearance_trace: &[f64], near_miss_threshold: f64) -> Result<Outcome> {
    let min = clearance_trace
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |m| m.min(v))))
        .ok_or(Error::EmptyTrace)?;
    let kind = if min <= 0.0 {
        OutcomeKind::Collision
    } else if min < near_miss_threshold {
        OutcomeKind::NearMiss
    } else {
        OutcomeKind::Pass
    };
    Ok(Outcome {
        kind,
        min_clearance_m: min.max(0.0),
    })
}
