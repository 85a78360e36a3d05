//! Episode-level train/val/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::manifest::{
    read_episode_rows, read_frame_rows, EPISODES_CSV, EPISODES_HEADER, FRAMES_CSV, FRAMES_HEADER,
    SUCCESS_MARKER,
};
use crate::error::{Error, Result};
use crate::rng::derive_stream;

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSummary {
    pub episodes: [usize; 3],
    pub frames: [usize; 3],
    /// Post-contact frames left out of every split.
    pub excluded_frames: usize,
}

/// Apportions `n` items by `ratios`: floors first, then one extra item to the
/// largest fractional remainders (earlier entries win ties).
pub fn largest_remainder(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Config(format!("split ratios must be positive, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must sum to 1, got {sum}")));
    }
    Ok(())
}

/// Splits the dataset in `dir` by episode into `dir/train`, `dir/val` and
/// `dir/test`. Episodes are shuffled by a stream derived from `seed`; within
/// a split they keep their original order. Image paths in the split manifests
/// point back into `dir/images`.
pub fn split_dataset(
    dir: &Path,
    ratios: [f64; 3],
    seed: u64,
    exclude_post_contact: bool,
) -> Result<SplitSummary> {
    validate_ratios(ratios)?;
    let episodes = read_episode_rows(dir)?;
    let frames = read_frame_rows(dir)?;
    if episodes.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let counts = largest_remainder(episodes.len(), &ratios);
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::InsufficientEpisodes {
            episodes: episodes.len(),
        });
    }

    let mut order: Vec<usize> = (0..episodes.len()).collect();
    derive_stream(seed, 0).shuffle(&mut order);
    let mut assignment = vec![0usize; episodes.len()];
    let mut start = 0;
    for (split, &c) in counts.iter().enumerate() {
        for &e in &order[start..start + c] {
            assignment[e] = split;
        }
        start += c;
    }
    let split_of: BTreeMap<&str, usize> = episodes
        .iter()
        .zip(&assignment)
        .map(|(e, &s)| (e.episode_id.as_str(), s))
        .collect();
    if split_of.len() != episodes.len() {
        return Err(Error::Config(format!(
            "{}: duplicate episode ids",
            dir.join(EPISODES_CSV).display()
        )));
    }

    let mut episode_text = [(); 3].map(|_| format!("{EPISODES_HEADER}\n"));
    for (e, &s) in episodes.iter().zip(&assignment) {
        let _ = writeln!(episode_text[s], "{}", e.line);
    }
    let mut frame_text = [(); 3].map(|_| format!("{FRAMES_HEADER}\n"));
    let mut frame_counts = [0usize; 3];
    let mut excluded = 0;
    let mut unknown = BTreeSet::new();
    for f in &frames {
        let Some(&s) = split_of.get(f.episode_id.as_str()) else {
            unknown.insert(f.episode_id.clone());
            continue;
        };
        if exclude_post_contact && f.contact {
            excluded += 1;
            continue;
        }
        let _ = writeln!(frame_text[s], "{}", f.to_csv(&format!("../{}", f.image_path)));
        frame_counts[s] += 1;
    }
    if let Some(id) = unknown.first() {
        return Err(Error::Config(format!(
            "{}: frames reference unknown episode {id}",
            dir.join(FRAMES_CSV).display()
        )));
    }

    for (s, name) in SPLIT_NAMES.iter().enumerate() {
        let sub = dir.join(name);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let marker = sub.join(SUCCESS_MARKER);
        if marker.exists() {
            std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
        for (file, text) in [(FRAMES_CSV, &frame_text[s]), (EPISODES_CSV, &episode_text[s])] {
            let path = sub.join(file);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        std::fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
    }
    Ok(SplitSummary {
        episodes: [counts[0], counts[1], counts[2]],
        frames: frame_counts,
        excluded_frames: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(10, &[0.8, 0.1, 0.1]), vec![8, 1, 1]);
        assert_eq!(largest_remainder(7, &[0.8, 0.1, 0.1]), vec![5, 1, 1]);
        assert_eq!(largest_remainder(3, &[1.0 / 3.0; 3]), vec![1, 1, 1]);
        assert_eq!(largest_remainder(2, &[1.0 / 3.0; 3]), vec![1, 1, 0]);
        for n in 0..50 {
            assert_eq!(largest_remainder(n, &[0.7, 0.2, 0.1]).iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn ratio_validation() {
        assert!(validate_ratios([0.8, 0.1, 0.1]).is_ok());
        assert!(validate_ratios([0.8, 0.2, 0.0]).is_err());
        assert!(validate_ratios([0.8, 0.1, 0.2]).is_err());
    }
}
