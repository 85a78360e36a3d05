use std::path::Path;

use super::manifest::read_frame_rows;
use crate::error::Result;
use crate::render::{read_pgm, Image};

/// Images and steering labels of one manifest, in manifest order.
#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    pub images: Vec<Image>,
    pub steering_deg: Vec<f64>,
    /// As written in the manifest (relative to its directory).
    pub image_paths: Vec<String>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Loads every frame of the dataset in `dir`, optionally dropping frames
/// flagged as post-contact.
pub fn load_labeled_set(dir: &Path, exclude_post_contact: bool) -> Result<LabeledSet> {
    let mut set = LabeledSet::default();
    for row in read_frame_rows(dir)? {
        if exclude_post_contact && row.contact {
            continue;
        }
        set.images.push(read_pgm(&dir.join(&row.image_path))?);
        set.steering_deg.push(row.steering_deg);
        set.image_paths.push(row.image_path);
    }
    Ok(set)
}
