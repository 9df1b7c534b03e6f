//! Per-specimen predictors derived from sequence metadata.
//!
//! The sinking speed is the displacement of the crop's top border between the
//! first and last frame of one camera's sequence, divided by that sequence's
//! frame count. Since the camera frame rate is fixed, frame count stands in
//! for elapsed time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{CameraId, FrameMeta, SpecimenRecord};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("sinking speed needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("mean area needs at least one frame")]
    NoFrames,
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenFeatures {
    pub mean_area_px: f64,
    /// Frame count of the reference camera.
    pub image_count: usize,
    /// Pixels per frame, positive for sinking specimens.
    pub sinking_speed: Option<f64>,
    pub pseudo_mass: f64,
}

/// `(top_first - top_last) / n` over one camera's frames in sequence order.
pub fn sinking_speed(frames: &[&FrameMeta]) -> Result<f64, FeatureError> {
    let n = frames.len();
    if n < 2 {
        return Err(FeatureError::TooFewFrames(n));
    }
    let first = frames[0].top as f64;
    let last = frames[n - 1].top as f64;
    Ok((first - last) / n as f64)
}

pub fn mean_area<'a>(frames: impl IntoIterator<Item = &'a FrameMeta>) -> Result<f64, FeatureError> {
    let (sum, n) = frames
        .into_iter()
        .fold((0.0, 0usize), |(s, n), f| (s + f.area_px, n + 1));
    if n == 0 {
        return Err(FeatureError::NoFrames);
    }
    Ok(sum / n as f64)
}

pub fn log_mass(y: f64) -> Result<f64, FeatureError> {
    if y > 0.0 {
        Ok(y.ln())
    } else {
        Err(FeatureError::NonPositiveMass(y))
    }
}

pub fn exp_mass(y_log: f64) -> f64 {
    y_log.exp()
}

/// Space in which a model's output lives: raw micrograms or natural-log
/// micrograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TargetSpace {
    #[default]
    Raw,
    Log,
}

impl TargetSpace {
    /// Maps a positive mass into this space.
    pub fn encode(self, mass: f64) -> Result<f64, FeatureError> {
        match self {
            TargetSpace::Raw if mass > 0.0 => Ok(mass),
            TargetSpace::Raw => Err(FeatureError::NonPositiveMass(mass)),
            TargetSpace::Log => log_mass(mass),
        }
    }

    /// Maps a model output back to mass space, clamped to `floor`.
    pub fn decode(self, value: f64, floor: f64) -> f64 {
        let m = match self {
            TargetSpace::Raw => value,
            TargetSpace::Log => exp_mass(value),
        };
        if m.is_nan() {
            floor
        } else {
            m.max(floor)
        }
    }
}

/// Camera whose sequence defines speed and image count: A when it has at
/// least two frames, otherwise B, otherwise whichever camera has frames.
pub fn reference_camera(specimen: &SpecimenRecord) -> CameraId {
    let count = |c| specimen.frames.iter().filter(|f| f.camera_id == c).count();
    let (a, b) = (count(CameraId::A), count(CameraId::B));
    if a >= 2 || (b < 2 && a > 0) {
        CameraId::A
    } else {
        CameraId::B
    }
}

pub fn specimen_features(specimen: &SpecimenRecord) -> Result<SpecimenFeatures, FeatureError> {
    let mean_area_px = mean_area(&specimen.frames)?;
    let reference = specimen.camera_frames(reference_camera(specimen));
    let image_count = reference.len();
    let sinking_speed = sinking_speed(&reference).ok();
    Ok(SpecimenFeatures {
        mean_area_px,
        image_count,
        sinking_speed,
        pseudo_mass: mean_area_px * image_count as f64,
    })
}

pub const FEATURES_CSV_HEADER: &str =
    "specimen_id,taxon,dry_mass_ug,mean_area_px,image_count,sinking_speed,pseudo_mass";

/// Renders the features table; absent mass or speed become empty fields.
pub fn features_csv(rows: &[(&SpecimenRecord, SpecimenFeatures)]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(FEATURES_CSV_HEADER);
    out.push('\n');
    for (s, f) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.specimen_id,
            s.taxon,
            opt(s.dry_mass_ug),
            f.mean_area_px,
            f.image_count,
            opt(f.sinking_speed),
            f.pseudo_mass
        ));
    }
    out
}
