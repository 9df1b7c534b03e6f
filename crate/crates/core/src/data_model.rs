//! Core domain types: frames, specimens, datasets and prediction sets.
//!
//! Everything here is plain data. Structural checks live in
//! [`validate_dataset`], which reports violations instead of failing so that
//! callers can print every problem in a file at once.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::Raster;

/// Which of the two imaging cameras captured a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CameraId {
    A,
    B,
}

impl CameraId {
    pub fn as_str(self) -> &'static str {
        match self {
            CameraId::A => "A",
            CameraId::B => "B",
        }
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CameraId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(CameraId::A),
            "B" => Ok(CameraId::B),
            other => Err(format!("unknown camera id {other:?}")),
        }
    }
}

/// One saved crop of a sinking specimen.
///
/// Border positions are in the full-cuvette frame of the device. In that frame
/// a sinking specimen's `top` coordinate decreases from frame to frame, which
/// makes the sinking speed positive for specimens denser than the fluid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub camera_id: CameraId,
    pub frame_index: u32,
    pub top: i64,
    pub bottom: i64,
    pub left: i64,
    pub right: i64,
    pub area_px: f64,
}

impl FrameMeta {
    /// Pixel area of the crop's bounding box.
    pub fn box_area(&self) -> f64 {
        ((self.bottom - self.top) as f64) * ((self.right - self.left) as f64)
    }
}

/// One weighed (or inference-only) individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenRecord {
    pub specimen_id: String,
    pub taxon: String,
    /// Dry mass in micrograms; `None` for inference-only records.
    pub dry_mass_ug: Option<f64>,
    pub frames: Vec<FrameMeta>,
    /// Decoded silhouettes aligned 1:1 with `frames`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rasters: Option<Vec<Raster>>,
}

impl SpecimenRecord {
    /// Frames of one camera in sequence order.
    pub fn camera_frames(&self, camera: CameraId) -> Vec<&FrameMeta> {
        self.frames.iter().filter(|f| f.camera_id == camera).collect()
    }

    /// Indices into `frames` (and `rasters`) belonging to one camera.
    pub fn camera_indices(&self, camera: CameraId) -> Vec<usize> {
        self.frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.camera_id == camera)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_camera(&self, camera: CameraId) -> bool {
        self.frames.iter().any(|f| f.camera_id == camera)
    }
}

/// A named collection of specimens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub specimens: Vec<SpecimenRecord>,
    /// Common (height, width) of every raster after padding.
    #[serde(default)]
    pub raster_dims: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, specimens: Vec<SpecimenRecord>) -> Self {
        Dataset {
            name: name.into(),
            specimens,
            raster_dims: None,
        }
    }

    pub fn taxon_set(&self) -> BTreeSet<String> {
        self.specimens.iter().map(|s| s.taxon.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.specimens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specimens.is_empty()
    }

    pub fn get(&self, specimen_id: &str) -> Option<&SpecimenRecord> {
        self.specimens.iter().find(|s| s.specimen_id == specimen_id)
    }

    /// A new dataset holding only the listed specimens, in the listed order.
    /// Unknown ids are skipped.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Dataset {
        let index: BTreeMap<&str, &SpecimenRecord> =
            self.specimens.iter().map(|s| (s.specimen_id.as_str(), s)).collect();
        Dataset {
            name: self.name.clone(),
            specimens: ids
                .iter()
                .filter_map(|id| index.get(id.as_ref()).map(|s| (*s).clone()))
                .collect(),
            raster_dims: self.raster_dims,
        }
    }

    /// Specimens matching a predicate, keeping dataset order.
    pub fn filter(&self, keep: impl Fn(&SpecimenRecord) -> bool) -> Dataset {
        Dataset {
            name: self.name.clone(),
            specimens: self.specimens.iter().filter(|s| keep(s)).cloned().collect(),
            raster_dims: self.raster_dims,
        }
    }

    pub fn has_rasters(&self) -> bool {
        !self.specimens.is_empty() && self.specimens.iter().all(|s| s.rasters.is_some())
    }

    pub fn is_two_camera(&self) -> bool {
        !self.specimens.is_empty()
            && self
                .specimens
                .iter()
                .all(|s| s.has_camera(CameraId::A) && s.has_camera(CameraId::B))
    }
}

/// One specimen-level prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub specimen_id: String,
    pub taxon: String,
    pub true_mass_ug: f64,
    pub predicted_mass_ug: f64,
    #[serde(default)]
    pub predicted_taxon: Option<String>,
}

/// Pairs of true and predicted masses over which metrics are computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub entries: Vec<PredictionEntry>,
}

impl PredictionSet {
    pub fn new(entries: Vec<PredictionEntry>) -> Self {
        PredictionSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn true_masses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.true_mass_ug).collect()
    }

    pub fn predicted_masses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.predicted_mass_ug).collect()
    }

    /// Builds a set from parallel slices; handy in tests and for FFI callers.
    pub fn from_pairs(y: &[f64], y_hat: &[f64]) -> Self {
        PredictionSet {
            entries: y
                .iter()
                .zip(y_hat)
                .enumerate()
                .map(|(i, (&t, &p))| PredictionEntry {
                    specimen_id: format!("s{i}"),
                    taxon: String::new(),
                    true_mass_ug: t,
                    predicted_mass_ug: p,
                    predicted_taxon: None,
                })
                .collect(),
        }
    }

    /// Invariant violations: non-positive masses and duplicate ids.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.specimen_id.as_str()) {
                out.push(format!("{}: duplicate specimen_id", e.specimen_id));
            }
            if !(e.true_mass_ug > 0.0) {
                out.push(format!("{}: true_mass_ug must be > 0", e.specimen_id));
            }
            if !(e.predicted_mass_ug > 0.0) {
                out.push(format!("{}: predicted_mass_ug must be > 0", e.specimen_id));
            }
        }
        out
    }
}

/// One invariant violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub specimen_id: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.specimen_id, self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, specimen_id: &str, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            specimen_id: specimen_id.to_string(),
            field: field.to_string(),
            message: message.into(),
        });
    }
}

/// Collects every structural invariant violation in `d`.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();

    for s in &d.specimens {
        let id = s.specimen_id.as_str();
        if !seen.insert(id) {
            report.push(id, "specimen_id", "specimen_id must be unique");
        }
        if let Some(m) = s.dry_mass_ug {
            if !(m > 0.0) || !m.is_finite() {
                report.push(id, "dry_mass_ug", format!("dry mass must be > 0, got {m}"));
            }
        }
        if s.frames.is_empty() {
            report.push(id, "frames", "frames must be non-empty");
        }

        let mut last_index: BTreeMap<CameraId, u32> = BTreeMap::new();
        for f in &s.frames {
            let at = format!("frames[{}:{}]", f.camera_id, f.frame_index);
            if f.top >= f.bottom {
                report.push(id, &at, "top < bottom");
            }
            if f.left >= f.right {
                report.push(id, &at, "left < right");
            }
            if !(f.area_px >= 0.0) || !f.area_px.is_finite() {
                report.push(id, &at, "area_px >= 0");
            } else if f.top < f.bottom && f.left < f.right && f.area_px > f.box_area() {
                report.push(id, &at, "area_px <= box area");
            }
            if let Some(&prev) = last_index.get(&f.camera_id) {
                if f.frame_index <= prev {
                    report.push(id, &at, "frame_index strictly increasing per camera");
                }
            }
            last_index.insert(f.camera_id, f.frame_index);
        }

        if let Some(rasters) = &s.rasters {
            if rasters.len() != s.frames.len() {
                report.push(
                    id,
                    "rasters",
                    format!("{} rasters for {} frames", rasters.len(), s.frames.len()),
                );
            }
            if let Some((h, w)) = d.raster_dims {
                for (i, r) in rasters.iter().enumerate() {
                    if r.height != h || r.width != w {
                        report.push(
                            id,
                            &format!("rasters[{i}]"),
                            format!("raster is {}x{}, dataset expects {h}x{w}", r.height, r.width),
                        );
                    }
                }
            }
        }
    }
    report
}
