//! Synthetic specimens with known mass, for end-to-end checks.
//!
//! A specimen of linear size `s` and relative density `rho` has silhouette
//! area `s^2`, mass `rho * k * s^3`, and sinks at the Stokes-style speed
//! `c * (rho - 1) * s^2`. Density never shows up in the silhouette, so only
//! the sinking sequence can reveal it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{CameraId, Dataset, FrameMeta, SpecimenRecord};
use crate::ingest::{raster_file_name, serialize_frame_csv, write_manifest, write_pgm, ManifestEntry, Raster};
use crate::rng::indexed_substream;

const DARK: u8 = 30;
const LIGHT: u8 = 230;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("specimen {specimen_id}: silhouette of {area} px does not fit a {dim}x{dim} raster")]
    SilhouetteTooLarge { specimen_id: String, area: f64, dim: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub name: String,
    /// Density relative to the fluid; above 1 sinks.
    pub density_range: (f64, f64),
    /// `(mu, sigma)` of `ln s`.
    pub size_lognormal: (f64, f64),
    pub count: usize,
    /// Major over minor ellipse axis; 1 gives a circular silhouette.
    #[serde(default = "unit")]
    pub aspect_ratio: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub groups: Vec<GroupConfig>,
    pub cuvette_height_px: f64,
    /// Time between frames, in the units of the speed constant.
    pub dt: f64,
    pub area_noise_cv: f64,
    pub seed: u64,
    /// Mass constant `k` in `mass = rho * k * s^3`.
    pub mass_constant: f64,
    /// Speed constant `c` in `v = c * (rho - 1) * s^2`.
    pub speed_constant: f64,
    pub max_frames: usize,
    pub two_cameras: bool,
    /// Side of the square silhouette rasters; `None` skips rasterization.
    pub raster_size: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let group = |name: &str, lo, hi| GroupConfig {
            name: name.into(),
            density_range: (lo, hi),
            size_lognormal: (10f64.ln(), 0.3),
            count: 100,
            aspect_ratio: 1.0,
        };
        SynthConfig {
            groups: vec![group("A", 1.05, 1.2), group("B", 1.4, 1.7), group("C", 2.0, 2.6)],
            cuvette_height_px: 400.0,
            dt: 1.0,
            area_noise_cv: 0.05,
            seed: 0,
            mass_constant: 0.01,
            speed_constant: 0.2,
            max_frames: 200,
            two_cameras: false,
            raster_size: None,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.groups.is_empty() {
            return bad("at least one group is required".into());
        }
        for g in &self.groups {
            let (lo, hi) = g.density_range;
            if g.count < 1 {
                return bad(format!("group {} needs count >= 1", g.name));
            }
            if !(lo > 0.0 && lo <= hi) {
                return bad(format!("group {} density range must satisfy 0 < lo <= hi", g.name));
            }
            if !(g.size_lognormal.1 >= 0.0) || !g.size_lognormal.0.is_finite() {
                return bad(format!("group {} has an invalid size distribution", g.name));
            }
            if !(g.aspect_ratio >= 1.0) {
                return bad(format!("group {} aspect ratio must be >= 1", g.name));
            }
        }
        if !(self.cuvette_height_px > 0.0 && self.dt > 0.0 && self.mass_constant > 0.0 && self.speed_constant > 0.0) {
            return bad("cuvette height, dt and constants must be positive".into());
        }
        if !(self.area_noise_cv >= 0.0) {
            return bad("area_noise_cv must be >= 0".into());
        }
        if self.max_frames < 1 {
            return bad("max_frames must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub group: String,
    pub density: f64,
    pub size: f64,
    /// `k * s^3`, so that `mass = density * volume`.
    pub volume: f64,
    pub mass: f64,
    /// Displacement per frame, positive downward.
    pub true_speed: f64,
    pub base_area: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub specimens: BTreeMap<String, TruthEntry>,
}

/// Frame count for a displacement of `step` pixels per frame.
pub fn frame_count(height: f64, step: f64, max_frames: usize) -> usize {
    if step == 0.0 {
        return max_frames;
    }
    ((height / step.abs()).ceil() as usize).clamp(1, max_frames)
}

/// Box side comfortably enclosing an ellipse of the given area.
fn box_side(area: f64, aspect: f64) -> i64 {
    let semi_major = (area * aspect / std::f64::consts::PI).sqrt();
    (2.0 * semi_major).ceil() as i64 + 4
}

struct Drawn {
    record: SpecimenRecord,
    truth: TruthEntry,
}

fn draw_specimen(cfg: &SynthConfig, group: &GroupConfig, id: String, index: u64) -> Result<Drawn, SynthError> {
    let mut rng = indexed_substream(cfg.seed, "synth", index);
    let (lo, hi) = group.density_range;
    let density = if lo < hi { rng.random_range(lo..hi) } else { lo };
    let (mu, sigma) = group.size_lognormal;
    let size = if sigma > 0.0 {
        LogNormal::new(mu, sigma).expect("validated").sample(&mut rng)
    } else {
        mu.exp()
    };
    let volume = cfg.mass_constant * size.powi(3);
    let mass = density * volume;
    let base_area = size * size;
    let true_speed = cfg.speed_constant * (density - 1.0) * base_area * cfg.dt;
    let n = frame_count(cfg.cuvette_height_px, true_speed, cfg.max_frames);
    let noise = (cfg.area_noise_cv > 0.0).then(|| Normal::new(0.0, cfg.area_noise_cv).expect("validated"));

    let cameras: &[CameraId] = if cfg.two_cameras {
        &[CameraId::A, CameraId::B]
    } else {
        &[CameraId::A]
    };
    let start = if true_speed >= 0.0 { cfg.cuvette_height_px } else { 0.0 };
    let mut frames = Vec::with_capacity(n * cameras.len());
    for &camera in cameras {
        let left = rng.random_range(0..40i64);
        for i in 0..n {
            let area = match &noise {
                Some(d) => (base_area * (1.0 + d.sample(&mut rng))).max(1.0),
                None => base_area,
            };
            let side = box_side(area, group.aspect_ratio);
            let top = (start - i as f64 * true_speed).round() as i64;
            frames.push(FrameMeta {
                camera_id: camera,
                frame_index: i as u32,
                top,
                bottom: top + side,
                left,
                right: left + side,
                area_px: area,
            });
        }
    }

    let mut record = SpecimenRecord {
        specimen_id: id,
        taxon: group.name.clone(),
        dry_mass_ug: Some(mass),
        frames,
        rasters: None,
    };
    if let Some(dim) = cfg.raster_size {
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let mut rasters = Vec::with_capacity(record.frames.len());
        for f in &record.frames {
            let jitter = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let turn = if f.camera_id == CameraId::B {
                std::f64::consts::FRAC_PI_2
            } else {
                0.0
            };
            rasters.push(
                rasterize(f.area_px, group.aspect_ratio, angle + turn, jitter, dim).map_err(|e| match e {
                    SynthError::SilhouetteTooLarge { area, dim, .. } => SynthError::SilhouetteTooLarge {
                        specimen_id: record.specimen_id.clone(),
                        area,
                        dim,
                    },
                    other => other,
                })?,
            );
        }
        record.rasters = Some(rasters);
    }
    Ok(Drawn {
        record,
        truth: TruthEntry {
            group: group.name.clone(),
            density,
            size,
            volume,
            mass,
            true_speed,
            base_area,
        },
    })
}

/// Dark ellipse of `round(area)` pixels on a light background: the pixels
/// with the smallest elliptical distance from the (jittered) centre.
pub fn rasterize(area: f64, aspect: f64, angle: f64, jitter: (f64, f64), dim: usize) -> Result<Raster, SynthError> {
    let too_large = || SynthError::SilhouetteTooLarge {
        specimen_id: String::new(),
        area,
        dim,
    };
    let count = area.round() as usize;
    let semi_major = (area * aspect / std::f64::consts::PI).sqrt();
    if count > dim * dim || semi_major > dim as f64 / 2.0 {
        return Err(too_large());
    }
    let semi_minor = semi_major / aspect;
    let c = (dim as f64 - 1.0) / 2.0;
    let (cy, cx) = (c + jitter.0, c + jitter.1);
    let (sin, cos) = angle.sin_cos();
    let mut order: Vec<(f64, usize)> = (0..dim * dim)
        .map(|i| {
            let (y, x) = ((i / dim) as f64 - cy, (i % dim) as f64 - cx);
            let u = cos * x + sin * y;
            let v = -sin * x + cos * y;
            ((u / semi_major).powi(2) + (v / semi_minor).powi(2), i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut r = Raster::filled(dim, dim, LIGHT);
    for &(_, i) in order.iter().take(count) {
        r.pixels[i] = DARK;
    }
    Ok(r)
}

/// Draws every specimen; each has its own seeded stream, so the result is
/// independent of thread scheduling.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth), SynthError> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for g in &cfg.groups {
        for i in 0..g.count {
            jobs.push((g, format!("{}-{:04}", g.name, i)));
        }
    }
    let drawn: Vec<Drawn> = jobs
        .into_par_iter()
        .enumerate()
        .map(|(index, (g, id))| draw_specimen(cfg, g, id, index as u64))
        .collect::<Result<_, _>>()?;
    let mut truth = GroundTruth::default();
    let mut specimens = Vec::with_capacity(drawn.len());
    for d in drawn {
        truth.specimens.insert(d.record.specimen_id.clone(), d.truth);
        specimens.push(d.record);
    }
    let mut dataset = Dataset::new(format!("synth-{}", cfg.seed), specimens);
    dataset.raster_dims = cfg.raster_size.map(|s| (s, s));
    Ok((dataset, truth))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `manifest.json`, one frame CSV (and raster directory) per
/// specimen, and `ground_truth.json`, all with manifest-relative paths.
pub fn write_synth(out: &Path, dataset: &Dataset, truth: &GroundTruth) -> Result<PathBuf, SynthError> {
    let mut entries = Vec::with_capacity(dataset.len());
    for s in &dataset.specimens {
        let rel = PathBuf::from("specimens").join(&s.specimen_id);
        let csv = rel.join("frames.csv");
        write(&out.join(&csv), serialize_frame_csv(&s.frames).as_bytes())?;
        let raster_dir = match &s.rasters {
            Some(rasters) => {
                let dir = rel.join("rasters");
                for (f, r) in s.frames.iter().zip(rasters) {
                    write(&out.join(&dir).join(raster_file_name(f)), &write_pgm(r))?;
                }
                Some(dir)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            specimen_id: s.specimen_id.clone(),
            taxon: s.taxon.clone(),
            dry_mass_ug: s.dry_mass_ug,
            metadata_csv_path: csv,
            raster_dir,
        });
    }
    let manifest = out.join("manifest.json");
    write_manifest(&manifest, &entries)?;
    write(
        &out.join("ground_truth.json"),
        (serde_json::to_string_pretty(truth)? + "\n").as_bytes(),
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::validate_dataset;
    use crate::features::specimen_features;
    use crate::linear::fit_ols;

    fn small(count: usize) -> SynthConfig {
        let mut c = SynthConfig::default();
        for g in c.groups.iter_mut() {
            g.count = count;
        }
        c
    }

    #[test]
    fn generated_data_is_valid_and_deterministic() {
        let cfg = small(20);
        let (d, t) = generate(&cfg).unwrap();
        assert!(validate_dataset(&d).is_valid());
        assert_eq!(d.len(), 60);
        for (id, e) in &t.specimens {
            assert_eq!(e.mass, e.density * e.volume);
            assert!(e.mass > 0.0);
            assert!(e.true_speed > 0.0, "{id}");
        }
        assert_eq!(generate(&cfg).unwrap().0, d);
    }

    #[test]
    fn doubling_excess_density_halves_frames() {
        let step = |rho: f64| 0.2 * (rho - 1.0) * 100.0;
        for rho in [1.05, 1.1, 1.3, 1.5] {
            let n1 = frame_count(400.0, step(rho), 1000);
            let n2 = frame_count(400.0, step(1.0 + 2.0 * (rho - 1.0)), 1000);
            assert!((n1 as i64 - 2 * n2 as i64).abs() <= 1, "{n1} {n2}");
        }
    }

    #[test]
    fn recovered_speed_matches_truth() {
        let (d, t) = generate(&small(30)).unwrap();
        for s in &d.specimens {
            let f = specimen_features(s).unwrap();
            let truth = t.specimens[&s.specimen_id].true_speed;
            let n = f.image_count as f64;
            // (first - last) / n spans n - 1 steps; rounding adds 1 px
            if f.image_count < 200 {
                let speed = f.sinking_speed.unwrap();
                assert!((speed - truth).abs() <= (truth + 1.0) / n, "{speed} vs {truth}");
            }
        }
    }

    #[test]
    fn noise_free_areas_are_exact() {
        let mut cfg = small(5);
        cfg.area_noise_cv = 0.0;
        let (d, t) = generate(&cfg).unwrap();
        for s in &d.specimens {
            let base = t.specimens[&s.specimen_id].base_area;
            assert!(s.frames.iter().all(|f| f.area_px == base));
        }
    }

    #[test]
    fn raster_pixel_count_matches_area() {
        let r = rasterize(100.0, 1.0, 0.3, (0.4, -0.2), 32).unwrap();
        assert_eq!(r.count_below(128), 100);
        for area in [30.0, 57.4, 140.2, 300.0] {
            let r = rasterize(area, 1.6, 1.1, (0.0, 0.5), 32).unwrap();
            let got = r.count_below(128) as f64;
            assert!((got - area).abs() <= 0.02 * area);
        }
        assert!(matches!(
            rasterize(1100.0, 1.0, 0.0, (0.0, 0.0), 32),
            Err(SynthError::SilhouetteTooLarge { .. })
        ));
    }

    #[test]
    fn equal_area_gives_identical_silhouette() {
        let a = rasterize(80.0, 1.0, 0.2, (0.1, 0.1), 24).unwrap();
        let b = rasterize(80.0, 1.0, 0.2, (0.1, 0.1), 24).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn speed_separates_densities() {
        let (d, _) = generate(&small(25)).unwrap();
        let mut x1 = Vec::new();
        let mut x2 = Vec::new();
        let mut y = Vec::new();
        for s in &d.specimens {
            let f = specimen_features(s).unwrap();
            x1.push(vec![f.mean_area_px]);
            x2.push(vec![f.mean_area_px, f.sinking_speed.unwrap()]);
            y.push(s.dry_mass_ug.unwrap());
        }
        let rss = |x: &[Vec<f64>]| {
            let fit = fit_ols(x, &y).unwrap();
            x.iter()
                .zip(&y)
                .map(|(r, t)| {
                    let p = fit.intercept + r.iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum::<f64>();
                    (t - p).powi(2)
                })
                .sum::<f64>()
        };
        assert!(rss(&x2) < rss(&x1));
    }

    #[test]
    fn written_files_reload() {
        let mut cfg = small(3);
        cfg.raster_size = Some(32);
        cfg.two_cameras = true;
        for g in cfg.groups.iter_mut() {
            g.size_lognormal = (8f64.ln(), 0.1);
        }
        let (d, t) = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_synth(dir.path(), &d, &t).unwrap();
        let back = crate::ingest::read_dataset(&manifest, None).unwrap();
        assert_eq!(back.specimens, d.specimens);
        assert!(back.is_two_camera());
    }
}
