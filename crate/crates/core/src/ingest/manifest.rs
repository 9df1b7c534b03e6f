use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{validate_dataset, Dataset, FrameMeta, SpecimenRecord};

use super::{load_raster, pad_mirror, parse_frame_csv, IngestError, Raster};

/// One line of a dataset manifest. Relative paths resolve against the
/// manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub specimen_id: String,
    pub taxon: String,
    pub dry_mass_ug: Option<f64>,
    #[serde(rename = "metadata_csv")]
    pub metadata_csv_path: PathBuf,
    #[serde(default)]
    pub raster_dir: Option<PathBuf>,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IngestError> {
    let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), IngestError> {
    let text = serde_json::to_string_pretty(entries)?;
    std::fs::write(path, text + "\n").map_err(|e| IngestError::io(path, e))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// File name a frame's silhouette is stored under inside a raster directory.
pub fn raster_file_name(f: &FrameMeta) -> String {
    format!("{}_{}.pgm", f.camera_id, f.frame_index)
}

fn load_entry(entry: &ManifestEntry, base: &Path) -> Result<(SpecimenRecord, Vec<Raster>), IngestError> {
    let csv_path = resolve(base, &entry.metadata_csv_path);
    let bytes = std::fs::read(&csv_path).map_err(|e| IngestError::io(&csv_path, e))?;
    let frames = parse_frame_csv(&bytes)?;

    let mut rasters = Vec::new();
    if let Some(dir) = &entry.raster_dir {
        let dir = resolve(base, dir);
        for f in &frames {
            let path = dir.join(raster_file_name(f));
            let bytes = std::fs::read(&path).map_err(|e| IngestError::io(&path, e))?;
            let r = load_raster(&bytes, None)?;
            if !r.is_square() {
                return Err(IngestError::NonSquareRaster {
                    height: r.height,
                    width: r.width,
                });
            }
            rasters.push(r);
        }
    }

    let record = SpecimenRecord {
        specimen_id: entry.specimen_id.clone(),
        taxon: entry.taxon.clone(),
        dry_mass_ug: entry.dry_mass_ug,
        frames,
        rasters: None,
    };
    Ok((record, rasters))
}

fn fit_to_target(r: Raster, target: usize) -> Result<Raster, IngestError> {
    let size = r.height;
    if size > target {
        return Err(IngestError::RasterLargerThanTarget { size, target });
    }
    if !(target - size).is_multiple_of(2) {
        return Err(IngestError::DimensionMismatch {
            expected_h: target,
            expected_w: target,
            found_h: size,
            found_w: size,
        });
    }
    pad_mirror(&r, (target - size) / 2)
}

/// Loads every manifest entry (in parallel; output keeps manifest order),
/// mirror-pads rasters up to `raster_size` and validates the result.
///
/// With `raster_size = None` the target is the largest raster found.
pub fn assemble_dataset(
    name: &str,
    manifest: &[ManifestEntry],
    base_dir: &Path,
    raster_size: Option<usize>,
) -> Result<Dataset, IngestError> {
    let loaded: Vec<(SpecimenRecord, Vec<Raster>)> = manifest
        .par_iter()
        .map(|e| load_entry(e, base_dir).map_err(|err| err.for_specimen(&e.specimen_id)))
        .collect::<Result<_, _>>()?;

    let target = raster_size.or_else(|| loaded.iter().flat_map(|(_, rs)| rs.iter().map(|r| r.height)).max());

    let mut specimens = Vec::with_capacity(loaded.len());
    let mut any_rasters = false;
    for (mut record, rasters) in loaded {
        if !rasters.is_empty() {
            any_rasters = true;
            let target = target.expect("rasters present imply a target size");
            let padded = rasters
                .into_iter()
                .map(|r| fit_to_target(r, target))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.for_specimen(&record.specimen_id))?;
            record.rasters = Some(padded);
        }
        specimens.push(record);
    }

    let dataset = Dataset {
        name: name.to_string(),
        specimens,
        raster_dims: if any_rasters { target.map(|t| (t, t)) } else { None },
    };
    let report = validate_dataset(&dataset);
    if !report.is_valid() {
        return Err(IngestError::InvalidDataset(report.violations));
    }
    Ok(dataset)
}

/// Reads either a manifest (JSON array) or a dataset written by the `ingest`
/// command (JSON object).
pub fn read_dataset(path: &Path, raster_size: Option<usize>) -> Result<Dataset, IngestError> {
    let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)?;
    if value.is_array() {
        let manifest: Vec<ManifestEntry> = serde_json::from_value(value)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let name = path
            .parent()
            .and_then(|p| p.file_name())
            .or_else(|| path.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        assemble_dataset(&name, &manifest, base, raster_size)
    } else {
        let dataset: Dataset = serde_json::from_value(value)?;
        let report = validate_dataset(&dataset);
        if !report.is_valid() {
            return Err(IngestError::InvalidDataset(report.violations));
        }
        Ok(dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::CameraId;
    use crate::ingest::{serialize_frame_csv, write_pgm};

    fn frames(n: u32) -> Vec<FrameMeta> {
        (0..n)
            .map(|i| FrameMeta {
                camera_id: CameraId::A,
                frame_index: i,
                top: 400 - 10 * i as i64,
                bottom: 450 - 10 * i as i64,
                left: 0,
                right: 50,
                area_px: 100.0,
            })
            .collect()
    }

    fn write_specimen(dir: &Path, id: &str, n: u32, raster: Option<usize>) -> ManifestEntry {
        std::fs::write(dir.join(format!("{id}.csv")), serialize_frame_csv(&frames(n))).unwrap();
        let raster_dir = raster.map(|size| {
            let rdir = dir.join(id);
            std::fs::create_dir_all(&rdir).unwrap();
            for f in frames(n) {
                let r = Raster::filled(size, size, 200);
                std::fs::write(rdir.join(raster_file_name(&f)), write_pgm(&r)).unwrap();
            }
            PathBuf::from(id)
        });
        ManifestEntry {
            specimen_id: id.into(),
            taxon: "Diptera".into(),
            dry_mass_ug: Some(12.5),
            metadata_csv_path: PathBuf::from(format!("{id}.csv")),
            raster_dir,
        }
    }

    #[test]
    fn assembles_two_entries() {
        let dir = tempfile::tempdir().unwrap();
        let m = vec![
            write_specimen(dir.path(), "s1", 3, None),
            write_specimen(dir.path(), "s2", 4, None),
        ];
        let d = assemble_dataset("t", &m, dir.path(), None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.specimens[1].frames.len(), 4);
        assert_eq!(d.raster_dims, None);
    }

    #[test]
    fn missing_csv_names_specimen() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = write_specimen(dir.path(), "s1", 3, None);
        e.specimen_id = "ghost".into();
        e.metadata_csv_path = "nope.csv".into();
        let err = assemble_dataset("t", &[e], dir.path(), None).unwrap_err();
        assert!(matches!(&err, IngestError::Specimen { specimen_id, .. } if specimen_id == "ghost"));
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn small_rasters_are_padded_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = vec![
            write_specimen(dir.path(), "small", 2, Some(448)),
            write_specimen(dir.path(), "big", 2, Some(464)),
        ];
        let d = assemble_dataset("t", &m, dir.path(), Some(464)).unwrap();
        assert_eq!(d.raster_dims, Some((464, 464)));
        for s in &d.specimens {
            for r in s.rasters.as_ref().unwrap() {
                assert_eq!((r.height, r.width), (464, 464));
            }
        }
        // inferred target is the largest raster
        let d = assemble_dataset("t", &m, dir.path(), None).unwrap();
        assert_eq!(d.raster_dims, Some((464, 464)));
    }

    #[test]
    fn larger_rasters_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = vec![write_specimen(dir.path(), "s", 2, Some(40))];
        let err = assemble_dataset("t", &m, dir.path(), Some(32)).unwrap_err();
        match err {
            IngestError::Specimen { source, .. } => {
                assert!(matches!(
                    *source,
                    IngestError::RasterLargerThanTarget { size: 40, target: 32 }
                ))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn read_dataset_accepts_both_forms() {
        let dir = tempfile::tempdir().unwrap();
        let m = vec![write_specimen(dir.path(), "s1", 3, Some(8))];
        let manifest = dir.path().join("manifest.json");
        write_manifest(&manifest, &m).unwrap();
        let d = read_dataset(&manifest, None).unwrap();
        let as_json = dir.path().join("dataset.json");
        std::fs::write(&as_json, serde_json::to_vec(&d).unwrap()).unwrap();
        assert_eq!(read_dataset(&as_json, None).unwrap(), d);
    }
}
