//! Reading sequence metadata and silhouette rasters from disk.

mod frame_csv;
mod manifest;
mod pgm;

use std::path::PathBuf;

use thiserror::Error;

use crate::data_model::Violation;

pub use frame_csv::{parse_frame_csv, serialize_frame_csv, FRAME_CSV_HEADER};
pub use manifest::{assemble_dataset, load_manifest, raster_file_name, read_dataset, write_manifest, ManifestEntry};
pub use pgm::{load_raster, pad_mirror, write_pgm, Raster};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed raster: {0}")]
    MalformedRaster(String),
    #[error("raster is {found_h}x{found_w}, expected {expected_h}x{expected_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },
    #[error("raster must be square, got {height}x{width}")]
    NonSquareRaster { height: usize, width: usize },
    #[error("pad {pad} too large for {height}x{width} raster")]
    PadTooLarge { pad: usize, height: usize, width: usize },
    #[error("raster {size}x{size} is larger than target {target}x{target}")]
    RasterLargerThanTarget { size: usize, target: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("specimen {specimen_id}: {source}")]
    Specimen {
        specimen_id: String,
        #[source]
        source: Box<IngestError>,
    },
    #[error("dataset failed validation ({} violations, first: {})", .0.len(), .0[0])]
    InvalidDataset(Vec<Violation>),
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn for_specimen(self, specimen_id: &str) -> Self {
        IngestError::Specimen {
            specimen_id: specimen_id.to_string(),
            source: Box::new(self),
        }
    }
}
