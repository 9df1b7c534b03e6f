use crate::data_model::{CameraId, FrameMeta};

use super::IngestError;

pub const FRAME_CSV_HEADER: &str = "camera_id,frame_index,top,bottom,left,right,area_px";
const N_COLUMNS: usize = 7;

/// Parses a frame-metadata CSV. Line numbers in errors are 1-based and count
/// the header, so the first data row is line 2.
pub fn parse_frame_csv(bytes: &[u8]) -> Result<Vec<FrameMeta>, IngestError> {
    std::str::from_utf8(bytes).map_err(|_| IngestError::NotUtf8)?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(IngestError::EmptyFile),
        Some(r) => r.map_err(|e| IngestError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?,
    };
    let found = header.iter().collect::<Vec<_>>().join(",");
    if found != FRAME_CSV_HEADER {
        return Err(IngestError::BadHeader {
            expected: FRAME_CSV_HEADER.into(),
            found,
        });
    }

    let mut frames = Vec::new();
    for record in records {
        let record = record.map_err(|e| IngestError::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let malformed = |reason: String| IngestError::MalformedRow { line, reason };

        if record.len() != N_COLUMNS {
            return Err(malformed(format!(
                "expected {N_COLUMNS} fields, found {}",
                record.len()
            )));
        }
        let int = |i: usize| -> Result<i64, IngestError> {
            record[i]
                .parse::<i64>()
                .map_err(|_| malformed(format!("field {} is not an integer: {:?}", i + 1, &record[i])))
        };
        let camera_id: CameraId = record[0].parse().map_err(malformed)?;
        let frame_index = record[1]
            .parse::<u32>()
            .map_err(|_| malformed(format!("frame_index is not a non-negative integer: {:?}", &record[1])))?;
        let area_px = record[6]
            .parse::<f64>()
            .ok()
            .filter(|a| a.is_finite())
            .ok_or_else(|| malformed(format!("area_px is not a number: {:?}", &record[6])))?;

        frames.push(FrameMeta {
            camera_id,
            frame_index,
            top: int(2)?,
            bottom: int(3)?,
            left: int(4)?,
            right: int(5)?,
            area_px,
        });
    }

    if frames.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok(frames)
}

/// Writes frames in the schema read by [`parse_frame_csv`] (LF endings).
pub fn serialize_frame_csv(frames: &[FrameMeta]) -> String {
    let mut out = String::with_capacity(32 * (frames.len() + 1));
    out.push_str(FRAME_CSV_HEADER);
    out.push('\n');
    for f in frames {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            f.camera_id, f.frame_index, f.top, f.bottom, f.left, f.right, f.area_px
        ));
    }
    out
}
