//! Ordinary-least-squares mass estimators over area and sinking speed.
//!
//! Masses are predicted once per frame and reduced to one estimate per
//! specimen with a trimmed median, which discards the most extreme per-frame
//! estimates before taking the median.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{Dataset, PredictionEntry, PredictionSet, SpecimenRecord};
use crate::features::{specimen_features, FeatureError, SpecimenFeatures, TargetSpace};

/// Lower clamp for every mass-space prediction, in micrograms.
pub const MASS_FLOOR_UG: f64 = 1e-3;

/// Default fraction trimmed from each end before the median.
pub const DEFAULT_TRIM: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum LinearError {
    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("need at least {needed} rows, got {rows}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("rows have inconsistent feature counts")]
    RaggedRows,
    #[error("specimen {0} has no sinking speed")]
    MissingSpeed(String),
    #[error("specimen {0} has no dry mass")]
    MissingMass(String),
    #[error("model has {found} coefficients, feature set needs {expected}")]
    CoefficientMismatch { expected: usize, found: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("trim fraction must be in [0, 0.5), got {0}")]
    InvalidTrim(f64),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSpec {
    AreaOnly,
    AreaPlusSpeed,
}

impl FeatureSpec {
    pub fn width(self) -> usize {
        match self {
            FeatureSpec::AreaOnly => 1,
            FeatureSpec::AreaPlusSpeed => 2,
        }
    }

    fn row(self, area: f64, speed: Option<f64>, specimen_id: &str) -> Result<Vec<f64>, LinearError> {
        match self {
            FeatureSpec::AreaOnly => Ok(vec![area]),
            FeatureSpec::AreaPlusSpeed => {
                let s = speed.ok_or_else(|| LinearError::MissingSpeed(specimen_id.to_string()))?;
                Ok(vec![area, s])
            }
        }
    }
}

/// How training rows are built from specimens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RowMode {
    /// One row per frame: (frame area, specimen speed) -> specimen mass.
    #[default]
    PerImage,
    /// One row per specimen: (mean area, speed) -> mass.
    SpecimenMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_spec: FeatureSpec,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub target_space: TargetSpace,
}

/// Intercept and slopes of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

/// Least squares with an intercept, via Householder QR of `[1 | X]`.
///
/// Requires at least `p + 2` rows so that one residual degree of freedom
/// remains after the intercept and `p` slopes.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64]) -> Result<OlsFit, LinearError> {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    if n != y.len() {
        return Err(LinearError::RaggedRows);
    }
    if n < p + 2 {
        return Err(LinearError::TooFewRows { rows: n, needed: p + 2 });
    }
    if x.iter().any(|r| r.len() != p) {
        return Err(LinearError::RaggedRows);
    }

    let cols = p + 1;
    // column-major design matrix
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(cols);
    a.push(vec![1.0; n]);
    for j in 0..p {
        a.push(x.iter().map(|r| r[j]).collect());
    }
    let col_norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();
    let mut b = y.to_vec();

    for k in 0..cols {
        let alpha = {
            let s = norm(&a[k][k..]);
            if a[k][k] > 0.0 {
                -s
            } else {
                s
            }
        };
        if alpha.abs() <= 1e-10 * col_norms[k].max(f64::MIN_POSITIVE) {
            return Err(LinearError::RankDeficient { column: k });
        }
        let mut v = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= f * vi;
            }
        };
        for col in a.iter_mut().skip(k) {
            reflect(&mut col[k..]);
        }
        reflect(&mut b[k..]);
    }

    // back substitution on the upper triangle
    let mut beta = vec![0.0; cols];
    for i in (0..cols).rev() {
        let mut s = b[i];
        for j in i + 1..cols {
            s -= a[j][i] * beta[j];
        }
        beta[i] = s / a[i][i];
    }
    Ok(OlsFit {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
    })
}

fn norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// Median after dropping `floor(trim_fraction * len)` values from each end.
pub fn trimmed_median(values: &[f64], trim_fraction: f64) -> Result<f64, LinearError> {
    if values.is_empty() {
        return Err(LinearError::EmptyInput);
    }
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(LinearError::InvalidTrim(trim_fraction));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let k = (trim_fraction * sorted.len() as f64).floor() as usize;
    Ok(median_sorted(&sorted[k..sorted.len() - k]))
}

/// Median of an ascending slice; mean of the central pair for even lengths.
pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

impl LinearModel {
    fn check(&self) -> Result<(), LinearError> {
        let expected = self.feature_spec.width();
        if self.coefficients.len() != expected {
            return Err(LinearError::CoefficientMismatch {
                expected,
                found: self.coefficients.len(),
            });
        }
        Ok(())
    }

    fn raw_output(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }

    /// Mass-space prediction for one feature row.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.target_space.decode(self.raw_output(row), MASS_FLOOR_UG)
    }
}

/// Fits a model over every specimen in `d`; all must carry a dry mass.
pub fn fit_linear(
    d: &Dataset,
    spec: FeatureSpec,
    target: TargetSpace,
    rows: RowMode,
) -> Result<LinearModel, LinearError> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in &d.specimens {
        let mass = s
            .dry_mass_ug
            .ok_or_else(|| LinearError::MissingMass(s.specimen_id.clone()))?;
        let t = target.encode(mass)?;
        let f = specimen_features(s)?;
        match rows {
            RowMode::PerImage => {
                for frame in &s.frames {
                    x.push(spec.row(frame.area_px, f.sinking_speed, &s.specimen_id)?);
                    y.push(t);
                }
            }
            RowMode::SpecimenMean => {
                x.push(spec.row(f.mean_area_px, f.sinking_speed, &s.specimen_id)?);
                y.push(t);
            }
        }
    }
    let fit = fit_ols(&x, &y)?;
    Ok(LinearModel {
        feature_spec: spec,
        intercept: fit.intercept,
        coefficients: fit.coefficients,
        target_space: target,
    })
}

/// One clamped mass-space prediction per frame.
pub fn predict_per_image(
    m: &LinearModel,
    specimen: &SpecimenRecord,
    f: &SpecimenFeatures,
) -> Result<Vec<f64>, LinearError> {
    m.check()?;
    specimen
        .frames
        .iter()
        .map(|frame| {
            let row = m
                .feature_spec
                .row(frame.area_px, f.sinking_speed, &specimen.specimen_id)?;
            Ok(m.predict_row(&row))
        })
        .collect()
}

pub fn predict_specimen(
    m: &LinearModel,
    specimen: &SpecimenRecord,
    f: &SpecimenFeatures,
    trim_fraction: f64,
) -> Result<f64, LinearError> {
    trimmed_median(&predict_per_image(m, specimen, f)?, trim_fraction)
}

/// Specimen-level predictions for a labelled dataset.
pub fn predict_dataset(m: &LinearModel, d: &Dataset, trim_fraction: f64) -> Result<PredictionSet, LinearError> {
    let entries = d
        .specimens
        .iter()
        .map(|s| {
            let true_mass_ug = s
                .dry_mass_ug
                .ok_or_else(|| LinearError::MissingMass(s.specimen_id.clone()))?;
            let f = specimen_features(s)?;
            Ok(PredictionEntry {
                specimen_id: s.specimen_id.clone(),
                taxon: s.taxon.clone(),
                true_mass_ug,
                predicted_mass_ug: predict_specimen(m, s, &f, trim_fraction)?,
                predicted_taxon: None,
            })
        })
        .collect::<Result<_, LinearError>>()?;
    Ok(PredictionSet::new(entries))
}
