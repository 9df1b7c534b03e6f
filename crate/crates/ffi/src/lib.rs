//! C ABI over `biomass-core`.
//!
//! Conventions: every fallible function returns a [`BmStatus`] and writes
//! results through out-pointers. On failure the message is kept per thread
//! and can be fetched with [`bm_last_error_message`]. Handles and strings
//! returned by this library must be released with the matching `*_free`
//! function. Panics never cross the boundary; they surface as
//! [`BmStatus::Panic`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use biomass_core::eval::{self, EvalError};
use biomass_core::features::{features_csv, specimen_features, TargetSpace};
use biomass_core::ingest::{read_dataset, IngestError};
use biomass_core::linear::{self, FeatureSpec, LinearError, LinearModel, RowMode};
use biomass_core::{Dataset, PredictionSet};

/// Bumped on any incompatible change to the functions or structs below.
pub const BM_ABI_VERSION: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    Numeric = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmFeatureSpec {
    AreaOnly = 0,
    AreaPlusSpeed = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmTargetSpace {
    Raw = 0,
    Log = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmRowMode {
    PerImage = 0,
    SpecimenMean = 1,
}

/// Specimen-level error summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BmMetrics {
    pub n: usize,
    pub mape: f64,
    pub mdape: f64,
    pub mae: f64,
    pub rmse: f64,
    pub r2_log: f64,
}

/// Opaque loaded dataset.
pub struct BmDataset(Dataset);

/// Opaque fitted linear model.
pub struct BmLinearModel(LinearModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(BmStatus, String);

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure(BmStatus::InvalidInput, msg.into())
    }

    fn null(what: &str) -> Self {
        Failure(BmStatus::NullPointer, format!("{what} is null"))
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let mut inner = &e;
        while let IngestError::Specimen { source, .. } = inner {
            inner = source;
        }
        let status = if matches!(inner, IngestError::Io { .. }) {
            BmStatus::Io
        } else {
            BmStatus::InvalidInput
        };
        Failure(status, e.to_string())
    }
}

impl From<LinearError> for Failure {
    fn from(e: LinearError) -> Self {
        let status = if matches!(e, LinearError::RankDeficient { .. }) {
            BmStatus::Numeric
        } else {
            BmStatus::InvalidInput
        };
        Failure(status, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let status = if matches!(e, EvalError::ZeroVariance) {
            BmStatus::Numeric
        } else {
            BmStatus::InvalidInput
        };
        Failure(status, e.to_string())
    }
}

impl From<biomass_core::features::FeatureError> for Failure {
    fn from(e: biomass_core::features::FeatureError) -> Self {
        Failure::input(e.to_string())
    }
}

/// Runs `f`, converting failures and panics into a status plus a stored
/// message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            BmStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::input(format!("{what} is not valid UTF-8")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::input("string contains an interior NUL"))
}

#[no_mangle]
pub extern "C" fn bm_abi_version() -> u32 {
    BM_ABI_VERSION
}

/// Message of the last failed call on this thread, or NULL. The caller owns
/// the returned string.
#[no_mangle]
pub extern "C" fn bm_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(std::ptr::null_mut(), |m| m.clone().into_raw())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a manifest or an ingested dataset file. `raster_size` of 0 keeps
/// the largest raster size found.
#[no_mangle]
pub unsafe extern "C" fn bm_dataset_load(
    path: *const c_char,
    raster_size: usize,
    out_dataset: *mut *mut BmDataset,
) -> BmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out_dataset = out(out_dataset, "out_dataset")?;
        let d = read_dataset(Path::new(path), (raster_size > 0).then_some(raster_size))?;
        *out_dataset = Box::into_raw(Box::new(BmDataset(d)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_dataset_free(dataset: *mut BmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bm_dataset_len(dataset: *const BmDataset, out_len: *mut usize) -> BmStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| Failure::null("dataset"))?;
        *out(out_len, "out_len")? = d.0.len();
        Ok(())
    })
}

/// Per-specimen predictor table as CSV text; free with [`bm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn bm_dataset_features_csv(dataset: *const BmDataset, out_csv: *mut *mut c_char) -> BmStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| Failure::null("dataset"))?;
        let out_csv = out(out_csv, "out_csv")?;
        let rows =
            d.0.specimens
                .iter()
                .map(|s| Ok((s, specimen_features(s)?)))
                .collect::<Result<Vec<_>, Failure>>()?;
        *out_csv = into_c_string(features_csv(&rows))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_linear_fit(
    dataset: *const BmDataset,
    features: BmFeatureSpec,
    target: BmTargetSpace,
    rows: BmRowMode,
    out_model: *mut *mut BmLinearModel,
) -> BmStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| Failure::null("dataset"))?;
        let out_model = out(out_model, "out_model")?;
        let spec = match features {
            BmFeatureSpec::AreaOnly => FeatureSpec::AreaOnly,
            BmFeatureSpec::AreaPlusSpeed => FeatureSpec::AreaPlusSpeed,
        };
        let target = match target {
            BmTargetSpace::Raw => TargetSpace::Raw,
            BmTargetSpace::Log => TargetSpace::Log,
        };
        let rows = match rows {
            BmRowMode::PerImage => RowMode::PerImage,
            BmRowMode::SpecimenMean => RowMode::SpecimenMean,
        };
        let m = linear::fit_linear(&d.0, spec, target, rows)?;
        *out_model = Box::into_raw(Box::new(BmLinearModel(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_linear_free(model: *mut BmLinearModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Intercept followed by slopes; `len` must equal the coefficient count,
/// which `out_len` reports when `out_coefficients` is NULL.
#[no_mangle]
pub unsafe extern "C" fn bm_linear_coefficients(
    model: *const BmLinearModel,
    out_coefficients: *mut f64,
    len: usize,
    out_len: *mut usize,
) -> BmStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| Failure::null("model"))?.0;
        let all: Vec<f64> = std::iter::once(m.intercept)
            .chain(m.coefficients.iter().copied())
            .collect();
        if let Some(n) = out_len.as_mut() {
            *n = all.len();
        }
        if out_coefficients.is_null() {
            return Ok(());
        }
        if len != all.len() {
            return Err(Failure::input(format!("buffer holds {len}, model has {}", all.len())));
        }
        std::slice::from_raw_parts_mut(out_coefficients, len).copy_from_slice(&all);
        Ok(())
    })
}

/// Specimen-level predictions in dataset order; `len` must equal the
/// dataset size.
#[no_mangle]
pub unsafe extern "C" fn bm_linear_predict(
    model: *const BmLinearModel,
    dataset: *const BmDataset,
    trim_fraction: f64,
    out_masses: *mut f64,
    len: usize,
) -> BmStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| Failure::null("model"))?.0;
        let d = &dataset.as_ref().ok_or_else(|| Failure::null("dataset"))?.0;
        if out_masses.is_null() {
            return Err(Failure::null("out_masses"));
        }
        if len != d.len() {
            return Err(Failure::input(format!("buffer holds {len}, dataset has {}", d.len())));
        }
        let outs = std::slice::from_raw_parts_mut(out_masses, len);
        for (slot, s) in outs.iter_mut().zip(&d.specimens) {
            *slot = linear::predict_specimen(m, s, &specimen_features(s)?, trim_fraction)?;
        }
        Ok(())
    })
}

/// Serialized model; free with [`bm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn bm_linear_to_json(model: *const BmLinearModel, out_json: *mut *mut c_char) -> BmStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| Failure::null("model"))?.0;
        let out_json = out(out_json, "out_json")?;
        let text = serde_json::to_string(m).map_err(|e| Failure::input(e.to_string()))?;
        *out_json = into_c_string(text)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_linear_from_json(json: *const c_char, out_model: *mut *mut BmLinearModel) -> BmStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out_model = out(out_model, "out_model")?;
        let m: LinearModel = serde_json::from_str(text).map_err(|e| Failure::input(e.to_string()))?;
        *out_model = Box::into_raw(Box::new(BmLinearModel(m)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_trimmed_median(
    values: *const f64,
    len: usize,
    trim_fraction: f64,
    out_value: *mut f64,
) -> BmStatus {
    guard(|| {
        let v = slice(values, len, "values")?;
        *out(out_value, "out_value")? = linear::trimmed_median(v, trim_fraction)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_compute_metrics(
    y_true: *const f64,
    y_pred: *const f64,
    len: usize,
    out_metrics: *mut BmMetrics,
) -> BmStatus {
    guard(|| {
        let y = slice(y_true, len, "y_true")?;
        let p = slice(y_pred, len, "y_pred")?;
        let out_metrics = out(out_metrics, "out_metrics")?;
        let r = eval::compute_metrics(&PredictionSet::from_pairs(y, p))?;
        *out_metrics = BmMetrics {
            n: r.n,
            mape: r.mape,
            mdape: r.mdape,
            mae: r.mae,
            rmse: r.rmse,
            r2_log: r.r2_log,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_ks_two_sample(
    a: *const f64,
    len_a: usize,
    b: *const f64,
    len_b: usize,
    out_d: *mut f64,
    out_p: *mut f64,
) -> BmStatus {
    guard(|| {
        let a = slice(a, len_a, "a")?;
        let b = slice(b, len_b, "b")?;
        let (out_d, out_p) = (out(out_d, "out_d")?, out(out_p, "out_p")?);
        let r = eval::ks_two_sample(a, b)?;
        *out_d = r.d;
        *out_p = r.p;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bm_pearson_r(a: *const f64, b: *const f64, len: usize, out_r: *mut f64) -> BmStatus {
    guard(|| {
        let a = slice(a, len, "a")?;
        let b = slice(b, len, "b")?;
        *out(out_r, "out_r")? = eval::pearson_r(a, b)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_and_message() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, BmStatus::Panic);
        let msg = bm_last_error_message();
        assert!(unsafe { CStr::from_ptr(msg) }.to_str().unwrap().contains("boom"));
        unsafe { bm_string_free(msg) };
        assert_eq!(guard(|| Ok(())), BmStatus::Ok);
        assert!(bm_last_error_message().is_null());
    }
}
