//! Error metrics, distribution tests, bootstrap intervals, classification
//! statistics and the stratified cross-validation splitter.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{Dataset, PredictionSet};
use crate::linear::median_sorted;
use crate::rng::{indexed_substream, substream};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction set is empty")]
    EmptyPredictions,
    #[error("specimen {0}: masses must be positive")]
    NonPositiveMass(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("an input has zero variance")]
    ZeroVariance,
    #[error("bootstrap needs at least 2 entries, got {0}")]
    TooFewEntries(usize),
    #[error("bootstrap needs at least one draw")]
    NoDraws,
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("taxon {taxon:?} has {count} specimens, fewer than {k} folds")]
    TaxonTooSmall { taxon: String, count: usize, k: usize },
    #[error("invalid split parameters: {0}")]
    InvalidSplit(String),
    #[error("specimen {0} appears in more than one fold")]
    DuplicateSpecimenAcrossFolds(String),
    #[error("predicted label {0:?} is not a known class")]
    LabelMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricIntervals {
    pub mape: Interval,
    pub mdape: Interval,
    pub mae: Interval,
    pub rmse: Interval,
    pub r2_log: Interval,
}

/// MAE and RMSE are in micrograms; MAPE and MdAPE are fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub mape: f64,
    pub mdape: f64,
    pub mae: f64,
    pub rmse: f64,
    pub r2_log: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<MetricIntervals>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Mape,
    Mdape,
    Mae,
    Rmse,
    R2Log,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Rmse, Metric::Mae, Metric::Mape, Metric::Mdape, Metric::R2Log];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mape => "MAPE",
            Metric::Mdape => "MdAPE",
            Metric::Mae => "MAE",
            Metric::Rmse => "RMSE",
            Metric::R2Log => "R2",
        }
    }

    pub fn of(self, r: &MetricReport) -> f64 {
        match self {
            Metric::Mape => r.mape,
            Metric::Mdape => r.mdape,
            Metric::Mae => r.mae,
            Metric::Rmse => r.rmse,
            Metric::R2Log => r.r2_log,
        }
    }

    pub fn interval(self, i: &MetricIntervals) -> Interval {
        match self {
            Metric::Mape => i.mape,
            Metric::Mdape => i.mdape,
            Metric::Mae => i.mae,
            Metric::Rmse => i.rmse,
            Metric::R2Log => i.r2_log,
        }
    }
}

fn check_positive(p: &PredictionSet) -> Result<(), EvalError> {
    if p.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    for e in &p.entries {
        if !(e.true_mass_ug > 0.0 && e.predicted_mass_ug > 0.0) {
            return Err(EvalError::NonPositiveMass(e.specimen_id.clone()));
        }
    }
    Ok(())
}

fn metrics_of(y: &[f64], y_hat: &[f64]) -> MetricReport {
    let n = y.len() as f64;
    let mut ape: Vec<f64> = y.iter().zip(y_hat).map(|(t, p)| (t - p).abs() / t).collect();
    let mape = ape.iter().sum::<f64>() / n;
    ape.sort_by(f64::total_cmp);
    let mae = y.iter().zip(y_hat).map(|(t, p)| (t - p).abs()).sum::<f64>() / n;
    let mse = y.iter().zip(y_hat).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / n;

    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mean = ly.iter().sum::<f64>() / n;
    let ss_tot: f64 = ly.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = ly.iter().zip(y_hat).map(|(t, p)| (t - p.ln()).powi(2)).sum();
    // a constant truth leaves R² undefined; score it as perfect or as no
    // better than the mean
    let r2_log = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    MetricReport {
        n: y.len(),
        mape,
        mdape: median_sorted(&ape),
        mae,
        rmse: mse.sqrt(),
        r2_log,
        intervals: None,
    }
}

pub fn compute_metrics(p: &PredictionSet) -> Result<MetricReport, EvalError> {
    check_positive(p)?;
    Ok(metrics_of(&p.true_masses(), &p.predicted_masses()))
}

pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::EmptyInput);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// Asymptotic Kolmogorov survival function `Q(lambda)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev = 0.0f64;
    for j in 1..=100 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() <= 1e-12 * prev.abs().max(1e-300) || term.abs() < 1e-300 {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        prev = term;
        sign = -sign;
    }
    // no convergence only happens for tiny lambda, where Q -> 1
    1.0
}

/// Two-sample Kolmogorov-Smirnov statistic with an asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    let p = kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
    Ok(KsResult { d, p })
}

fn check_bootstrap(p: &PredictionSet, level: f64) -> Result<(), EvalError> {
    if p.len() < 2 {
        return Err(EvalError::TooFewEntries(p.len()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::InvalidLevel(level));
    }
    Ok(())
}

/// Linear-interpolated quantile of sorted values.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn summarize(mut stats: Vec<f64>, level: f64) -> Interval {
    let n = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / n;
    let var = if stats.len() > 1 {
        stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    stats.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Interval {
        low: quantile_sorted(&stats, alpha / 2.0),
        high: quantile_sorted(&stats, 1.0 - alpha / 2.0),
        std: var.sqrt(),
    }
}

/// Draw `index` of a bootstrap: entries resampled with replacement.
fn resample(p: &PredictionSet, seed: u64, index: u64) -> PredictionSet {
    let mut rng = indexed_substream(seed, "bootstrap", index);
    let n = p.len();
    PredictionSet::new((0..n).map(|_| p.entries[rng.random_range(0..n)].clone()).collect())
}

/// Percentile interval and standard deviation of `metric` over `draws`
/// resamples of the entries. Each draw has its own seeded substream, so the
/// result does not depend on the thread count.
pub fn bootstrap<F>(metric: F, p: &PredictionSet, draws: usize, level: f64, seed: u64) -> Result<Interval, EvalError>
where
    F: Fn(&PredictionSet) -> f64 + Sync,
{
    check_bootstrap(p, level)?;
    if draws == 0 {
        return Err(EvalError::NoDraws);
    }
    let stats: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|i| metric(&resample(p, seed, i)))
        .collect();
    Ok(summarize(stats, level))
}

/// Point metrics plus intervals for all five metrics from one set of draws.
pub fn metrics_with_intervals(
    p: &PredictionSet,
    draws: usize,
    level: f64,
    seed: u64,
) -> Result<MetricReport, EvalError> {
    let mut report = compute_metrics(p)?;
    check_bootstrap(p, level)?;
    if draws == 0 {
        return Err(EvalError::NoDraws);
    }
    let reports: Vec<MetricReport> = (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let r = resample(p, seed, i);
            metrics_of(&r.true_masses(), &r.predicted_masses())
        })
        .collect();
    let iv = |m: Metric| summarize(reports.iter().map(|r| m.of(r)).collect(), level);
    report.intervals = Some(MetricIntervals {
        mape: iv(Metric::Mape),
        mdape: iv(Metric::Mdape),
        mae: iv(Metric::Mae),
        rmse: iv(Metric::Rmse),
        r2_log: iv(Metric::R2Log),
    });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldRoles {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub k: usize,
    pub fold_assignments: BTreeMap<String, usize>,
    pub folds: Vec<FoldRoles>,
}

/// Splits largest-remainder style: `total` units over weights `w`.
fn apportion(total: usize, w: &[usize]) -> Vec<usize> {
    let sum: usize = w.iter().sum();
    if sum == 0 {
        return vec![0; w.len()];
    }
    let mut out: Vec<usize> = w.iter().map(|&x| total * x / sum).collect();
    let mut rest: Vec<(usize, usize)> = w.iter().enumerate().map(|(i, &x)| (i, (total * x) % sum)).collect();
    rest.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let missing = total - out.iter().sum::<usize>();
    for &(i, _) in rest.iter().take(missing) {
        out[i] += 1;
    }
    out
}

/// Stratified k-fold plan. Within each taxon (in name order) specimens are
/// shuffled and dealt round-robin to folds with a counter that carries over
/// between taxa, so both per-taxon and overall fold sizes differ by at most
/// one. The non-test part of each fold is split into train and validation,
/// again stratified by taxon.
pub fn make_cv_splits(d: &Dataset, k: usize, val_fraction: f64, seed: u64) -> Result<SplitPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidSplit(format!("k must be >= 2, got {k}")));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(EvalError::InvalidSplit(format!(
            "val fraction {val_fraction} outside [0, 1)"
        )));
    }
    if d.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut by_taxon: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in &d.specimens {
        by_taxon.entry(&s.taxon).or_default().push(&s.specimen_id);
    }
    for (taxon, ids) in &by_taxon {
        if ids.len() < k {
            return Err(EvalError::TaxonTooSmall {
                taxon: taxon.to_string(),
                count: ids.len(),
                k,
            });
        }
    }

    let mut rng = substream(seed, "split");
    let mut fold_assignments = BTreeMap::new();
    let mut counter = 0usize;
    for ids in by_taxon.values_mut() {
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            fold_assignments.insert(id.to_string(), counter % k);
            counter += 1;
        }
    }

    let n = d.len() as f64;
    let folds = (0..k)
        .map(|fold| {
            let test: Vec<String> = by_taxon
                .values()
                .flatten()
                .filter(|id| fold_assignments[**id] == fold)
                .map(|id| id.to_string())
                .collect();
            // target val share of the whole dataset is f(1 - 1/k); the
            // half-correction spreads a test fold's rounding evenly over
            // train and val so both stay within one specimen of target
            let delta = test.len() as f64 - n / k as f64;
            let val_total = (val_fraction * (n - n / k as f64) - delta / 2.0)
                .round()
                .clamp(0.0, (d.len() - test.len()) as f64) as usize;
            let rest: Vec<Vec<&str>> = by_taxon
                .values()
                .map(|ids| ids.iter().copied().filter(|id| fold_assignments[*id] != fold).collect())
                .collect();
            let quota = apportion(val_total, &rest.iter().map(Vec::len).collect::<Vec<_>>());
            let mut train = Vec::new();
            let mut val = Vec::new();
            for (ids, q) in rest.iter().zip(quota) {
                // rotate the starting point so folds use different val sets
                let start = if ids.is_empty() { 0 } else { (fold * q) % ids.len() };
                for (i, id) in ids.iter().enumerate() {
                    let pos = (i + ids.len() - start) % ids.len();
                    if pos < q {
                        val.push(id.to_string());
                    } else {
                        train.push(id.to_string());
                    }
                }
            }
            train.sort();
            val.sort();
            let mut test = test;
            test.sort();
            FoldRoles { train, val, test }
        })
        .collect();
    Ok(SplitPlan {
        k,
        fold_assignments,
        folds,
    })
}

/// Concatenates test-fold predictions into one set.
pub fn pool_folds(folds: &[PredictionSet]) -> Result<PredictionSet, EvalError> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for f in folds {
        for e in &f.entries {
            if !seen.insert(e.specimen_id.clone()) {
                return Err(EvalError::DuplicateSpecimenAcrossFolds(e.specimen_id.clone()));
            }
            entries.push(e.clone());
        }
    }
    Ok(PredictionSet::new(entries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub labels: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// `counts[i][j]`: true class `i` predicted as `j`.
    pub confusion_counts: Vec<Vec<usize>>,
    /// Rows as percentages of the true class.
    pub confusion_percent: Vec<Vec<f64>>,
}

/// One-vs-rest precision, recall and F1 over the sorted set of true labels.
pub fn classification_report(truth: &[String], predicted: &[String]) -> Result<ClassificationReport, EvalError> {
    let mut labels: Vec<String> = truth.to_vec();
    labels.sort();
    labels.dedup();
    classification_report_with_labels(truth, predicted, &labels)
}

/// As [`classification_report`] over an explicit label set, e.g. the classes
/// a classifier was trained on.
pub fn classification_report_with_labels(
    truth: &[String],
    predicted: &[String],
    labels: &[String],
) -> Result<ClassificationReport, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let index = |l: &String| {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| EvalError::LabelMismatch(l.clone()))
    };
    let c = labels.len();
    let mut counts = vec![vec![0usize; c]; c];
    for (t, p) in truth.iter().zip(predicted) {
        counts[index(t)?][index(p)?] += 1;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class = (0..c)
        .map(|i| {
            let tp = counts[i][i];
            let support: usize = counts[i].iter().sum();
            let predicted_i: usize = counts.iter().map(|row| row[i]).sum();
            let precision = ratio(tp, predicted_i);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: labels[i].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let correct: usize = (0..c).map(|i| counts[i][i]).sum();
    let confusion_percent = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter().map(|&v| 100.0 * ratio(v, total)).collect()
        })
        .collect();
    Ok(ClassificationReport {
        labels: labels.to_vec(),
        per_class,
        accuracy: correct as f64 / truth.len() as f64,
        confusion_counts: counts,
        confusion_percent,
    })
}
