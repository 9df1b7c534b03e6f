//! Experiment flows shared by the command line and the test suites.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data_model::{Dataset, PredictionEntry, PredictionSet, SpecimenRecord};
use crate::eval::{
    classification_report_with_labels, compute_metrics, ks_two_sample, make_cv_splits, metrics_with_intervals,
    pearson_r, pool_folds, ClassificationReport, KsResult, Metric, MetricReport, SplitPlan,
};
use crate::features::{specimen_features, TargetSpace};
use crate::linear::{self, fit_linear, FeatureSpec, LinearModel, RowMode};
use crate::neural::{self, Architecture, MetadataInput, ModelConfig, Task, TrainConfig, TrainedModel};
use crate::rng::substream;

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LinearArea,
    LinearAreaSpeed,
    NeuralSingle,
    NeuralMulti,
    NeuralMetadata,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::LinearArea => "linear-area",
            Method::LinearAreaSpeed => "linear-area-speed",
            Method::NeuralSingle => "neural-single",
            Method::NeuralMulti => "neural-multi",
            Method::NeuralMetadata => "neural-metadata",
        }
    }

    fn architecture(self) -> Option<Architecture> {
        match self {
            Method::NeuralSingle => Some(Architecture::SingleView),
            Method::NeuralMulti => Some(Architecture::MultiView),
            Method::NeuralMetadata => Some(Architecture::MetadataAware),
            _ => None,
        }
    }
}

/// Everything needed to fit one method on a split.
#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub method: Method,
    pub linear_target: TargetSpace,
    pub rows: RowMode,
    /// Starting point for neural methods; the architecture is set from
    /// `method`.
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    pub trim: f64,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        MethodConfig {
            method,
            linear_target: TargetSpace::Raw,
            rows: RowMode::PerImage,
            model: None,
            train: TrainConfig::default(),
            trim: linear::DEFAULT_TRIM,
        }
    }

    /// Method name plus the target space for linear models.
    pub fn label(&self) -> String {
        match (self.method.architecture(), self.linear_target) {
            (None, TargetSpace::Log) => format!("{}-log", self.method.as_str()),
            _ => self.method.as_str().to_string(),
        }
    }

    pub fn model_config(&self, d: &Dataset) -> Option<ModelConfig> {
        let arch = self.method.architecture()?;
        let mut m = self.model.clone().unwrap_or_else(|| {
            let mut m = ModelConfig::single_view();
            if let Some((h, _)) = d.raster_dims {
                m.input_size = h;
            }
            m
        });
        m.architecture = arch;
        if arch == Architecture::MetadataAware && m.metadata_inputs.is_empty() {
            m.metadata_inputs = vec![
                MetadataInput::FrameArea,
                MetadataInput::MeanArea,
                MetadataInput::SinkingSpeed,
            ];
        }
        if arch == Architecture::MetadataAware && m.metadata_hidden == 0 {
            m.metadata_hidden = 2 * m.metadata_inputs.len();
        }
        Some(m)
    }
}

/// A fitted mass model of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MassModel {
    Linear(LinearModel),
    Neural(Box<TrainedModel>),
}

impl MassModel {
    pub fn predict_specimen(&self, s: &SpecimenRecord, trim: f64) -> Result<f64, CliError> {
        match self {
            MassModel::Linear(m) => Ok(linear::predict_specimen(m, s, &specimen_features(s)?, trim)?),
            MassModel::Neural(m) => Ok(neural::predict_specimen(m, s, trim)?),
        }
    }

    pub fn predict_dataset(&self, d: &Dataset, trim: f64) -> Result<PredictionSet, CliError> {
        match self {
            MassModel::Linear(m) => Ok(linear::predict_dataset(m, d, trim)?),
            MassModel::Neural(m) => Ok(neural::predict_dataset(m, d, trim)?),
        }
    }
}

/// Fits on train (plus val for linear models, which have nothing to
/// early-stop) and predicts the test specimens.
pub fn fit_method(cfg: &MethodConfig, train: &Dataset, val: &Dataset) -> Result<MassModel, CliError> {
    match cfg.method {
        Method::LinearArea | Method::LinearAreaSpeed => {
            let spec = if cfg.method == Method::LinearArea {
                FeatureSpec::AreaOnly
            } else {
                FeatureSpec::AreaPlusSpeed
            };
            let mut all = train.clone();
            all.specimens.extend(val.specimens.iter().cloned());
            Ok(MassModel::Linear(fit_linear(&all, spec, cfg.linear_target, cfg.rows)?))
        }
        _ => {
            let model = cfg.model_config(train).expect("neural method");
            Ok(MassModel::Neural(Box::new(neural::train(
                train, val, &model, &cfg.train,
            )?)))
        }
    }
}

/// Stratified train/validation split: within each taxon, a seeded shuffle
/// then `round(val_fraction * n)` specimens to validation.
pub fn train_val_split(d: &Dataset, val_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut rng = substream(seed, "split");
    let mut val_ids = Vec::new();
    for taxon in d.taxon_set() {
        let mut ids: Vec<&str> = d
            .specimens
            .iter()
            .filter(|s| s.taxon == taxon)
            .map(|s| s.specimen_id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        let n_val = ((val_fraction * ids.len() as f64).round() as usize).min(ids.len().saturating_sub(1));
        val_ids.extend(ids.into_iter().take(n_val).map(str::to_string));
    }
    let val: std::collections::HashSet<&str> = val_ids.iter().map(String::as_str).collect();
    (
        d.filter(|s| !val.contains(s.specimen_id.as_str())),
        d.filter(|s| val.contains(s.specimen_id.as_str())),
    )
}

/// One metrics file: written by `crossval`, `ood` and `evaluate`, read by
/// `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub dataset: String,
    pub method: String,
    pub metrics: MetricReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_fold: Vec<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CrossvalOutcome {
    pub plan: SplitPlan,
    pub folds: Vec<PredictionSet>,
    pub pooled: PredictionSet,
}

/// Runs the k-fold protocol and pools the test-fold predictions.
pub fn crossval(
    d: &Dataset,
    cfg: &MethodConfig,
    k: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<CrossvalOutcome, CliError> {
    let plan = make_cv_splits(d, k, val_fraction, seed)?;
    let mut folds = Vec::with_capacity(k);
    for (i, roles) in plan.folds.iter().enumerate() {
        let mut fold_cfg = cfg.clone();
        fold_cfg.train.seed = cfg.train.seed.wrapping_add(i as u64);
        let model = fit_method(&fold_cfg, &d.subset(&roles.train), &d.subset(&roles.val))?;
        folds.push(model.predict_dataset(&d.subset(&roles.test), cfg.trim)?);
    }
    let pooled = pool_folds(&folds)?;
    Ok(CrossvalOutcome { plan, folds, pooled })
}

/// Per-fold metrics and pooled metrics with bootstrap intervals (skipped
/// when `draws` is 0).
pub fn crossval_result(
    d: &Dataset,
    cfg: &MethodConfig,
    outcome: &CrossvalOutcome,
    draws: usize,
    level: f64,
    seed: u64,
) -> Result<ResultFile, CliError> {
    let per_fold = outcome.folds.iter().map(compute_metrics).collect::<Result<_, _>>()?;
    Ok(ResultFile {
        dataset: d.name.clone(),
        method: cfg.label(),
        metrics: metrics_for(&outcome.pooled, draws, level, seed)?,
        per_fold,
        holdout: None,
    })
}

pub fn metrics_for(p: &PredictionSet, draws: usize, level: f64, seed: u64) -> Result<MetricReport, CliError> {
    Ok(if draws > 0 && p.len() >= 2 {
        metrics_with_intervals(p, draws, level, seed)?
    } else {
        compute_metrics(p)?
    })
}

/// Fits on every taxon except `holdout` and evaluates on the held-out taxon
/// only.
pub fn cmd_ood(
    d: &Dataset,
    holdout: &str,
    cfg: &MethodConfig,
    draws: usize,
    level: f64,
    seed: u64,
) -> Result<(ResultFile, PredictionSet), CliError> {
    if !d.taxon_set().contains(holdout) {
        return Err(CliError::UnknownTaxon(holdout.to_string()));
    }
    let rest = d.filter(|s| s.taxon != holdout);
    let test = d.filter(|s| s.taxon == holdout);
    assert!(rest.specimens.iter().all(|s| s.taxon != holdout));
    let (train, val) = train_val_split(&rest, 0.2, seed);
    let model = fit_method(cfg, &train, &val)?;
    let preds = model.predict_dataset(&test, cfg.trim)?;
    let result = ResultFile {
        dataset: d.name.clone(),
        method: cfg.label(),
        metrics: metrics_for(&preds, draws, level, seed)?,
        per_fold: Vec::new(),
        holdout: Some(holdout.to_string()),
    };
    Ok((result, preds))
}

/// Mass models for the pipeline: one per predicted taxon, with an optional
/// shared fallback.
#[derive(Debug, Clone, Default)]
pub struct MassModels {
    pub shared: Option<MassModel>,
    pub per_taxon: BTreeMap<String, MassModel>,
}

impl MassModels {
    fn for_taxon(&self, taxon: &str) -> Result<&MassModel, CliError> {
        self.per_taxon
            .get(taxon)
            .or(self.shared.as_ref())
            .ok_or_else(|| CliError::ModelMissing(taxon.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBlock {
    pub predicted_taxon: String,
    pub n: usize,
    pub n_misclassified: usize,
    pub ks: KsResult,
    /// Correlation of (by default log) masses; absent for fewer than two specimens or
    /// constant values.
    pub pearson_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub dataset: String,
    pub n: usize,
    pub classification: ClassificationReport,
    pub groups: Vec<GroupBlock>,
    pub predictions: Vec<PredictionEntry>,
}

/// Classifies every specimen, predicts its mass with the model of the
/// predicted taxon, and compares predicted and true mass distributions per
/// predicted group. Misclassified specimens stay in their predicted group.
/// Pearson r is taken on log masses unless `log_pearson` is false.
pub fn cmd_pipeline(
    classifier: &TrainedModel,
    mass: &MassModels,
    d: &Dataset,
    trim: f64,
    log_pearson: bool,
) -> Result<PipelineReport, CliError> {
    let Task::Classification { classes } = &classifier.config.task else {
        return Err(CliError::InvalidArgument("classifier model has no class head".into()));
    };
    let mut predictions = Vec::with_capacity(d.len());
    for s in &d.specimens {
        let (taxon, _) = neural::classify_specimen(classifier, s)?;
        let mass_model = mass.for_taxon(&taxon)?;
        predictions.push(PredictionEntry {
            specimen_id: s.specimen_id.clone(),
            taxon: s.taxon.clone(),
            true_mass_ug: s
                .dry_mass_ug
                .ok_or_else(|| CliError::InvalidArgument(format!("specimen {} has no dry mass", s.specimen_id)))?,
            predicted_mass_ug: mass_model.predict_specimen(s, trim)?,
            predicted_taxon: Some(taxon),
        });
    }
    let truth: Vec<String> = predictions.iter().map(|p| p.taxon.clone()).collect();
    let predicted: Vec<String> = predictions.iter().map(|p| p.predicted_taxon.clone().unwrap()).collect();
    let classification = classification_report_with_labels(&truth, &predicted, classes)?;

    let mut by_group: BTreeMap<&str, Vec<&PredictionEntry>> = BTreeMap::new();
    for p in &predictions {
        by_group
            .entry(p.predicted_taxon.as_deref().unwrap())
            .or_default()
            .push(p);
    }
    let groups = by_group
        .into_iter()
        .map(|(taxon, entries)| {
            let y: Vec<f64> = entries.iter().map(|e| e.true_mass_ug).collect();
            let y_hat: Vec<f64> = entries.iter().map(|e| e.predicted_mass_ug).collect();
            let scale = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| if log_pearson { x.ln() } else { *x }).collect() };
            Ok(GroupBlock {
                predicted_taxon: taxon.to_string(),
                n: entries.len(),
                n_misclassified: entries.iter().filter(|e| e.taxon != taxon).count(),
                ks: ks_two_sample(&y_hat, &y)?,
                pearson_r: pearson_r(&scale(&y), &scale(&y_hat)).ok(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    Ok(PipelineReport {
        dataset: d.name.clone(),
        n: predictions.len(),
        classification,
        groups,
        predictions,
    })
}

/// One row per (dataset, method), metrics in a fixed column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: String,
    pub holdout: Option<String>,
    pub n: usize,
    /// `(metric, unit, value, interval)` in column order.
    pub values: Vec<ReportCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub metric: String,
    pub unit: String,
    pub value: f64,
    pub std: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

fn unit_of(m: Metric) -> (&'static str, f64) {
    match m {
        // masses are stored in micrograms, tabulated in milligrams
        Metric::Mae | Metric::Rmse => ("mg", 1e-3),
        Metric::R2Log => ("", 1.0),
        Metric::Mape | Metric::Mdape => ("fraction", 1.0),
    }
}

pub fn cmd_report(results: &[ResultFile]) -> Result<ReportTable, CliError> {
    if results.is_empty() {
        return Err(CliError::NoResults);
    }
    let mut rows: Vec<ReportRow> = results
        .iter()
        .map(|r| ReportRow {
            dataset: r.dataset.clone(),
            method: r.method.clone(),
            holdout: r.holdout.clone(),
            n: r.metrics.n,
            values: Metric::ALL
                .iter()
                .map(|&m| {
                    let (unit, scale) = unit_of(m);
                    let iv = r.metrics.intervals.as_ref().map(|i| m.interval(i));
                    ReportCell {
                        metric: m.name().to_string(),
                        unit: unit.to_string(),
                        value: m.of(&r.metrics) * scale,
                        std: iv.map(|i| i.std * scale),
                        ci_low: iv.map(|i| i.low * scale),
                        ci_high: iv.map(|i| i.high * scale),
                    }
                })
                .collect(),
        })
        .collect();
    rows.sort_by(|a, b| (&a.dataset, &a.method, &a.holdout).cmp(&(&b.dataset, &b.method, &b.holdout)));
    Ok(ReportTable { rows })
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec!["dataset".to_string(), "method".into(), "holdout".into(), "n".into()];
        for &m in &Metric::ALL {
            let (unit, _) = unit_of(m);
            let base = if unit == "mg" {
                format!("{}_mg", m.name())
            } else {
                m.name().to_string()
            };
            for suffix in ["", "_std", "_ci_low", "_ci_high"] {
                header.push(format!("{base}{suffix}"));
            }
        }
        w.write_record(&header).expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![
                r.dataset.clone(),
                r.method.clone(),
                r.holdout.clone().unwrap_or_default(),
                r.n.to_string(),
            ];
            for c in &r.values {
                rec.extend([c.value.to_string(), opt(c.std), opt(c.ci_low), opt(c.ci_high)]);
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv output is UTF-8")
    }
}

pub fn predictions_csv(p: &PredictionSet) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "specimen_id",
        "taxon",
        "true_mass_ug",
        "predicted_mass_ug",
        "predicted_taxon",
    ])
    .expect("in-memory write");
    for e in &p.entries {
        w.write_record([
            e.specimen_id.clone(),
            e.taxon.clone(),
            e.true_mass_ug.to_string(),
            e.predicted_mass_ug.to_string(),
            e.predicted_taxon.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv output is UTF-8")
}
