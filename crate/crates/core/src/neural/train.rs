//! Training, fine-tuning and inference over per-image samples.
//!
//! Every frame with a silhouette is one training sample carrying its
//! specimen's mass. Specimen-level estimates aggregate per-image predictions
//! with the same trimmed median the linear models use.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{CameraId, Dataset, PredictionEntry, PredictionSet, SpecimenRecord};
use crate::features::{specimen_features, TargetSpace};
use crate::ingest::Raster;
use crate::linear::{trimmed_median, DEFAULT_TRIM, MASS_FLOOR_UG};
use crate::rng::substream;

use super::augment::{augment, AugmentPolicy};
use super::loss::{cross_entropy, loss_and_grad, softmax, LossKind, LossSpace};
use super::model::*;
use super::optim::{adamw_step, cosine_lr, AdamWConfig, AdamWState};
use super::NeuralError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub space: LossSpace,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub seed: u64,
    pub augmentation: AugmentPolicy,
    pub freeze: Freeze,
    pub weight_decay: f64,
    /// Cap on frames drawn per specimen each epoch (fresh draw per epoch).
    pub max_images_per_specimen: Option<usize>,
    pub trim_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::L1,
            space: LossSpace::Log,
            epochs: 50,
            batch_size: 32,
            lr_max: 3e-3,
            lr_min: 1e-5,
            seed: 0,
            augmentation: AugmentPolicy::Flips90,
            freeze: Freeze::None,
            weight_decay: 0.01,
            max_images_per_specimen: None,
            trim_fraction: DEFAULT_TRIM,
        }
    }
}

impl TrainConfig {
    fn validate(&self, model: &ModelConfig) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr_min <= self.lr_max) || self.lr_min < 0.0 {
            return bad("need 0 <= lr_min <= lr_max");
        }
        if self.max_images_per_specimen == Some(0) {
            return bad("max_images_per_specimen must be positive");
        }
        if model.task == Task::Regression {
            let log_loss = self.space == LossSpace::Log;
            let log_target = model.target_space == TargetSpace::Log;
            if log_loss != log_target {
                return bad("log-space losses require a log-space model and vice versa");
            }
        }
        Ok(())
    }
}

/// Z-score statistics of each metadata input over the training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MetadataScaler {
    fn fit(rows: &[&[f64]], width: usize) -> Self {
        let mut mean = vec![0.0; width];
        let mut std = vec![1.0; width];
        for j in 0..width {
            let vals: Vec<f64> = rows.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            mean[j] = m;
            std[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        MetadataScaler { mean, std }
    }

    /// Standardizes one row; missing values (NaN) map to the mean.
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (m, s))| if v.is_finite() { (v - m) / s } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: ModelConfig,
    pub parameters: ParamMap,
    pub scaler: Option<MetadataScaler>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub val_loss_history: Vec<f64>,
    pub train_loss_history: Vec<f64>,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        let model: TrainedModel = serde_json::from_slice(&bytes).map_err(std::io::Error::other)?;
        if model.format_version != CHECKPOINT_VERSION {
            return Err(std::io::Error::other(format!(
                "unsupported checkpoint version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone)]
enum Target {
    Mass(f64),
    Class(usize),
}

/// One image (or image pair) of a specimen.
#[derive(Debug, Clone)]
struct Sample {
    specimen: usize,
    frames: Vec<usize>,
    meta_raw: Vec<f64>,
    target: Option<Target>,
}

fn raster_to_input(r: &Raster) -> Vec<f64> {
    r.pixels.iter().map(|&p| 1.0 - p as f64 / 255.0).collect()
}

/// Frame indices forming one sample each. Multi-view pairs every camera-A
/// frame with the camera-B frame at the same relative sequence position.
fn sample_frames(config: &ModelConfig, s: &SpecimenRecord) -> Result<Vec<Vec<usize>>, NeuralError> {
    if config.architecture == Architecture::MultiView {
        let a = s.camera_indices(CameraId::A);
        let b = s.camera_indices(CameraId::B);
        if a.is_empty() || b.is_empty() {
            return Err(NeuralError::MissingSecondView);
        }
        Ok(a.iter()
            .enumerate()
            .map(|(i, &fa)| vec![fa, b[i * b.len() / a.len()]])
            .collect())
    } else {
        Ok((0..s.frames.len()).map(|i| vec![i]).collect())
    }
}

fn specimen_samples(
    config: &ModelConfig,
    idx: usize,
    s: &SpecimenRecord,
    labelled: bool,
) -> Result<Vec<Sample>, NeuralError> {
    let rasters = s
        .rasters
        .as_ref()
        .ok_or_else(|| NeuralError::MissingRasters(s.specimen_id.clone()))?;
    for r in rasters {
        if r.height != config.input_size || r.width != config.input_size {
            return Err(NeuralError::ShapeMismatch(format!(
                "specimen {} raster is {}x{}, model expects {}x{}",
                s.specimen_id, r.height, r.width, config.input_size, config.input_size
            )));
        }
    }
    let target = if labelled {
        Some(match &config.task {
            Task::Regression => Target::Mass(
                s.dry_mass_ug
                    .ok_or_else(|| NeuralError::MissingMass(s.specimen_id.clone()))?,
            ),
            Task::Classification { classes } => Target::Class(
                classes
                    .iter()
                    .position(|c| *c == s.taxon)
                    .ok_or_else(|| NeuralError::UnknownClass(s.taxon.clone()))?,
            ),
        })
    } else {
        None
    };
    let feats = specimen_features(s).map_err(|e| NeuralError::InvalidConfig(e.to_string()))?;
    sample_frames(config, s)?
        .into_iter()
        .map(|frames| {
            let meta_raw = if config.uses_metadata() {
                let frame = &s.frames[frames[0]];
                config
                    .metadata_inputs
                    .iter()
                    .map(|m| match m {
                        MetadataInput::FrameArea => frame.area_px,
                        MetadataInput::MeanArea => feats.mean_area_px,
                        MetadataInput::SinkingSpeed => feats.sinking_speed.unwrap_or(f64::NAN),
                    })
                    .collect()
            } else {
                Vec::new()
            };
            Ok(Sample {
                specimen: idx,
                frames,
                meta_raw,
                target: target.clone(),
            })
        })
        .collect()
}

fn dataset_samples(config: &ModelConfig, d: &Dataset, labelled: bool) -> Result<Vec<Vec<Sample>>, NeuralError> {
    d.specimens
        .iter()
        .enumerate()
        .map(|(i, s)| specimen_samples(config, i, s, labelled))
        .collect()
}

fn sample_input(
    config: &ModelConfig,
    scaler: Option<&MetadataScaler>,
    d: &Dataset,
    sample: &Sample,
    policy: AugmentPolicy,
    rng: &mut impl Rng,
) -> Result<SampleInput, NeuralError> {
    let rasters = d.specimens[sample.specimen]
        .rasters
        .as_ref()
        .expect("checked when samples were built");
    let images = sample
        .frames
        .iter()
        .map(|&f| {
            let r = &rasters[f];
            Ok(match policy {
                AugmentPolicy::None => raster_to_input(r),
                p => raster_to_input(&augment(r, p, rng)?),
            })
        })
        .collect::<Result<_, NeuralError>>()?;
    let metadata = config
        .uses_metadata()
        .then(|| scaler.map_or_else(|| sample.meta_raw.clone(), |s| s.apply(&sample.meta_raw)));
    Ok(SampleInput { images, metadata })
}

/// Loss of one sample and d(loss)/d(output) scaled by `scale`.
fn sample_loss(cfg: &TrainConfig, target: &Target, output: &[f64], scale: f64) -> Result<(f64, Vec<f64>), NeuralError> {
    match target {
        Target::Mass(y) => {
            let (l, g) = loss_and_grad(cfg.loss, cfg.space, &[*y], &output[..1])?;
            Ok((l, vec![g[0] * scale]))
        }
        Target::Class(c) => Ok(cross_entropy(output, *c, scale)),
    }
}

/// Batch loss and gradients over explicit inputs (regression targets are
/// masses; the loss space decides whether they are log-transformed).
pub fn backward(
    config: &ModelConfig,
    params: &ParamMap,
    inputs: &[SampleInput],
    y: &[f64],
    loss: LossKind,
    space: LossSpace,
    freeze: Freeze,
) -> Result<(f64, ParamMap), NeuralError> {
    if inputs.is_empty() || inputs.len() != y.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "{} inputs for {} targets",
            inputs.len(),
            y.len()
        )));
    }
    let mut caches = Vec::with_capacity(inputs.len());
    let mut outputs = Vec::with_capacity(inputs.len());
    for input in inputs {
        let c = forward_cached(config, params, input)?;
        outputs.push(c.output[0]);
        caches.push(c);
    }
    let (value, g) = loss_and_grad(loss, space, y, &outputs)?;
    if !value.is_finite() {
        return Err(NeuralError::NonFiniteLoss);
    }
    let mut grads = zero_grads(params);
    for (c, gi) in caches.iter().zip(&g) {
        backward_sample(config, params, c, &[*gi], &mut grads, freeze)?;
    }
    Ok((value, grads))
}

/// Mean per-image loss over a dataset, no augmentation.
fn evaluate_loss(
    config: &ModelConfig,
    params: &ParamMap,
    scaler: Option<&MetadataScaler>,
    cfg: &TrainConfig,
    d: &Dataset,
    samples: &[Sample],
) -> Result<f64, NeuralError> {
    let mut rng = substream(0, "unused");
    let mut total = 0.0;
    for s in samples {
        let input = sample_input(config, scaler, d, s, AugmentPolicy::None, &mut rng)?;
        let out = forward(config, params, &input)?;
        total += sample_loss(cfg, s.target.as_ref().expect("labelled"), &out, 1.0)?.0;
    }
    Ok(total / samples.len() as f64)
}

fn check_modality(config: &ModelConfig, d: &Dataset) -> Result<(), NeuralError> {
    if config.architecture == Architecture::MultiView && !d.is_two_camera() {
        return Err(NeuralError::IncompatibleArchitecture(
            "multi-view model needs two-camera data".into(),
        ));
    }
    Ok(())
}

struct Start {
    params: ParamMap,
    scaler: Option<MetadataScaler>,
}

fn fit(
    config: &ModelConfig,
    start: Option<Start>,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel, NeuralError> {
    config.validate()?;
    cfg.validate(config)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NeuralError::EmptySplit);
    }
    check_modality(config, train_set)?;
    check_modality(config, val_set)?;

    let train_samples = dataset_samples(config, train_set, true)?;
    let val_samples: Vec<Sample> = dataset_samples(config, val_set, true)?.into_iter().flatten().collect();
    if train_samples.iter().all(Vec::is_empty) || val_samples.is_empty() {
        return Err(NeuralError::EmptySplit);
    }

    let Start { mut params, scaler } = match start {
        Some(s) => s,
        None => {
            let mut rng = substream(cfg.seed, "init");
            let mut params = init_parameters(config, &mut rng)?;
            if config.task == Task::Regression {
                let targets: Vec<f64> = train_samples
                    .iter()
                    .flatten()
                    .filter_map(|s| match s.target {
                        Some(Target::Mass(m)) => config.target_space.encode(m).ok(),
                        _ => None,
                    })
                    .collect();
                let mean = targets.iter().sum::<f64>() / targets.len().max(1) as f64;
                if let Some(b) = params.get_mut(config.output_bias_name()) {
                    b.data[0] = mean;
                }
            }
            let scaler = config.uses_metadata().then(|| {
                let rows: Vec<&[f64]> = train_samples.iter().flatten().map(|s| s.meta_raw.as_slice()).collect();
                MetadataScaler::fit(&rows, config.metadata_inputs.len())
            });
            Start { params, scaler }
        }
    };

    let per_epoch: usize = train_samples
        .iter()
        .map(|v| cfg.max_images_per_specimen.map_or(v.len(), |k| k.min(v.len())))
        .sum();
    let steps_per_epoch = per_epoch.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let adam = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut state = AdamWState::default();
    let mut shuffle_rng = substream(cfg.seed, "shuffle");
    let mut augment_rng = substream(cfg.seed, "augment");

    let mut best: Option<(f64, usize, ParamMap)> = None;
    let mut val_hist = Vec::with_capacity(cfg.epochs);
    let mut train_hist = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<&Sample> = Vec::with_capacity(per_epoch);
        for specimen in &train_samples {
            match cfg.max_images_per_specimen {
                Some(k) if k < specimen.len() => {
                    order.extend(specimen.choose_multiple(&mut shuffle_rng, k));
                }
                _ => order.extend(specimen.iter()),
            }
        }
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = zero_grads(&params);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for sample in batch {
                let input = sample_input(
                    config,
                    scaler.as_ref(),
                    train_set,
                    sample,
                    cfg.augmentation,
                    &mut augment_rng,
                )?;
                let cache = forward_cached(config, &params, &input)?;
                let (l, g) = sample_loss(cfg, sample.target.as_ref().expect("labelled"), &cache.output, scale)?;
                batch_loss += l * scale;
                backward_sample(config, &params, &cache, &g, &mut grads, cfg.freeze)?;
            }
            if !batch_loss.is_finite() {
                return Err(NeuralError::NonFiniteLoss);
            }
            epoch_loss += batch_loss * batch.len() as f64;
            let lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min);
            adamw_step(&mut params, &grads, &mut state, lr, &adam, |n| !cfg.freeze.is_frozen(n))?;
            step += 1;
        }
        train_hist.push(epoch_loss / order.len() as f64);

        let val = evaluate_loss(config, &params, scaler.as_ref(), cfg, val_set, &val_samples)?;
        if !val.is_finite() {
            return Err(NeuralError::NonFiniteLoss);
        }
        val_hist.push(val);
        if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
            best = Some((val, epoch, params.clone()));
        }
    }

    let (_, best_epoch, parameters) = best.expect("epochs >= 1");
    Ok(TrainedModel {
        format_version: CHECKPOINT_VERSION,
        config: config.clone(),
        parameters,
        scaler,
        best_epoch,
        val_loss_history: val_hist,
        train_loss_history: train_hist,
    })
}

/// Trains from a seeded initialization and returns the epoch with the lowest
/// validation loss.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    config: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel, NeuralError> {
    fit(config, None, train_set, val_set, cfg)
}

/// Continues training from `base`, keeping its metadata standardization.
/// `cfg.freeze` selects which parameter groups stay fixed.
pub fn fine_tune(
    base: &TrainedModel,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel, NeuralError> {
    for d in [train_set, val_set] {
        check_modality(&base.config, d)?;
        if let Some((h, w)) = d.raster_dims {
            if h != base.config.input_size || w != base.config.input_size {
                return Err(NeuralError::IncompatibleArchitecture(format!(
                    "model input is {0}x{0}, data is {h}x{w}",
                    base.config.input_size
                )));
            }
        }
    }
    let start = Start {
        params: base.parameters.clone(),
        scaler: base.scaler.clone(),
    };
    fit(&base.config, Some(start), train_set, val_set, cfg)
}

/// Raw outputs for every sample of one specimen.
fn specimen_outputs(model: &TrainedModel, s: &SpecimenRecord) -> Result<Vec<Vec<f64>>, NeuralError> {
    let d = Dataset::new("one", vec![s.clone()]);
    let samples = specimen_samples(&model.config, 0, &d.specimens[0], false)?;
    let mut rng = substream(0, "unused");
    samples
        .iter()
        .map(|sample| {
            let input = sample_input(
                &model.config,
                model.scaler.as_ref(),
                &d,
                sample,
                AugmentPolicy::None,
                &mut rng,
            )?;
            forward(&model.config, &model.parameters, &input)
        })
        .collect()
}

/// Mass-space prediction per image, clamped to the mass floor.
pub fn predict_images(model: &TrainedModel, s: &SpecimenRecord) -> Result<Vec<f64>, NeuralError> {
    if model.config.task != Task::Regression {
        return Err(NeuralError::IncompatibleArchitecture("not a regression model".into()));
    }
    Ok(specimen_outputs(model, s)?
        .into_iter()
        .map(|o| model.config.target_space.decode(o[0], MASS_FLOOR_UG))
        .collect())
}

pub fn predict_specimen(model: &TrainedModel, s: &SpecimenRecord, trim_fraction: f64) -> Result<f64, NeuralError> {
    trimmed_median(&predict_images(model, s)?, trim_fraction).map_err(|e| NeuralError::InvalidConfig(e.to_string()))
}

pub fn predict_dataset(model: &TrainedModel, d: &Dataset, trim_fraction: f64) -> Result<PredictionSet, NeuralError> {
    let entries = d
        .specimens
        .iter()
        .map(|s| {
            Ok(PredictionEntry {
                specimen_id: s.specimen_id.clone(),
                taxon: s.taxon.clone(),
                true_mass_ug: s
                    .dry_mass_ug
                    .ok_or_else(|| NeuralError::MissingMass(s.specimen_id.clone()))?,
                predicted_mass_ug: predict_specimen(model, s, trim_fraction)?,
                predicted_taxon: None,
            })
        })
        .collect::<Result<_, NeuralError>>()?;
    Ok(PredictionSet::new(entries))
}

/// Mean of the per-image class probabilities of one specimen.
pub fn class_probabilities(model: &TrainedModel, s: &SpecimenRecord) -> Result<Vec<f64>, NeuralError> {
    let Task::Classification { classes } = &model.config.task else {
        return Err(NeuralError::IncompatibleArchitecture(
            "not a classification model".into(),
        ));
    };
    let outputs = specimen_outputs(model, s)?;
    let mut mean = vec![0.0; classes.len()];
    for o in &outputs {
        if o.len() != classes.len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "{} logits for {} classes",
                o.len(),
                classes.len()
            )));
        }
        for (m, p) in mean.iter_mut().zip(softmax(o)) {
            *m += p / outputs.len() as f64;
        }
    }
    Ok(mean)
}

/// Predicted taxon (argmax of mean per-image probability) and the
/// probabilities themselves.
pub fn classify_specimen(model: &TrainedModel, s: &SpecimenRecord) -> Result<(String, Vec<f64>), NeuralError> {
    let p = class_probabilities(model, s)?;
    let Task::Classification { classes } = &model.config.task else {
        unreachable!("checked by class_probabilities");
    };
    let best = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .expect("at least two classes");
    Ok((classes[best].clone(), p))
}
