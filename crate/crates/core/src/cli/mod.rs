//! The `biomass` command line.
//!
//! Every command writes its primary outputs under `--out` and prints the
//! written file names. Failures print a JSON object on stderr and exit with
//! 2 for input problems or 3 for numeric failures.

mod experiments;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::Dataset;
use crate::eval::EvalError;
use crate::features::{features_csv, specimen_features, FeatureError, TargetSpace};
use crate::ingest::{read_dataset, IngestError};
use crate::linear::{fit_linear, FeatureSpec, LinearError, RowMode, DEFAULT_TRIM};
use crate::neural::{
    self, AugmentPolicy, Freeze, Head, LossKind, LossSpace, ModelConfig, NeuralError, Task, TrainConfig, TrainedModel,
};
use crate::synth::{generate, write_synth, SynthConfig, SynthError};

pub use experiments::*;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("--seed is required for this command")]
    MissingSeed,
    #[error("taxon {0:?} is not in the dataset")]
    UnknownTaxon(String),
    #[error("no mass model for taxon {0:?}")]
    ModelMissing(String),
    #[error("no result files given")]
    NoResults,
    #[error("{0}")]
    InvalidArgument(String),
}

impl CliError {
    /// 3 for numeric failures, 2 for everything the caller can fix.
    pub fn exit_code(&self) -> i32 {
        let numeric = matches!(
            self,
            CliError::Linear(LinearError::RankDeficient { .. })
                | CliError::Neural(NeuralError::NonFiniteLoss)
                | CliError::Eval(EvalError::ZeroVariance)
        );
        if numeric {
            3
        } else {
            2
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Ingest(_) => "ingest",
            CliError::Feature(_) => "features",
            CliError::Linear(_) => "linear",
            CliError::Neural(_) => "neural",
            CliError::Eval(_) => "eval",
            CliError::Synth(_) => "synth",
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "json",
            CliError::MissingSeed => "missing_seed",
            CliError::UnknownTaxon(_) => "unknown_taxon",
            CliError::ModelMissing(_) => "model_missing",
            CliError::NoResults => "no_results",
            CliError::InvalidArgument(_) => "invalid_argument",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "biomass",
    version,
    about = "Dry-mass estimation for imaged invertebrate specimens"
)]
pub struct Cli {
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with optional "synth", "model" and "train" sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for parallel loading and bootstrap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a manifest, validate it and write dataset.json.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        raster_size: Option<usize>,
        /// Dataset name; defaults to the manifest's directory name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Generate a synthetic dataset in the manifest layout.
    Synth {
        /// Specimens per group (overrides the config).
        #[arg(long)]
        count: Option<usize>,
        /// Also write square silhouette rasters of this size.
        #[arg(long)]
        rasters: Option<usize>,
        #[arg(long)]
        two_cameras: bool,
    },
    /// Write the per-specimen predictor table.
    Features {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Fit an area or area+speed least-squares model.
    FitLinear {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = FeaturesArg::Area)]
        features: FeaturesArg,
        #[command(flatten)]
        linear: LinearArgs,
    },
    /// Train a neural model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        val_dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ArchArg::Single)]
        arch: ArchArg,
        /// Train a taxon classifier instead of a mass regressor.
        #[arg(long)]
        classify: bool,
        #[command(flatten)]
        neural: NeuralArgs,
    },
    /// Continue training a saved neural model.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        val_dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FreezeArg::None)]
        freeze: FreezeArg,
        #[command(flatten)]
        neural: NeuralArgs,
    },
    /// Stratified k-fold cross-validation with pooled test predictions.
    Crossval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        #[command(flatten)]
        boot: BootArgs,
        #[command(flatten)]
        linear: LinearArgs,
        #[command(flatten)]
        neural: NeuralArgs,
    },
    /// Score a saved model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = DEFAULT_TRIM)]
        trim: f64,
        /// Method label used in the report.
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        boot: BootArgs,
    },
    /// Train on all taxa but one and test on the held-out taxon.
    Ood {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        holdout: String,
        #[arg(long, value_enum)]
        method: Method,
        #[command(flatten)]
        boot: BootArgs,
        #[command(flatten)]
        linear: LinearArgs,
        #[command(flatten)]
        neural: NeuralArgs,
    },
    /// Classify, then estimate mass with per-taxon or shared models.
    Pipeline {
        #[arg(long)]
        classifier: PathBuf,
        /// Shared mass model used when no per-taxon model matches.
        #[arg(long)]
        mass_model: Option<PathBuf>,
        /// Per-taxon mass model as TAXON=PATH; repeatable.
        #[arg(long = "taxon-model", value_parser = parse_taxon_model)]
        taxon_models: Vec<(String, PathBuf)>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = DEFAULT_TRIM)]
        trim: f64,
        /// Correlate raw rather than log masses.
        #[arg(long)]
        raw_pearson: bool,
    },
    /// Consolidate result files into one table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn parse_taxon_model(s: &str) -> Result<(String, PathBuf), String> {
    let (taxon, path) = s.split_once('=').ok_or("expected TAXON=PATH")?;
    Ok((taxon.to_string(), PathBuf::from(path)))
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Manifest (JSON array) or dataset written by `ingest`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Pad rasters to this square size when reading a manifest.
    #[arg(long)]
    pub raster_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LinearArgs {
    #[arg(long, value_enum, default_value_t = SpaceArg::Raw)]
    pub target: SpaceArg,
    #[arg(long, value_enum, default_value_t = RowsArg::PerImage)]
    pub rows: RowsArg,
    #[arg(long, default_value_t = DEFAULT_TRIM)]
    pub trim: f64,
}

#[derive(Debug, Args)]
pub struct NeuralArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Target and loss space of neural regressors.
    #[arg(long, value_enum)]
    pub nn_space: Option<SpaceArg>,
    #[arg(long, value_enum)]
    pub augment: Option<AugmentArg>,
    /// Frames drawn per specimen and epoch.
    #[arg(long)]
    pub max_images: Option<usize>,
    #[arg(long)]
    pub input_size: Option<usize>,
    /// Hidden units of the head; 0 selects a single linear layer.
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BootArgs {
    /// Bootstrap draws; 0 disables intervals.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeaturesArg {
    Area,
    #[value(name = "area_speed", alias = "area-speed")]
    AreaSpeed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpaceArg {
    Raw,
    Log,
}

impl SpaceArg {
    fn target(self) -> TargetSpace {
        match self {
            SpaceArg::Raw => TargetSpace::Raw,
            SpaceArg::Log => TargetSpace::Log,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RowsArg {
    PerImage,
    SpecimenMean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArchArg {
    Single,
    Multi,
    Metadata,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    L1,
    L2,
    Ape,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AugmentArg {
    None,
    Flips90,
    Rotation,
    Photometric,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FreezeArg {
    None,
    Encoder,
    EncoderMetadata,
}

/// Optional JSON config; flags override its fields.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: Option<SynthConfig>,
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
}

struct Ctx {
    seed: Option<u64>,
    config: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or(CliError::MissingSeed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out).map_err(|source| CliError::Io {
            path: self.out.clone(),
            source,
        })?;
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        println!("{}", path.display());
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
            path: self.path(name),
            source,
        })?;
        self.write(name, (text + "\n").as_bytes())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn load(data: &DataArgs) -> Result<Dataset, CliError> {
    Ok(read_dataset(&data.dataset, data.raster_size)?)
}

fn rows(r: RowsArg) -> RowMode {
    match r {
        RowsArg::PerImage => RowMode::PerImage,
        RowsArg::SpecimenMean => RowMode::SpecimenMean,
    }
}

fn train_config(ctx: &Ctx, args: &NeuralArgs, seed: u64) -> TrainConfig {
    let mut t = ctx.config.train.clone().unwrap_or_default();
    t.seed = seed;
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.lr_max {
        t.lr_max = v;
    }
    if let Some(v) = args.lr_min {
        t.lr_min = v;
    }
    if let Some(v) = args.weight_decay {
        t.weight_decay = v;
    }
    if let Some(v) = args.loss {
        t.loss = match v {
            LossArg::L1 => LossKind::L1,
            LossArg::L2 => LossKind::L2,
            LossArg::Ape => LossKind::Ape,
        };
    }
    if let Some(v) = args.nn_space {
        t.space = match v {
            SpaceArg::Raw => LossSpace::Linear,
            SpaceArg::Log => LossSpace::Log,
        };
    }
    if let Some(v) = args.augment {
        t.augmentation = match v {
            AugmentArg::None => AugmentPolicy::None,
            AugmentArg::Flips90 => AugmentPolicy::Flips90,
            AugmentArg::Rotation => AugmentPolicy::ContinuousRotation,
            AugmentArg::Photometric => AugmentPolicy::PhotometricLite,
        };
    }
    if args.max_images.is_some() {
        t.max_images_per_specimen = args.max_images;
    }
    t
}

/// Model config from the config file and flags; the loss space decides the
/// target space so the two always agree.
fn model_config(ctx: &Ctx, args: &NeuralArgs, train: &TrainConfig, d: &Dataset) -> ModelConfig {
    let mut m = ctx.config.model.clone().unwrap_or_else(|| {
        let mut m = ModelConfig::single_view();
        if let Some((h, _)) = d.raster_dims {
            m.input_size = h;
        }
        m
    });
    if let Some(s) = args.input_size {
        m.input_size = s;
    }
    if let Some(h) = args.hidden {
        m.head = if h == 0 {
            Head::OneLayer
        } else {
            Head::TwoLayer { hidden_units: h }
        };
    }
    m.target_space = match train.space {
        LossSpace::Linear => TargetSpace::Raw,
        LossSpace::Log => TargetSpace::Log,
    };
    m
}

fn method_config(
    ctx: &Ctx,
    method: Method,
    linear: &LinearArgs,
    neural: &NeuralArgs,
    seed: u64,
    d: &Dataset,
) -> MethodConfig {
    let train = train_config(ctx, neural, seed);
    let model = model_config(ctx, neural, &train, d);
    MethodConfig {
        method,
        linear_target: linear.target.target(),
        rows: rows(linear.rows),
        model: Some(model),
        train: TrainConfig {
            trim_fraction: linear.trim,
            ..train
        },
        trim: linear.trim,
    }
}

fn validation_split(
    ctx: &Ctx,
    d: Dataset,
    val: &Option<PathBuf>,
    raster_size: Option<usize>,
    seed: u64,
) -> Result<(Dataset, Dataset), CliError> {
    let _ = ctx;
    match val {
        Some(p) => Ok((d, read_dataset(p, raster_size)?)),
        None => Ok(train_val_split(&d, 0.2, seed)),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed,
        config,
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Ingest {
            manifest,
            raster_size,
            name,
        } => {
            let mut d = read_dataset(&manifest, raster_size)?;
            if let Some(n) = name {
                d.name = n;
            }
            ctx.write_json("dataset.json", &d)?;
        }
        Command::Synth {
            count,
            rasters,
            two_cameras,
        } => {
            let mut cfg = ctx.config.synth.clone().unwrap_or_default();
            cfg.seed = ctx.seed()?;
            if let Some(c) = count {
                cfg.groups.iter_mut().for_each(|g| g.count = c);
            }
            if rasters.is_some() {
                cfg.raster_size = rasters;
            }
            cfg.two_cameras |= two_cameras;
            let (d, truth) = generate(&cfg)?;
            let manifest = write_synth(&ctx.out, &d, &truth)?;
            println!("{}", manifest.display());
            ctx.write_json("synth_config.json", &cfg)?;
        }
        Command::Features { data } => {
            let d = load(&data)?;
            let rows = d
                .specimens
                .iter()
                .map(|s| Ok((s, specimen_features(s)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            ctx.write("features.csv", features_csv(&rows).as_bytes())?;
        }
        Command::FitLinear { data, features, linear } => {
            let d = load(&data)?;
            let spec = match features {
                FeaturesArg::Area => FeatureSpec::AreaOnly,
                FeaturesArg::AreaSpeed => FeatureSpec::AreaPlusSpeed,
            };
            let m = fit_linear(&d, spec, linear.target.target(), rows(linear.rows))?;
            ctx.write_json("linear_model.json", &m)?;
        }
        Command::Train {
            data,
            val_dataset,
            arch,
            classify,
            neural,
        } => {
            let seed = ctx.seed()?;
            let d = load(&data)?;
            let train = train_config(&ctx, &neural, seed);
            let mut model = model_config(&ctx, &neural, &train, &d);
            model.architecture = match arch {
                ArchArg::Single => neural::Architecture::SingleView,
                ArchArg::Multi => neural::Architecture::MultiView,
                ArchArg::Metadata => neural::Architecture::MetadataAware,
            };
            if model.architecture == neural::Architecture::MetadataAware && model.metadata_inputs.is_empty() {
                model.metadata_inputs = ModelConfig::metadata_aware().metadata_inputs;
                model.metadata_hidden = 2 * model.metadata_inputs.len();
            }
            if classify {
                model.task = Task::Classification {
                    classes: d.taxon_set().into_iter().collect(),
                };
            }
            let (tr, val) = validation_split(&ctx, d, &val_dataset, data.raster_size, seed)?;
            let m = neural::train(&tr, &val, &model, &train)?;
            ctx.write_json("model.json", &m)?;
        }
        Command::Finetune {
            model,
            data,
            val_dataset,
            freeze,
            neural,
        } => {
            let seed = ctx.seed()?;
            let base: TrainedModel = read_json(&model)?;
            let d = load(&data)?;
            let mut train = train_config(&ctx, &neural, seed);
            train.space = match base.config.target_space {
                TargetSpace::Raw => LossSpace::Linear,
                TargetSpace::Log => LossSpace::Log,
            };
            train.freeze = match freeze {
                FreezeArg::None => Freeze::None,
                FreezeArg::Encoder => Freeze::Encoder,
                FreezeArg::EncoderMetadata => Freeze::EncoderAndMetadata,
            };
            let (tr, val) = validation_split(&ctx, d, &val_dataset, data.raster_size, seed)?;
            let m = neural::fine_tune(&base, &tr, &val, &train)?;
            ctx.write_json("model.json", &m)?;
        }
        Command::Crossval {
            data,
            method,
            k,
            val_fraction,
            boot,
            linear,
            neural,
        } => {
            let seed = ctx.seed()?;
            let d = load(&data)?;
            let cfg = method_config(&ctx, method, &linear, &neural, seed, &d);
            let outcome = crossval(&d, &cfg, k, val_fraction, seed)?;
            let result = crossval_result(&d, &cfg, &outcome, boot.bootstrap, boot.level, seed)?;
            let label = cfg.label();
            ctx.write_json("split_plan.json", &outcome.plan)?;
            ctx.write(
                &format!("predictions_{label}.csv"),
                predictions_csv(&outcome.pooled).as_bytes(),
            )?;
            ctx.write_json(&format!("crossval_{label}.json"), &result)?;
        }
        Command::Evaluate {
            model,
            data,
            trim,
            label,
            boot,
        } => {
            let m: MassModel = read_json(&model)?;
            let d = load(&data)?;
            let preds = m.predict_dataset(&d, trim)?;
            let seed = if boot.bootstrap > 0 { ctx.seed()? } else { 0 };
            let metrics = metrics_for(&preds, boot.bootstrap, boot.level, seed)?;
            let method = label.unwrap_or_else(|| match &m {
                MassModel::Linear(l) => match l.feature_spec {
                    FeatureSpec::AreaOnly => "linear-area".into(),
                    FeatureSpec::AreaPlusSpeed => "linear-area-speed".into(),
                },
                MassModel::Neural(_) => "neural".into(),
            });
            let result = ResultFile {
                dataset: d.name.clone(),
                method,
                metrics,
                per_fold: Vec::new(),
                holdout: None,
            };
            let r = &result.metrics;
            let row = format!(
                "n,mape,mdape,mae_ug,rmse_ug,r2_log\n{},{},{},{},{},{}\n",
                r.n, r.mape, r.mdape, r.mae, r.rmse, r.r2_log
            );
            ctx.write("predictions.csv", predictions_csv(&preds).as_bytes())?;
            ctx.write("metrics.csv", row.as_bytes())?;
            ctx.write_json("metrics.json", &result)?;
        }
        Command::Ood {
            data,
            holdout,
            method,
            boot,
            linear,
            neural,
        } => {
            let seed = ctx.seed()?;
            let d = load(&data)?;
            let cfg = method_config(&ctx, method, &linear, &neural, seed, &d);
            let (result, preds) = cmd_ood(&d, &holdout, &cfg, boot.bootstrap, boot.level, seed)?;
            let label = cfg.label();
            ctx.write(
                &format!("predictions_ood_{holdout}_{label}.csv"),
                predictions_csv(&preds).as_bytes(),
            )?;
            ctx.write_json(&format!("ood_{holdout}_{label}.json"), &result)?;
        }
        Command::Pipeline {
            classifier,
            mass_model,
            taxon_models,
            data,
            trim,
            raw_pearson,
        } => {
            let classifier: TrainedModel = read_json(&classifier)?;
            let mut models = MassModels {
                shared: mass_model.as_deref().map(read_json).transpose()?,
                ..MassModels::default()
            };
            for (taxon, path) in taxon_models {
                models.per_taxon.insert(taxon, read_json(&path)?);
            }
            if models.shared.is_none() && models.per_taxon.is_empty() {
                return Err(CliError::ModelMissing("*".into()));
            }
            let d = load(&data)?;
            let report = cmd_pipeline(&classifier, &models, &d, trim, !raw_pearson)?;
            ctx.write_json("pipeline.json", &report)?;
        }
        Command::Report { inputs } => {
            let results = inputs
                .iter()
                .map(|p| read_json(p))
                .collect::<Result<Vec<ResultFile>, _>>()?;
            let table = cmd_report(&results)?;
            ctx.write("report.csv", table.to_csv().as_bytes())?;
            ctx.write_json("report.json", &table)?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let body = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{body}");
            e.exit_code()
        }
    }
}
