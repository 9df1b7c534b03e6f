//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run a subset with `cargo test --test acceptance -- 3 7`.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use biomass_core::cli::{cmd_pipeline, crossval, MassModel, MassModels, Method, MethodConfig};
use biomass_core::eval::{
    bootstrap, classification_report, compute_metrics, ks_two_sample, make_cv_splits, MetricReport,
};
use biomass_core::features::TargetSpace;
use biomass_core::linear::{fit_linear, fit_ols, trimmed_median, FeatureSpec, RowMode, DEFAULT_TRIM};
use biomass_core::neural::{
    self, backward, fine_tune, forward, init_parameters, loss, Architecture, AugmentPolicy, ConvBlock, Freeze, Head,
    LossKind, LossSpace, ModelConfig, ParamMap, SampleInput, Task, TrainConfig,
};
use biomass_core::rng::substream;
use biomass_core::synth::{generate, GroupConfig, SynthConfig};
use biomass_core::{Dataset, FrameMeta, PredictionEntry, PredictionSet, SpecimenRecord};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn timed(limit: Duration, elapsed: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.1?}, limit {limit:?}"))
    }
}

fn c1_metric_oracle() -> Outcome {
    let t = Instant::now();
    let m =
        compute_metrics(&PredictionSet::from_pairs(&[1.0, 2.0, 4.0], &[2.0, 2.0, 2.0])).map_err(|e| e.to_string())?;
    let tol = 1e-12;
    let values_ok = within(m.mae, 1.0, tol)
        && within(m.mape, 0.5, tol)
        && within(m.mdape, 0.5, tol)
        && within(m.rmse, (5.0f64 / 3.0).sqrt(), tol);

    let y = [0.7, 3.0, 12.5, 40.0, 2.2];
    let perfect = compute_metrics(&PredictionSet::from_pairs(&y, &y)).map_err(|e| e.to_string())?;
    let perfect_ok = perfect.mae == 0.0
        && perfect.mape == 0.0
        && perfect.mdape == 0.0
        && perfect.rmse == 0.0
        && within(perfect.r2_log, 1.0, tol);

    let log_mean = y.iter().map(|v: &f64| v.ln()).sum::<f64>() / y.len() as f64;
    let baseline = compute_metrics(&PredictionSet::from_pairs(&y, &[log_mean.exp(); 5])).map_err(|e| e.to_string())?;
    let baseline_ok = within(baseline.r2_log, 0.0, tol);

    timed(Duration::from_secs(1), t.elapsed())?;
    check(
        values_ok && perfect_ok && baseline_ok,
        format!(
            "MAE={} MAPE={} MdAPE={} RMSE={}; perfect R2={}; log-mean R2={:.1e}",
            m.mae, m.mape, m.mdape, m.rmse, perfect.r2_log, baseline.r2_log
        ),
    )
}

/// Normal equations `(A'A) b = A'y` by Gaussian elimination with partial
/// pivoting, `A = [1 | X]`.
#[allow(clippy::needless_range_loop)]
fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let row = |i: usize| -> Vec<f64> { std::iter::once(1.0).chain(x[i].iter().copied()).collect() };
    let mut m = vec![vec![0.0; p + 1]; p];
    for (i, &yi) in y.iter().enumerate() {
        let a = row(i);
        for r in 0..p {
            for c in 0..p {
                m[r][c] += a[r] * a[c];
            }
            m[r][p] += a[r] * yi;
        }
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for r in col + 1..p {
            let f = m[r][col] / m[col][col];
            for c in col..=p {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut b = vec![0.0; p];
    for r in (0..p).rev() {
        let s: f64 = (r + 1..p).map(|c| m[r][c] * b[c]).sum();
        b[r] = (m[r][p] - s) / m[r][r];
    }
    b
}

fn c2_ols_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = substream(2, "acceptance");
    let (mut worst_coef, mut worst_orth) = (0.0f64, 0.0f64);
    for trial in 0..100 {
        let p = 1 + trial % 2;
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..p).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let beta: Vec<f64> = (0..=p).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| beta[0] + r.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-3.0..3.0))
            .collect();
        let fit = fit_ols(&x, &y).map_err(|e| e.to_string())?;
        let ours: Vec<f64> = std::iter::once(fit.intercept)
            .chain(fit.coefficients.iter().copied())
            .collect();
        let oracle = normal_equations(&x, &y);
        for (a, b) in ours.iter().zip(&oracle) {
            worst_coef = worst_coef.max((a - b).abs() / b.abs().max(1e-12));
        }
        let resid: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(r, yi)| yi - ours[0] - r.iter().zip(&ours[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let scale = y.iter().map(|v| v.abs()).sum::<f64>();
        let dot0: f64 = resid.iter().sum();
        worst_orth = worst_orth.max(dot0.abs() / scale);
        for j in 0..p {
            let col_scale = x.iter().map(|r| r[j].abs()).sum::<f64>() * scale / 50.0;
            let dot: f64 = x.iter().zip(&resid).map(|(r, e)| r[j] * e).sum();
            worst_orth = worst_orth.max(dot.abs() / col_scale);
        }
    }
    timed(Duration::from_secs(5), t.elapsed())?;
    check(
        worst_coef < 1e-8 && worst_orth < 1e-8,
        format!("max coefficient rel diff {worst_coef:.2e}, max residual orthogonality {worst_orth:.2e}"),
    )
}

fn tiny_model(arch: Architecture, head: Head, space: TargetSpace) -> ModelConfig {
    let mut c = match arch {
        Architecture::SingleView => ModelConfig::single_view(),
        Architecture::MultiView => ModelConfig::multi_view(),
        Architecture::MetadataAware => ModelConfig::metadata_aware(),
    };
    c.encoder = vec![ConvBlock::new(2), ConvBlock::new(3)];
    c.head = head;
    c.input_size = 8;
    c.target_space = space;
    c
}

fn batch_loss(
    config: &ModelConfig,
    p: &ParamMap,
    xs: &[SampleInput],
    y: &[f64],
    kind: LossKind,
    space: LossSpace,
) -> f64 {
    let out: Vec<f64> = xs.iter().map(|x| forward(config, p, x).unwrap()[0]).collect();
    loss(kind, space, y, &out).unwrap()
}

fn c3_gradients() -> Outcome {
    let t = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut combos = 0;
    for arch in [
        Architecture::SingleView,
        Architecture::MultiView,
        Architecture::MetadataAware,
    ] {
        for head in [Head::OneLayer, Head::TwoLayer { hidden_units: 4 }] {
            for (space, target) in [
                (LossSpace::Linear, TargetSpace::Raw),
                (LossSpace::Log, TargetSpace::Log),
            ] {
                for kind in [LossKind::L1, LossKind::L2, LossKind::Ape] {
                    let config = tiny_model(arch, head, target);
                    let mut rng = substream(3, "acceptance");
                    let mut params = init_parameters(&config, &mut rng).map_err(|e| e.to_string())?;
                    for (name, t) in params.iter_mut() {
                        if name.ends_with("bias") {
                            t.data.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
                        }
                    }
                    let n = config.input_size * config.input_size;
                    let xs: Vec<SampleInput> = (0..4)
                        .map(|_| SampleInput {
                            images: (0..config.n_views())
                                .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
                                .collect(),
                            metadata: config.uses_metadata().then(|| {
                                (0..config.metadata_inputs.len())
                                    .map(|_| rng.random_range(-1.5..1.5))
                                    .collect()
                            }),
                        })
                        .collect();
                    // every target above every output keeps L1/APE sign terms
                    // from cancelling to an exact zero
                    let y = [25.0, 37.0, 51.0, 80.0];
                    let (_, grads) =
                        backward(&config, &params, &xs, &y, kind, space, Freeze::None).map_err(|e| e.to_string())?;
                    for (name, g) in &grads {
                        for i in 0..g.data.len() {
                            let mut p = params.clone();
                            p.get_mut(name).unwrap().data[i] += h;
                            let up = batch_loss(&config, &p, &xs, &y, kind, space);
                            p.get_mut(name).unwrap().data[i] -= 2.0 * h;
                            let down = batch_loss(&config, &p, &xs, &y, kind, space);
                            let fd = (up - down) / (2.0 * h);
                            let a = g.data[i];
                            let rel = (a - fd).abs() / (a.abs() + 1e-8);
                            if rel >= 1e-4 {
                                return Err(format!("{arch:?} {head:?} {kind:?} {space:?} {name}[{i}]: {a} vs {fd}"));
                            }
                            worst = worst.max(rel);
                        }
                    }
                    combos += 1;
                }
            }
        }
    }
    timed(Duration::from_secs(120), t.elapsed())?;
    check(
        combos == 36,
        format!("{combos} combinations, max relative error {worst:.2e}"),
    )
}

fn pooled_mdape(d: &Dataset, cfg: &MethodConfig, seed: u64) -> Result<f64, String> {
    let out = crossval(d, cfg, 5, 0.2, seed).map_err(|e| e.to_string())?;
    Ok(compute_metrics(&out.pooled).map_err(|e| e.to_string())?.mdape)
}

fn c4_area_speed_beats_area() -> Outcome {
    let t = Instant::now();
    let cfg = SynthConfig {
        seed: 4,
        area_noise_cv: 0.05,
        ..SynthConfig::default()
    };
    let (d, _) = generate(&cfg).map_err(|e| e.to_string())?;
    if d.len() != 300 || d.taxon_set().len() != 3 {
        return Err(format!("synthetic dataset has {} specimens", d.len()));
    }
    let area = pooled_mdape(&d, &MethodConfig::new(Method::LinearArea), 4)?;
    let speed = pooled_mdape(&d, &MethodConfig::new(Method::LinearAreaSpeed), 4)?;
    timed(Duration::from_secs(30), t.elapsed())?;
    check(
        speed <= 0.8 * area,
        format!(
            "pooled MdAPE area {area:.4}, area+speed {speed:.4} (ratio {:.3})",
            speed / area
        ),
    )
}

fn c5_metadata_beats_image_only() -> Outcome {
    let t = Instant::now();
    let group = |name: &str, lo, hi| GroupConfig {
        name: name.into(),
        density_range: (lo, hi),
        size_lognormal: (8f64.ln(), 0.25),
        count: 67,
        aspect_ratio: 1.0,
    };
    let cfg = SynthConfig {
        groups: vec![group("A", 1.05, 1.2), group("B", 1.4, 1.7), group("C", 2.0, 2.6)],
        seed: 5,
        max_frames: 12,
        raster_size: Some(32),
        ..SynthConfig::default()
    };
    let (mut d, _) = generate(&cfg).map_err(|e| e.to_string())?;
    d.specimens.truncate(200);
    let train = TrainConfig {
        epochs: 50,
        max_images_per_specimen: Some(4),
        ..TrainConfig::default()
    };
    let run = |method| {
        let mc = MethodConfig {
            train: train.clone(),
            ..MethodConfig::new(method)
        };
        pooled_mdape(&d, &mc, 5)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let (image, meta) = pool.install(|| Ok::<_, String>((run(Method::NeuralSingle)?, run(Method::NeuralMetadata)?)))?;
    timed(Duration::from_secs(15 * 60), t.elapsed())?;
    check(
        meta <= 0.8 * image,
        format!(
            "pooled MdAPE image-only {image:.4}, metadata-aware {meta:.4} (ratio {:.3}), {:.0?}",
            meta / image,
            t.elapsed()
        ),
    )
}

fn c6_trimmed_median() -> Outcome {
    let mut rng = substream(6, "acceptance");
    let values: Vec<f64> = (0..30).map(|_| rng.random_range(0.9..1.1)).collect();
    let max_at = (0..30).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    let mut corrupted = values.clone();
    corrupted[max_at] *= 100.0;
    let before = trimmed_median(&values, DEFAULT_TRIM).map_err(|e| e.to_string())?;
    let after = trimmed_median(&corrupted, DEFAULT_TRIM).map_err(|e| e.to_string())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_change = (mean(&corrupted) - mean(&values)).abs() / mean(&values);
    check(
        after - before == 0.0 && mean_change > 3.0,
        format!(
            "trimmed-median change {}, mean change {:.0}%",
            after - before,
            100.0 * mean_change
        ),
    )
}

fn frame_stub(top: i64) -> FrameMeta {
    FrameMeta {
        camera_id: biomass_core::CameraId::A,
        frame_index: 0,
        top,
        bottom: top + 10,
        left: 0,
        right: 10,
        area_px: 50.0,
    }
}

fn random_dataset(rng: &mut impl Rng, taxa: usize, n: usize) -> Dataset {
    // every taxon gets at least one specimen per fold
    let mut counts = vec![5usize; taxa];
    for _ in 0..n - 5 * taxa {
        counts[rng.random_range(0..taxa)] += 1;
    }
    let mut specimens = Vec::with_capacity(n);
    for (t, &c) in counts.iter().enumerate() {
        for i in 0..c {
            let mut frames = vec![frame_stub(100), frame_stub(90)];
            frames[1].frame_index = 1;
            specimens.push(SpecimenRecord {
                specimen_id: format!("t{t}-{i}"),
                taxon: format!("t{t}"),
                dry_mass_ug: Some(1.0),
                frames,
                rasters: None,
            });
        }
    }
    specimens.shuffle(rng);
    Dataset::new("random", specimens)
}

fn c7_split_integrity() -> Outcome {
    let mut rng = substream(7, "acceptance");
    let mut worst_dev = 0.0f64;
    for trial in 0..1000 {
        let taxa = rng.random_range(2..=6);
        let n = rng.random_range(20.max(5 * taxa)..=200);
        let d = random_dataset(&mut rng, taxa, n);
        let plan = make_cv_splits(&d, 5, 0.2, trial).map_err(|e| format!("trial {trial}: {e}"))?;
        let mut tested = BTreeSet::new();
        for (f, roles) in plan.folds.iter().enumerate() {
            let (tr, va, te): (BTreeSet<_>, BTreeSet<_>, BTreeSet<_>) = (
                roles.train.iter().collect(),
                roles.val.iter().collect(),
                roles.test.iter().collect(),
            );
            if !tr.is_disjoint(&va) || !tr.is_disjoint(&te) || !va.is_disjoint(&te) {
                return Err(format!("trial {trial} fold {f}: a specimen has two roles"));
            }
            if tr.len() + va.len() + te.len() != n {
                return Err(format!("trial {trial} fold {f}: roles do not cover the dataset"));
            }
            for (got, share) in [(tr.len(), 0.64), (va.len(), 0.16), (te.len(), 0.20)] {
                let dev = (got as f64 - share * n as f64).abs();
                worst_dev = worst_dev.max(dev);
                if dev > 1.0 {
                    return Err(format!("trial {trial} fold {f}: {got} of {n} for share {share}"));
                }
            }
            for id in te {
                if !tested.insert(id.clone()) {
                    return Err(format!("trial {trial}: {id} tested twice"));
                }
            }
        }
        if tested.len() != n {
            return Err(format!("trial {trial}: test folds cover {} of {n}", tested.len()));
        }
        for taxon in d.taxon_set() {
            let per_fold: Vec<usize> = plan
                .folds
                .iter()
                .map(|r| r.test.iter().filter(|id| d.get(id).unwrap().taxon == taxon).count())
                .collect();
            if per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() > 1 {
                return Err(format!("trial {trial} taxon {taxon}: fold counts {per_fold:?}"));
            }
        }
    }
    Ok(format!(
        "1000 datasets, max role-size deviation {worst_dev:.2} specimens"
    ))
}

fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .chain(b)
        .map(|&x| {
            let fa = a.iter().filter(|&&v| v <= x).count() as f64 / a.len() as f64;
            let fb = b.iter().filter(|&&v| v <= x).count() as f64 / b.len() as f64;
            (fa - fb).abs()
        })
        .fold(0.0, f64::max)
}

fn c8_ks() -> Outcome {
    let mut rng = substream(8, "acceptance");
    for trial in 0..200 {
        let shift = rng.random_range(0.0..1.5);
        let a: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0) + shift).collect();
        let d = ks_two_sample(&a, &b).map_err(|e| e.to_string())?.d;
        let oracle = brute_force_ks(&a, &b);
        if d != oracle {
            return Err(format!("trial {trial}: D={d}, brute force {oracle}"));
        }
    }
    let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let same = ks_two_sample(&a, &a).map_err(|e| e.to_string())?;
    let b: Vec<f64> = a.iter().map(|v| v + 100.0).collect();
    let disjoint = ks_two_sample(&a, &b).map_err(|e| e.to_string())?;
    check(
        same.d == 0.0 && disjoint.d == 1.0 && within(same.p, 1.0, 1e-9),
        format!(
            "200 pairs exact; identical D={} p={}; disjoint D={}",
            same.d, same.p, disjoint.d
        ),
    )
}

fn c9_bootstrap_coverage() -> Outcome {
    let t = Instant::now();
    let mut rng = substream(9, "acceptance");
    let truth = LogNormal::new(3.0, 1.0).unwrap();
    let err = LogNormal::new(0.0, 0.3).unwrap();
    let population: Vec<PredictionEntry> = (0..100_000)
        .map(|i| {
            let y = truth.sample(&mut rng);
            PredictionEntry {
                specimen_id: format!("p{i}"),
                taxon: String::new(),
                true_mass_ug: y,
                predicted_mass_ug: y * err.sample(&mut rng),
                predicted_taxon: None,
            }
        })
        .collect();
    let mae = |p: &PredictionSet| compute_metrics(p).map(|m: MetricReport| m.mae).unwrap_or(f64::NAN);
    let target = mae(&PredictionSet::new(population.clone()));
    let mut covered = 0;
    for trial in 0..200 {
        let sample = PredictionSet::new(population.choose_multiple(&mut rng, 500).cloned().collect());
        let ci = bootstrap(mae, &sample, 1000, 0.95, trial).map_err(|e| e.to_string())?;
        if ci.low <= target && target <= ci.high {
            covered += 1;
        }
    }
    let rate = covered as f64 / 200.0;
    timed(Duration::from_secs(120), t.elapsed())?;
    check(rate >= 0.90, format!("coverage {covered}/200 = {rate:.3}"))
}

fn biomass(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_biomass"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn end_to_end(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    biomass(&["synth", "--seed", "10", "--count", "30", "--out", "synth"], dir)?;
    biomass(&["ingest", "--manifest", "synth/manifest.json", "--out", "run"], dir)?;
    for method in ["linear-area", "linear-area-speed"] {
        biomass(
            &[
                "crossval",
                "--dataset",
                "run/dataset.json",
                "--method",
                method,
                "--seed",
                "10",
                "--bootstrap",
                "200",
                "--out",
                "run",
            ],
            dir,
        )?;
    }
    biomass(
        &[
            "report",
            "--inputs",
            "run/crossval_linear-area.json",
            "run/crossval_linear-area-speed.json",
            "--out",
            "run",
        ],
        dir,
    )?;
    let read = |name: &str| std::fs::read(dir.join("run").join(name)).map_err(|e| e.to_string());
    Ok((read("report.csv")?, read("report.json")?))
}

fn c10_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = end_to_end(a.path())?;
    let second = end_to_end(b.path())?;
    check(
        first == second && !first.0.is_empty(),
        format!(
            "report.csv {} bytes, report.json {} bytes, identical: {}",
            first.0.len(),
            first.1.len(),
            first == second
        ),
    )
}

fn small_raster_dataset(seed: u64, count: usize) -> Result<Dataset, String> {
    let group = |name: &str, lo, hi| GroupConfig {
        name: name.into(),
        density_range: (lo, hi),
        size_lognormal: (3f64.ln(), 0.2),
        count,
        aspect_ratio: 1.0,
    };
    let cfg = SynthConfig {
        groups: vec![group("A", 1.1, 1.2), group("B", 2.0, 2.5)],
        seed,
        max_frames: 4,
        raster_size: Some(16),
        speed_constant: 2.0,
        ..SynthConfig::default()
    };
    generate(&cfg).map(|(d, _)| d).map_err(|e| e.to_string())
}

fn c11_freeze() -> Outcome {
    let d = small_raster_dataset(11, 6)?;
    let (train, val) = biomass_core::cli::train_val_split(&d, 0.25, 11);
    let mut model = ModelConfig::metadata_aware();
    model.encoder = vec![ConvBlock::new(2), ConvBlock::new(3)];
    model.head = Head::TwoLayer { hidden_units: 4 };
    model.input_size = 16;
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        augmentation: AugmentPolicy::None,
        seed: 11,
        ..TrainConfig::default()
    };
    let base = neural::train(&train, &val, &model, &cfg).map_err(|e| e.to_string())?;
    let mut report = Vec::new();
    for freeze in [Freeze::Encoder, Freeze::EncoderAndMetadata] {
        let tuned =
            fine_tune(&base, &train, &val, &TrainConfig { freeze, ..cfg.clone() }).map_err(|e| e.to_string())?;
        let (mut frozen, mut moved) = (0, 0);
        for (name, t) in &base.parameters {
            let same = t
                .data
                .iter()
                .zip(&tuned.parameters[name].data)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if freeze.is_frozen(name) {
                if !same {
                    return Err(format!("{freeze:?}: frozen {name} changed"));
                }
                frozen += 1;
            } else if !same {
                moved += 1;
            }
        }
        let expect_meta = freeze == Freeze::EncoderAndMetadata;
        let meta_frozen = base
            .parameters
            .keys()
            .filter(|n| n.starts_with("meta"))
            .all(|n| freeze.is_frozen(n));
        if frozen == 0 || moved == 0 || meta_frozen != expect_meta {
            return Err(format!("{freeze:?}: {frozen} frozen, {moved} updated tensors"));
        }
        report.push(format!("{freeze:?}: {frozen} tensors bit-identical, {moved} updated"));
    }
    Ok(report.join("; "))
}

fn c12_classification() -> Outcome {
    let labels = |v: &[(&str, usize)]| -> Vec<String> {
        v.iter()
            .flat_map(|&(l, n)| std::iter::repeat_n(l.to_string(), n))
            .collect()
    };
    // TP=3, FN=1, FP=1, TN=5 for "pos"
    let truth = labels(&[("pos", 3), ("pos", 1), ("neg", 1), ("neg", 5)]);
    let predicted = labels(&[("pos", 3), ("neg", 1), ("pos", 1), ("neg", 5)]);
    let r = classification_report(&truth, &predicted).map_err(|e| e.to_string())?;
    let pos = r.per_class.iter().find(|c| c.label == "pos").ok_or("no pos class")?;
    let tol = 1e-12;
    let metrics_ok = within(pos.precision, 0.75, tol) && within(pos.recall, 0.75, tol) && within(pos.f1, 0.75, tol);

    let d = small_raster_dataset(12, 8)?;
    let (train, val) = biomass_core::cli::train_val_split(&d, 0.25, 12);
    let mut model = ModelConfig::single_view();
    model.encoder = vec![ConvBlock::new(2), ConvBlock::new(3)];
    model.head = Head::OneLayer;
    model.input_size = 16;
    model.task = Task::Classification {
        classes: d.taxon_set().into_iter().collect(),
    };
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 12,
        ..TrainConfig::default()
    };
    let classifier = neural::train(&train, &val, &model, &cfg).map_err(|e| e.to_string())?;
    let shared =
        fit_linear(&d, FeatureSpec::AreaPlusSpeed, TargetSpace::Raw, RowMode::PerImage).map_err(|e| e.to_string())?;
    let models = MassModels {
        shared: Some(MassModel::Linear(shared)),
        ..MassModels::default()
    };
    let p = cmd_pipeline(&classifier, &models, &d, DEFAULT_TRIM, true).map_err(|e| e.to_string())?;
    let total: usize = p.groups.iter().map(|g| g.n).sum();
    check(
        metrics_ok && total == d.len(),
        format!(
            "precision={} recall={} F1={}; pipeline groups sum to {total} of {}",
            pos.precision,
            pos.recall,
            pos.f1,
            d.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("metric oracle", c1_metric_oracle),
        ("OLS oracle equivalence", c2_ols_oracle),
        ("gradient correctness", c3_gradients),
        ("area+speed beats area on synthetic data", c4_area_speed_beats_area),
        ("metadata-aware beats image-only", c5_metadata_beats_image_only),
        ("trimmed-median robustness", c6_trimmed_median),
        ("split integrity", c7_split_integrity),
        ("KS correctness", c8_ks),
        ("bootstrap coverage", c9_bootstrap_coverage),
        ("end-to-end determinism", c10_determinism),
        ("freeze contract", c11_freeze),
        ("classification report and pipeline blocks", c12_classification),
    ];
    // libtest-style flags (e.g. --nocapture) are ignored; bare numbers select
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
