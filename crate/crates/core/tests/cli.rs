use std::path::Path;
use std::process::{Command, Output};

fn biomass(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biomass"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = biomass(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--seed", "3", "--count", "12", "--out", "synth"];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn missing_seed_is_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = biomass(dir.path(), &["synth", "--out", "s"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "missing_seed");
}

#[test]
fn bad_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.json"), "[{\"specimen_id\": 1}]").unwrap();
    let out = biomass(dir.path(), &["ingest", "--manifest", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_ingest_features_and_linear_fit() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    ok(
        dir.path(),
        &["ingest", "--manifest", "synth/manifest.json", "--name", "toy"],
    );
    let d: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("dataset.json")).unwrap()).unwrap();
    assert_eq!(d["name"], "toy");
    assert_eq!(d["specimens"].as_array().unwrap().len(), 36);

    ok(dir.path(), &["features", "--dataset", "dataset.json"]);
    let csv = std::fs::read_to_string(dir.path().join("features.csv")).unwrap();
    assert_eq!(csv.lines().count(), 37);

    ok(
        dir.path(),
        &[
            "fit-linear",
            "--dataset",
            "dataset.json",
            "--features",
            "area_speed",
            "--target",
            "log",
        ],
    );
    ok(
        dir.path(),
        &[
            "evaluate",
            "--model",
            "linear_model.json",
            "--dataset",
            "dataset.json",
            "--bootstrap",
            "0",
        ],
    );
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["method"], "linear-area-speed");
    assert_eq!(m["metrics"]["n"], 36);
    assert!(m["metrics"].get("intervals").is_none());
}

#[test]
fn ood_unknown_taxon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let out = biomass(
        dir.path(),
        &[
            "ood",
            "--dataset",
            "synth/manifest.json",
            "--holdout",
            "Z",
            "--method",
            "linear-area",
            "--seed",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_taxon"));

    ok(
        dir.path(),
        &[
            "ood",
            "--dataset",
            "synth/manifest.json",
            "--holdout",
            "B",
            "--method",
            "linear-area",
            "--seed",
            "1",
            "--bootstrap",
            "50",
        ],
    );
    let r: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("ood_B_linear-area.json")).unwrap()).unwrap();
    assert_eq!(r["holdout"], "B");
    assert_eq!(r["metrics"]["n"], 12);
}

#[test]
fn neural_train_finetune_and_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "synth": {"max_frames": 4, "speed_constant": 2.0,
                  "groups": [{"name": "A", "density_range": [1.1, 1.2], "size_lognormal": [1.1, 0.2], "count": 8},
                             {"name": "B", "density_range": [2.0, 2.5], "size_lognormal": [1.1, 0.2], "count": 8}]},
        "model": {"encoder": [{"out_channels": 2}], "head": "OneLayer", "input_size": 16},
        "train": {"epochs": 2, "batch_size": 4}
    }"#;
    std::fs::write(dir.path().join("run.json"), config).unwrap();
    let c = ["--config", "run.json", "--seed", "4"];
    let with = |args: &[&'static str]| -> Vec<&str> { args.iter().copied().chain(c).collect() };

    ok(dir.path(), &with(&["synth", "--rasters", "16", "--out", "synth"]));
    ok(dir.path(), &with(&["ingest", "--manifest", "synth/manifest.json"]));
    ok(
        dir.path(),
        &with(&[
            "train",
            "--dataset",
            "dataset.json",
            "--arch",
            "metadata",
            "--out",
            "meta",
        ]),
    );
    ok(
        dir.path(),
        &with(&[
            "finetune",
            "--model",
            "meta/model.json",
            "--dataset",
            "dataset.json",
            "--freeze",
            "encoder",
            "--out",
            "tuned",
        ]),
    );
    ok(
        dir.path(),
        &with(&["train", "--dataset", "dataset.json", "--classify", "--out", "cls"]),
    );
    ok(
        dir.path(),
        &["fit-linear", "--dataset", "dataset.json", "--features", "area-speed"],
    );
    ok(
        dir.path(),
        &[
            "pipeline",
            "--classifier",
            "cls/model.json",
            "--mass-model",
            "linear_model.json",
            "--taxon-model",
            "A=tuned/model.json",
            "--dataset",
            "dataset.json",
        ],
    );
    let p: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("pipeline.json")).unwrap()).unwrap();
    let total: u64 = p["groups"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["n"].as_u64().unwrap())
        .sum();
    assert_eq!(total, 16);

    // outputs never embed the machine-specific working directory
    let root = dir.path().to_string_lossy().into_owned();
    for f in [
        "dataset.json",
        "meta/model.json",
        "pipeline.json",
        "synth/manifest.json",
    ] {
        assert!(
            !std::fs::read_to_string(dir.path().join(f)).unwrap().contains(&root),
            "{f}"
        );
    }
}

#[test]
fn multi_view_needs_two_cameras() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"synth": {"max_frames": 3, "groups": [{"name": "A", "density_range": [1.5, 1.6], "size_lognormal": [1.1, 0.1], "count": 6}]}}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "synth",
            "--config",
            "run.json",
            "--seed",
            "1",
            "--rasters",
            "16",
            "--out",
            "s",
        ],
    );
    let out = biomass(
        dir.path(),
        &[
            "train",
            "--dataset",
            "s/manifest.json",
            "--arch",
            "multi",
            "--seed",
            "1",
            "--epochs",
            "1",
            "--input-size",
            "16",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("two-camera"));
}
