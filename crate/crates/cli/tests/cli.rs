use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eventransact"))
        .args(args)
        .env("EVENTRANSACT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// The single stderr line of a failed run, parsed.
fn error_line(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    serde_json::from_str(lines[0]).expect("stderr is one JSON object")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gradcheck_passes_on_the_tiny_config() {
    let v = stdout_json(&cli(&["gradcheck"]));
    assert!(v["max_rel_err"].as_f64().unwrap() <= 1e-4);
    assert_eq!(v["pass"], true);
    assert_eq!(v["blocks"], 50);
}

#[test]
fn gradcheck_fails_loudly_with_a_coarse_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    fs::write(&cfg, r#"{"step": 0.5}"#).unwrap();
    let out = cli(&["gradcheck", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "gradcheck");
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], false);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = cli(&["train", "--config", "x.json", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_line(&out);
    assert_eq!(e["error"], "usage");
    assert!(e["message"].as_str().unwrap().contains("--frobnicate"));
    assert_eq!(cli(&[]).status.code(), Some(2));
}

#[test]
fn missing_config_names_the_path() {
    let out = cli(&["train", "--config", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(1));
    let e = error_line(&out);
    assert_eq!(e["error"], "io");
    assert_eq!(e["path"], "/definitely/not/here.json");
}

#[test]
fn invalid_config_reports_the_json_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"data": {"train_manifest": "t.json"}, "output_dir": "o", "train": {"tau": "warm"}}"#,
    )
    .unwrap();
    let e = error_line(&cli(&["train", "--config", p(&cfg)]));
    assert_eq!(e["error"], "config");
    assert_eq!(e["json_path"], "train.tau");
    assert_eq!(e["file"], p(&cfg));
}

#[test]
fn invalid_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    stdout_json(&cli(&[
        "synth",
        "--out",
        p(dir.path()),
        "--width",
        "32",
        "--height",
        "32",
        "--duration-usec",
        "300000",
        "--rate",
        "0.01",
    ]));
    let out = Command::new(env!("CARGO_BIN_EXE_eventransact"))
        .args([
            "eval",
            "--checkpoint",
            "none.etck",
            "--manifest",
            p(&dir.path().join("test.json")),
        ])
        .env("EVENTRANSACT_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn synth_train_eval_bench_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let s = stdout_json(&cli(&[
        "synth",
        "--out",
        p(&corpus),
        "--seed",
        "4",
        "--patterns",
        "translating_bar,flicker",
        "--train-per-class",
        "3",
        "--test-per-class",
        "2",
        "--width",
        "32",
        "--height",
        "32",
        "--duration-usec",
        "300000",
        "--rate",
        "0.01",
    ]));
    assert_eq!(
        (s["train_samples"].as_u64(), s["test_samples"].as_u64()),
        (Some(6), Some(4))
    );
    assert!(corpus.join("resolved_config.json").exists());

    let run_dir = dir.path().join("run");
    let config = json!({
        "model": {
            "image_size": 32, "patch_size": 16, "in_channels": 2, "embed_dim": 8, "spatial_depth": 1,
            "spatial_heads": 2, "temporal_layers": 1, "temporal_heads": 2, "attention_window": 2,
            "clip_len": 4, "num_classes": 2, "mlp_ratio": 2, "proj_hidden": 8, "proj_dim": 4, "dropout": 0.0
        },
        "train": {
            "epochs": 2, "warmup_epochs": 1, "base_lr": 0.001, "batch_size": 4, "clip_len": 4,
            "encoder": { "rho_usec": 50000, "spatial_size": 32 }
        },
        "data": { "train_manifest": corpus.join("train.json"), "test_manifest": corpus.join("test.json") },
        "output_dir": run_dir,
        "eval_clips": 2
    });
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, config.to_string()).unwrap();
    let t = stdout_json(&cli(&["train", "--config", p(&cfg)]));
    assert_eq!(t["epochs_completed"], 2);
    let resolved: Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["train"]["adam_beta2"], 0.999);
    assert_eq!(resolved["train"]["augment"]["drop_prob"], 0.2);

    let model = run_dir.join("model.etck");
    let test = corpus.join("test.json");
    let report = dir.path().join("eval/report.json");
    fs::create_dir_all(report.parent().unwrap()).unwrap();
    let first = cli(&[
        "eval",
        "--checkpoint",
        p(&model),
        "--manifest",
        p(&test),
        "--clips",
        "2",
        "--out",
        p(&report),
    ]);
    let second = cli(&[
        "eval",
        "--checkpoint",
        p(&model),
        "--manifest",
        p(&test),
        "--clips",
        "2",
    ]);
    assert_eq!(stdout_json(&first), stdout_json(&second));
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(stdout_json(&first)["num_videos"], 4);
    assert!(report.exists() && dir.path().join("eval/resolved_config.json").exists());

    let sample = fs::read_dir(corpus.join("test"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let b = stdout_json(&cli(&["bench", "--checkpoint", p(&model), "--sample", p(&sample)]));
    assert_eq!(b["trials"], 30);
    assert!(b["forward_ms"]["mean"].as_f64().unwrap() > 0.0);
    let e = error_line(&cli(&["bench", "--checkpoint", p(&model), "--trials", "3"]));
    assert_eq!(e["error"], "pipeline");
}

#[test]
fn prepare_reports_missing_labels() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("user01_led.aedat"), b"#!AER-DAT3.1\r\n#!END-HEADER\r\n").unwrap();
    let e = error_line(&cli(&[
        "prepare",
        "--root",
        p(dir.path()),
        "--out",
        p(&dir.path().join("out")),
    ]));
    assert_eq!(e["error"], "missing_labels");
    assert!(e["path"].as_str().unwrap().ends_with("user01_led_labels.csv"));
}
