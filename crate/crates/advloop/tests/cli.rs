//! End-to-end CLI tests on a miniature configuration: the full pipeline in
//! a temp directory, plus the documented exit codes for each failure class.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_advloop")
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small but complete config: enough data/epochs for the pipeline to run,
/// not enough to be good.
fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.cfg");
    std::fs::write(
        &path,
        "data.n = 40\n\
         model.epochs = 2\n\
         loop.duration_s = 4\n\
         eval.epsilons = 0.02\n\
         eval.delays_ms = 100\n\
         eval.loss_probs = 0.02\n",
    )
    .unwrap();
    path
}

fn run_ok(args: &[&str]) {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "advloop {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_code(args: &[&str]) -> i32 {
    let out = Command::new(bin()).args(args).output().unwrap();
    out.status.code().unwrap_or(-1)
}

#[test]
fn full_pipeline_on_tiny_config() {
    let dir = tmp("cli-pipeline");
    let cfg = tiny_config(&dir);
    let cfg = cfg.to_str().unwrap();
    let out = dir.join("out");
    let out = out.to_str().unwrap();

    run_ok(&["gen-data", "--config", cfg, "--out", out]);
    assert!(dir.join("out/dataset/manifest.txt").exists());
    assert!(dir.join("out/dataset/frame_000039.adim").exists());
    assert!(dir.join("out/dataset/frame_000039.txt").exists());

    run_ok(&["train", "--config", cfg, "--out", out]);
    assert!(dir.join("out/model.adnn").exists());
    let curve = std::fs::read_to_string(dir.join("out/train_loss.csv")).unwrap();
    assert!(curve.starts_with("epoch,loss\n"));
    assert_eq!(curve.lines().count(), 3); // header + 2 epochs

    run_ok(&["eval", "--config", cfg, "--out", out]);
    let metrics = std::fs::read_to_string(dir.join("out/eval/metrics.csv")).unwrap();
    // clean + fgsm + pgd at the single epsilon
    assert_eq!(metrics.lines().count(), 4);
    assert!(dir.join("out/eval/confusion_clean.csv").exists());
    assert!(dir.join("out/eval/confusion_pgd-0.02.csv").exists());

    run_ok(&["run", "--config", cfg, "--out", out]);
    let run_metrics = std::fs::read_to_string(dir.join("out/run/metrics.csv")).unwrap();
    // baseline + 1 delay + 1 loss
    assert_eq!(run_metrics.lines().count(), 4);
    for scenario in ["baseline", "delay-100", "loss-2"] {
        assert!(dir.join(format!("out/run/{scenario}/ticks.csv")).exists());
        assert!(dir.join(format!("out/run/{scenario}/frames.csv")).exists());
        assert!(dir.join(format!("out/run/{scenario}/events.jsonl")).exists());
    }

    run_ok(&["report", "--config", cfg, "--out", out]);
    assert!(dir.join("out/report/pr_vs_epsilon.svg").exists());
    assert!(dir.join("out/report/trajectories.svg").exists());
    assert!(dir.join("out/report/compliance.txt").exists());
}

#[test]
fn gen_data_is_byte_reproducible() {
    let dir = tmp("cli-repro");
    let cfg = tiny_config(&dir);
    let cfg = cfg.to_str().unwrap();
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    run_ok(&["gen-data", "--config", cfg, "--out", out_a.to_str().unwrap()]);
    run_ok(&["gen-data", "--config", cfg, "--out", out_b.to_str().unwrap()]);
    for name in ["frame_000000.adim", "frame_000017.adim", "frame_000017.txt", "train.txt", "test.txt"] {
        let a = std::fs::read(out_a.join("dataset").join(name)).unwrap();
        let b = std::fs::read(out_b.join("dataset").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tmp("cli-exit");

    // invalid config key -> 2
    let bad_cfg = dir.join("bad.cfg");
    std::fs::write(&bad_cfg, "no.such.key = 1\n").unwrap();
    assert_eq!(
        run_code(&["gen-data", "--config", bad_cfg.to_str().unwrap(), "--out", dir.join("x").to_str().unwrap()]),
        2
    );

    // missing config file -> 2
    assert_eq!(
        run_code(&["gen-data", "--config", dir.join("absent.cfg").to_str().unwrap()]),
        2
    );

    // train without a dataset -> 3 (missing input)
    assert_eq!(
        run_code(&["train", "--out", dir.join("empty").to_str().unwrap()]),
        3
    );

    // report on an empty directory -> 3, and no partial plots
    let empty = dir.join("empty-report");
    std::fs::create_dir_all(&empty).unwrap();
    assert_eq!(run_code(&["report", "--out", empty.to_str().unwrap()]), 3);
    assert!(!empty.join("report").exists(), "partial report left behind");

    // eval with a missing checkpoint -> 4
    assert_eq!(
        run_code(&[
            "eval",
            "--out",
            dir.join("no-model").to_str().unwrap(),
            "--checkpoint",
            dir.join("ghost.adnn").to_str().unwrap(),
        ]),
        4
    );

    // eval with a corrupt checkpoint -> 4
    let corrupt = dir.join("corrupt.adnn");
    std::fs::write(&corrupt, b"XXXX not a checkpoint").unwrap();
    assert_eq!(
        run_code(&[
            "eval",
            "--out",
            dir.join("no-model").to_str().unwrap(),
            "--checkpoint",
            corrupt.to_str().unwrap(),
        ]),
        4
    );

    // drive to an absent server -> 5 (transport)
    assert_eq!(
        run_code(&["drive", "--connect", "127.0.0.1:1", "--out", dir.join("d").to_str().unwrap()]),
        5
    );
}
