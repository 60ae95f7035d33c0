use std::path::Path;
use std::process::Command;

use krpo::config::ExperimentConfig;
use krpo::experiment::{sweep_plan, CURVE_FILE, INCOMPLETE_MARKER, METRICS_FILE, REPORT_FILE};
use krpo::trainer::run;
use krpo::{EstimatorKind, Tier, TrainConfig};

fn krpo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_krpo"))
}

#[test]
fn group_mean_learns_easy_tier() {
    let results: Vec<(u64, f64, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = [42u64, 777, 1234]
            .into_iter()
            .map(|seed| {
                s.spawn(move || {
                    let cfg = TrainConfig {
                        seed,
                        steps: 300,
                        tier: Tier::Easy,
                        estimator: EstimatorKind::GroupMean,
                        ..TrainConfig::default()
                    };
                    let smoothed = run(&cfg).unwrap().smoothed_rewards();
                    (seed, smoothed[0], *smoothed.last().unwrap())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (seed, first, last) in results {
        assert!(
            last - first > 0.1,
            "seed {seed}: smoothed reward {first:.3} -> {last:.3}"
        );
    }
}

#[test]
fn sweep_plan_sizes() {
    for (text, expected) in [
        ("sweep.kl_weight = 0, 0.001, 0.01, 0.05", 4),
        ("sweep.group_size = 5, 8, 10, 15", 4),
        ("sweep.seed = 42, 777, 1234", 3),
        ("sweep.q = 1e-6, 1e-5\nsweep.r = 1e-3, 1e-2, 1e-1", 6),
    ] {
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(sweep_plan(&cfg).unwrap().len(), expected, "{text}");
    }
    assert!(sweep_plan(&ExperimentConfig::default()).is_err());
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn cli_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "steps = 20\nprompt_count = 8\neval_count = 8\n");
    let out = tmp.path().join("runs");
    let status = krpo()
        .args([
            "run",
            "--quiet",
            "--seed",
            "7",
            "--estimator",
            "group-mean",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let dir = out.join("group_mean_7");
    for f in [METRICS_FILE, REPORT_FILE, CURVE_FILE] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    assert!(!dir.join(INCOMPLETE_MARKER).exists());
    let metrics = std::fs::read_to_string(dir.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 21);
}

#[test]
fn cli_run_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "steps = 30\nprompt_count = 8\neval_count = 8\n");
    let read = |name: &str| {
        let out = tmp.path().join(name);
        assert!(krpo()
            .args(["run", "--quiet", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .success());
        std::fs::read(out.join("kalman_42").join(METRICS_FILE)).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn cli_run_fails_on_unwritable_output() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let output = krpo()
        .args(["run", "--quiet", "--out"])
        .arg(blocker.join("runs"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));
}

#[test]
fn cli_rejects_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "group_size = lots\n");
    let output = krpo().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("group_size"));
}

#[test]
fn cli_compare_single_seed_reports_na() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "steps = 20\nprompt_count = 8\neval_count = 8\n");
    let runs = tmp.path().join("runs");
    for est in ["group-mean", "kalman"] {
        let ok = krpo()
            .args(["run", "--quiet", "--estimator", est, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&runs)
            .status()
            .unwrap()
            .success();
        assert!(ok);
    }
    let out = tmp.path().join("cmp");
    let output = krpo()
        .args(["compare", "--pairing", "seed", "--a"])
        .arg(runs.join("group_mean_42"))
        .arg("--b")
        .arg(runs.join("kalman_42"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(String::from_utf8_lossy(&output.stdout).contains("n/a"));
    for f in ["comparison.csv", "comparison.json", "comparison.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn cli_selftest_passes() {
    let output = krpo().arg("selftest").output().unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stdout)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}
