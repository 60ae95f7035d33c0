//! Run, sweep and compare experiments, writing timestamp-free artifacts.
//!
//! A run writes `{out}/{estimator}_{seed}/` containing `metrics.csv`,
//! `report.json` and `reward_curve.svg`. While a run is in progress the
//! directory holds a `.incomplete` marker, removed once every file is written.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{invalid, io_err, Error, Result};
use crate::stats::{compare_runs, running_average, Comparison, Pairing};
use crate::svg::line_chart;
use crate::trainer::{
    metrics_to_csv, run_with, EstimatorKind, RunReport, StepMetrics, TrainConfig,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CURVE_FILE: &str = "reward_curve.svg";
pub const INCOMPLETE_MARKER: &str = ".incomplete";
pub const SWEEP_INDEX_FILE: &str = "sweep_index.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub metrics_csv: PathBuf,
    pub report_json: PathBuf,
    pub curve_svg: PathBuf,
    pub report: RunReport,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn run_dir_name(config: &TrainConfig) -> String {
    format!("{}_{}", config.estimator, config.seed)
}

fn curve_title(config: &TrainConfig) -> String {
    format!(
        "{} seed {} ({} tier, n={}, B={})",
        config.estimator, config.seed, config.tier, config.group_size, config.batch_size
    )
}

/// Smoothed mean-reward curve of a single run.
pub fn reward_curve_svg(report: &RunReport) -> String {
    line_chart(
        &curve_title(&report.config),
        "step",
        &format!(
            "mean reward (running avg, window {})",
            report.smoothing_window
        ),
        &[(
            report.config.estimator.to_string(),
            report.smoothed_rewards(),
        )],
    )
}

/// Trains one configuration and writes its artifacts under `root`.
pub fn run_into(
    config: &TrainConfig,
    root: &Path,
    on_step: impl FnMut(&StepMetrics),
) -> Result<RunArtifacts> {
    config.validate()?;
    let dir = root.join(run_dir_name(config));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    write(&marker, "")?;

    let report = run_with(config, on_step)?;
    let artifacts = RunArtifacts {
        metrics_csv: dir.join(METRICS_FILE),
        report_json: dir.join(REPORT_FILE),
        curve_svg: dir.join(CURVE_FILE),
        dir,
        report,
    };
    write(
        &artifacts.metrics_csv,
        metrics_to_csv(&artifacts.report.metrics, config.estimator, config.seed),
    )?;
    let json = serde_json::to_string_pretty(&artifacts.report).map_err(|source| Error::Json {
        path: artifacts.report_json.clone(),
        source,
    })?;
    write(&artifacts.report_json, json + "\n")?;
    write(&artifacts.curve_svg, reward_curve_svg(&artifacts.report))?;
    fs::remove_file(&marker).map_err(io_err(&marker))?;
    Ok(artifacts)
}

pub fn cmd_run(
    config: &ExperimentConfig,
    on_step: impl FnMut(&StepMetrics),
) -> Result<RunArtifacts> {
    run_into(&config.train, &config.output_dir, on_step)
}

/// One cell of a sweep's Cartesian product.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub config: TrainConfig,
}

impl SweepPoint {
    pub fn dir_name(&self) -> String {
        format!("sweep_{:03}", self.index)
    }
}

/// Expands the sweep axes in the order q, r, kl_weight, group_size, seed,
/// estimator, fixed_b; the first axis varies slowest. Axes left empty keep
/// the base value.
pub fn sweep_plan(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let s = &config.sweep;
    if s.is_empty() {
        return invalid("sweep needs at least one nonempty sweep.* axis");
    }
    let base = &config.train;
    fn axis<T: Clone>(values: &[T], default: T) -> Vec<T> {
        if values.is_empty() {
            vec![default]
        } else {
            values.to_vec()
        }
    }
    let mut points = Vec::new();
    for q in axis(&s.q, base.filter_q) {
        for r in axis(&s.r, base.filter_r) {
            for kl_weight in axis(&s.kl_weight, base.kl_weight) {
                for group_size in axis(&s.group_size, base.group_size) {
                    for seed in axis(&s.seed, base.seed) {
                        for estimator in axis(&s.estimator, base.estimator) {
                            for fixed_b in axis(&s.fixed_b, base.fixed_b) {
                                let config = TrainConfig {
                                    filter_q: q,
                                    filter_r: r,
                                    kl_weight,
                                    group_size,
                                    seed,
                                    estimator,
                                    fixed_b,
                                    ..base.clone()
                                };
                                config.validate()?;
                                points.push(SweepPoint {
                                    index: points.len(),
                                    config,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(points)
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub index_csv: PathBuf,
    pub runs: Vec<(SweepPoint, Result<RunArtifacts>)>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|(_, r)| r.is_err()).count()
    }
}

pub const SWEEP_INDEX_HEADER: &str =
    "index,filter_q,filter_r,kl_weight,group_size,seed,estimator,fixed_b,status,final_smoothed_reward,accuracy,path";

/// Runs every sweep point (in parallel) and then writes the index CSV. A
/// failing point is recorded in the index instead of aborting the others.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    on_done: impl Fn(&SweepPoint, &Result<RunArtifacts>) + Sync,
) -> Result<SweepOutcome> {
    let plan = sweep_plan(config)?;
    let root = &config.output_dir;
    fs::create_dir_all(root).map_err(io_err(root))?;
    let runs: Vec<(SweepPoint, Result<RunArtifacts>)> = plan
        .into_par_iter()
        .map(|point| {
            let result = run_into(&point.config, &root.join(point.dir_name()), |_| {});
            on_done(&point, &result);
            (point, result)
        })
        .collect();

    let mut index = String::from(SWEEP_INDEX_HEADER);
    index.push('\n');
    for (point, result) in &runs {
        let c = &point.config;
        let (status, reward, acc, path) = match result {
            Ok(a) => (
                "ok".to_string(),
                a.report.final_smoothed_reward.to_string(),
                a.report.evaluation.accuracy.to_string(),
                Path::new(&point.dir_name())
                    .join(run_dir_name(c))
                    .display()
                    .to_string(),
            ),
            Err(e) => (
                format!("failed: {}", e.to_string().replace([',', '\n'], ";")),
                String::new(),
                String::new(),
                String::new(),
            ),
        };
        index.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            point.index,
            c.filter_q,
            c.filter_r,
            c.kl_weight,
            c.group_size,
            c.seed,
            c.estimator,
            c.fixed_b,
            status,
            reward,
            acc,
            path
        ));
    }
    let index_csv = root.join(SWEEP_INDEX_FILE);
    write(&index_csv, index)?;
    Ok(SweepOutcome { index_csv, runs })
}

/// Loads a report from a `report.json` path or a run directory.
pub fn load_report(path: &Path) -> Result<RunReport> {
    let file = if path.is_dir() {
        path.join(REPORT_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(io_err(&file))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: file, source })
}

#[derive(Debug)]
pub struct CompareArtifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: PathBuf,
    pub comparison: Comparison,
}

#[derive(Serialize)]
struct ComparisonDocument<'a> {
    comparison: &'a Comparison,
    mean_accuracy_diff: f64,
}

/// Seed-averaged smoothed reward curve for a set of runs (truncated to the
/// shortest run).
pub fn mean_curve(reports: &[RunReport]) -> Vec<f64> {
    let len = reports.iter().map(|r| r.metrics.len()).min().unwrap_or(0);
    let window = reports.first().map_or(1, |r| r.smoothing_window);
    let mean: Vec<f64> = (0..len)
        .map(|i| {
            reports
                .iter()
                .map(|r| r.metrics[i].mean_reward)
                .sum::<f64>()
                / reports.len() as f64
        })
        .collect();
    running_average(&mean, window).expect("window is >= 1")
}

fn method_label(reports: &[RunReport]) -> String {
    let est: Vec<EstimatorKind> = reports.iter().map(|r| r.config.estimator).collect();
    if est.windows(2).all(|w| w[0] == w[1]) {
        est[0].to_string()
    } else {
        "mixed".into()
    }
}

/// Compares method `a` against method `b` (the test's alternative is that
/// `b` scores higher) and writes `comparison.csv`, `comparison.json` and
/// `comparison.svg` into `out`.
pub fn cmd_compare(
    paths_a: &[PathBuf],
    paths_b: &[PathBuf],
    pairing: Pairing,
    out: &Path,
) -> Result<CompareArtifacts> {
    if paths_a.is_empty() || paths_b.is_empty() {
        return invalid("compare needs at least one run on each side");
    }
    let a = paths_a
        .iter()
        .map(|p| load_report(p))
        .collect::<Result<Vec<_>>>()?;
    let b = paths_b
        .iter()
        .map(|p| load_report(p))
        .collect::<Result<Vec<_>>>()?;
    let mut comparison = compare_runs(
        &a.iter().map(RunReport::summary).collect::<Vec<_>>(),
        &b.iter().map(RunReport::summary).collect::<Vec<_>>(),
        pairing,
    )?;
    comparison.label_a = method_label(&a);
    comparison.label_b = method_label(&b);

    fs::create_dir_all(out).map_err(io_err(out))?;
    let csv = out.join("comparison.csv");
    let json = out.join("comparison.json");
    let svg = out.join("comparison.svg");
    write(&csv, comparison.to_csv())?;
    let doc = ComparisonDocument {
        comparison: &comparison,
        mean_accuracy_diff: comparison.mean_accuracy_diff(),
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|source| Error::Json {
        path: json.clone(),
        source,
    })?;
    write(&json, text + "\n")?;
    write(
        &svg,
        line_chart(
            &format!(
                "{} vs {} ({} seeds)",
                comparison.label_a,
                comparison.label_b,
                comparison.rows.len()
            ),
            "step",
            "mean reward (seed average, running avg)",
            &[
                (format!("{} (a)", comparison.label_a), mean_curve(&a)),
                (format!("{} (b)", comparison.label_b), mean_curve(&b)),
            ],
        ),
    )?;
    Ok(CompareArtifacts {
        csv,
        json,
        svg,
        comparison,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Tier;

    fn tiny(out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            train: TrainConfig {
                steps: 3,
                batch_size: 2,
                group_size: 4,
                tier: Tier::Easy,
                prompt_count: 4,
                eval_count: 3,
                policy_buckets: 128,
                ..TrainConfig::default()
            },
            output_dir: out.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn run_writes_three_files_and_clears_marker() {
        let tmp = tempfile::tempdir().unwrap();
        let a = cmd_run(&tiny(tmp.path()), |_| {}).unwrap();
        assert_eq!(a.dir, tmp.path().join("kalman_42"));
        for p in [&a.metrics_csv, &a.report_json, &a.curve_svg] {
            assert!(p.is_file(), "{}", p.display());
        }
        assert!(!a.dir.join(INCOMPLETE_MARKER).exists());
        assert_eq!(load_report(&a.dir).unwrap(), a.report);
    }

    #[test]
    fn sweep_plan_order_and_size() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny(tmp.path());
        assert!(sweep_plan(&cfg).is_err());
        cfg.sweep.kl_weight = vec![0.0, 0.001, 0.01, 0.05];
        assert_eq!(sweep_plan(&cfg).unwrap().len(), 4);
        cfg.sweep.seed = vec![42, 777, 1234];
        let plan = sweep_plan(&cfg).unwrap();
        assert_eq!(plan.len(), 12);
        assert_eq!((plan[0].config.kl_weight, plan[0].config.seed), (0.0, 42));
        assert_eq!((plan[1].config.kl_weight, plan[1].config.seed), (0.0, 777));
        assert_eq!((plan[3].config.kl_weight, plan[3].config.seed), (0.001, 42));
        assert!(plan.iter().enumerate().all(|(i, p)| p.index == i));
    }

    #[test]
    fn sweep_writes_index() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny(tmp.path());
        cfg.sweep.group_size = vec![2, 3];
        let outcome = cmd_sweep(&cfg, |_, _| {}).unwrap();
        assert_eq!(outcome.failures(), 0);
        let index = fs::read_to_string(&outcome.index_csv).unwrap();
        let lines: Vec<&str> = index.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], SWEEP_INDEX_HEADER);
        assert!(lines[1].starts_with("0,") && lines[1].ends_with("sweep_000/kalman_42"));
        assert!(tmp.path().join("sweep_001/kalman_42/metrics.csv").is_file());
    }

    #[test]
    fn compare_identical_sets() {
        let tmp = tempfile::tempdir().unwrap();
        let a = cmd_run(&tiny(tmp.path()), |_| {}).unwrap();
        let out = tmp.path().join("cmp");
        let c = cmd_compare(
            std::slice::from_ref(&a.dir),
            std::slice::from_ref(&a.dir),
            Pairing::Seed,
            &out,
        )
        .unwrap();
        assert_eq!(c.comparison.mean_accuracy_diff(), 0.0);
        assert!(c.comparison.t_test.is_none());
        assert!(c.csv.is_file() && c.json.is_file() && c.svg.is_file());
    }

    #[test]
    fn missing_report_names_path() {
        let err = load_report(Path::new("/nonexistent/run")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/run"));
    }
}
