//! Acceptance suite: one line per criterion.
//!
//! Criteria 5–7 need the public lab log; point `GAPCAST_LAB_DATA` at it.
//! Without it they print `NOT RUN` and do not count as passes. Set
//! `GAPCAST_ACCEPTANCE_OUT` to a directory to keep the headline run's
//! report, sweep table and traces.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gapcast::data::{make_windows, Normalization, SineStream, SporadicSeries};
use gapcast::eval::{evaluate, export_traces, mean_off_diagonal, sweep_table, Traces};
use gapcast::ingest::{apply_cutoff, load_series, write_log, CorpusStats, SyntheticLog, Variable};
use gapcast::model::gradcheck::{run_suite, GRADCHECK_TOLERANCE};
use gapcast::model::{ForecastModel, Variant};
use gapcast::pipeline::{run, Ablation, PipelineConfig, RunOutcome};
use gapcast::train::{train, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Status {
    Pass,
    Fail,
    NotRun,
}

struct Line {
    id: &'static str,
    name: &'static str,
    status: Status,
    detail: String,
}

fn line(id: &'static str, name: &'static str, ok: bool, detail: String) -> Line {
    Line {
        id,
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn gradient_correctness() -> Line {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for variant in Variant::ALL {
        let r = run_suite(variant, 100, (2, 8, 5), 2024, false);
        ok &= r.passed();
        parts.push(format!("{variant} {}/{} worst {:.1e}", r.configs - r.failures, r.configs, r.worst));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    line(
        "1",
        "gradient correctness",
        ok,
        format!("{}; tol {GRADCHECK_TOLERANCE:e}; {} (limit 60s)", parts.join(", "), secs(elapsed)),
    )
}

fn data_oracles() -> Line {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = Vec::new();
    for i in 0..1000u64 {
        let (events, d) = common::random_stream(rng.gen(), 50, 4);
        let ar = rng.gen_range(1..=5);
        if let Err(why) = common::check_stream(&events, d, ar) {
            failures.push(format!("stream {i}: {why}"));
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(30);
    let first = failures.first().cloned().unwrap_or_default();
    line(
        "2",
        "data-model oracle equivalence",
        ok,
        format!("1000 streams, {} mismatches {first}; {} (limit 30s)", failures.len(), secs(elapsed)),
    )
}

fn synthetic_overfit() -> (Line, Line) {
    let start = Instant::now();
    let stream = SineStream::default();
    let series = SporadicSeries::from_events(&stream.events::<f64>(), stream.sensors).unwrap();
    let fallback: Vec<f64> = series.observed_means().into_iter().map(|m| m.unwrap_or(0.0)).collect();
    let raw = make_windows(&series.forward_impute(&fallback).unwrap(), 10).unwrap();
    let stats = Normalization::fit(&raw).unwrap();
    let windows = raw.normalized(&stats).unwrap();
    let cfg = TrainConfig {
        ar: 10,
        hidden: 32,
        epochs: 200,
        batch_size: 64,
        learning_rate: 1e-2,
        cosine_decay: true,
        ..TrainConfig::default()
    };
    let model = ForecastModel::new(Variant::Simple, 2, cfg.hidden, stats, cfg.seed).unwrap();
    let (trained, history) = train(&model, &windows, &cfg).unwrap();
    let mae = evaluate(&trained, &windows, f64::INFINITY).unwrap().value_mae_normalized.unwrap();
    let elapsed = start.elapsed();
    let overfit = line(
        "3",
        "synthetic overfit",
        mae < 0.05 && elapsed < Duration::from_secs(120),
        format!("masked value MAE {mae:.4} normalized (< 0.05) after 200 epochs; {} (limit 120s)", secs(elapsed)),
    );
    let n = history.len();
    let rises: Vec<usize> = (n / 2 + 1..n).filter(|&i| history[i] > history[i - 1] * 1.05).collect();
    let band = line(
        "3b",
        "overfit loss non-increasing in last half (5% band)",
        rises.is_empty(),
        format!("{} epochs above 1.05x the previous one; final loss {:.3e}", rises.len(), history[n - 1]),
    );
    (overfit, band)
}

fn ablation_direction() -> Line {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let stream = SineStream {
            steps: 3000,
            missing: 0.6,
            offset: 20.0,
            amplitude: 2.0,
            seed,
            ..SineStream::default()
        };
        let series = SporadicSeries::from_events(&stream.events::<f64>(), 2).unwrap();
        let cfg = PipelineConfig {
            train: TrainConfig {
                ar: 10,
                hidden: 16,
                epochs: 40,
                batch_size: 64,
                learning_rate: 1e-2,
                seed,
                cosine_decay: true,
                ..TrainConfig::default()
            },
            cutoffs: vec![f64::INFINITY],
            ..PipelineConfig::default()
        };
        let mae = |c: &PipelineConfig| run(&series, c).unwrap().reports[0].value_mae.unwrap();
        let base = mae(&cfg);
        let no_imp = mae(&cfg.with_ablation(Ablation::NoImputation));
        let unmasked = mae(&cfg.with_ablation(Ablation::UnmaskedLoss));
        ok &= no_imp >= base && unmasked >= base;
        rows.push(format!("seed {seed}: {base:.4}/{no_imp:.4}/{unmasked:.4}"));
    }
    line(
        "4",
        "ablation direction",
        ok,
        format!("baseline/no-imputation/unmasked-loss MAE {}; {}", rows.join(", "), secs(start.elapsed())),
    )
}

fn not_run(id: &'static str, name: &'static str) -> Line {
    Line {
        id,
        name,
        status: Status::NotRun,
        detail: "lab data file unavailable (set GAPCAST_LAB_DATA)".into(),
    }
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn lab_criteria(path: &Path) -> Vec<Line> {
    let data = match load_series(path, &[1, 2, 3, 4], Variable::Temperature) {
        Ok(d) => d,
        Err(e) => {
            let fail = |id, name| line(id, name, false, format!("cannot load {}: {e}", path.display()));
            return vec![
                fail("5", "dataset statistics"),
                fail("6", "headline MAE"),
                fail("7", "correlation property"),
            ];
        }
    };
    let stats = CorpusStats::of(&data.series);
    let stats_line = line(
        "5",
        "dataset statistics",
        within(stats.timesteps as f64, 167_875.0, 0.02 * 167_875.0)
            && within(stats.value_mean, 38.77, 0.5)
            && within(stats.gap_mean, 61.64, 3.0),
        format!(
            "timesteps {} (167875 ±2%), mean {:.3} °C (38.77 ±0.5), mean gap {:.2} s (61.64 ±3); motes in file {:?}; same-second rule: latest report wins",
            stats.timesteps, stats.value_mean, stats.gap_mean, data.motes_seen
        ),
    );

    let start = Instant::now();
    let cfg = PipelineConfig {
        cutoffs: vec![30.0, 25.0, 35.0, 40.0, 100.0, f64::INFINITY],
        ..PipelineConfig::default()
    };
    let outcome: RunOutcome = match run(&data.series, &cfg) {
        Ok(o) => o,
        Err(e) => {
            return vec![
                stats_line,
                line("6", "headline MAE", false, format!("training failed: {e}")),
                line("7", "correlation property", false, "no trained model".into()),
            ]
        }
    };
    if let Some(dir) = std::env::var_os("GAPCAST_ACCEPTANCE_OUT").map(PathBuf::from) {
        let _ = std::fs::create_dir_all(&dir);
        let _ = std::fs::write(dir.join("run_report.txt"), outcome.to_report(&cfg));
        let _ = std::fs::write(dir.join("sweep.csv"), sweep_table(&outcome.reports));
        let traces = Traces::collect(&outcome.predictions, &outcome.prepared.test, &apply_cutoff(&outcome.prepared.test, 30.0));
        let _ = export_traces(&traces, &dir.join("traces.csv"));
    }
    let r = &outcome.reports[0];
    let (v, g) = (r.value_mae.unwrap_or(f64::NAN), r.gap_mae.unwrap_or(f64::NAN));
    let headline = line(
        "6",
        "headline MAE",
        v <= 3.5 && g <= 25.0,
        format!("cutoff 30: value MAE {v:.3} °C (≤ 3.5), gap MAE {g:.2} s (≤ 25), {} windows; {}", r.retained, secs(start.elapsed())),
    );
    let (cv, cg) = (mean_off_diagonal(&r.value_correlation), mean_off_diagonal(&r.gap_correlation));
    let corr = line(
        "7",
        "correlation property",
        matches!((cv, cg), (Some(a), Some(b)) if a > b),
        format!("mean pairwise correlation: values {cv:?}, gaps {cg:?}"),
    );
    vec![stats_line, headline, corr]
}

fn determinism() -> Line {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("lab.txt");
    let mut synth = SyntheticLog::default();
    synth.stream.steps = 600;
    write_log(&synth.records(), &log).unwrap();
    let cfg = PipelineConfig {
        train: TrainConfig {
            ar: 6,
            hidden: 12,
            epochs: 4,
            batch_size: 32,
            seed: 11,
            ..TrainConfig::default()
        },
        cutoffs: vec![25.0, 30.0, 100.0],
        ..PipelineConfig::default()
    };
    let artifacts = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let data = load_series(&log, &[1, 2, 3, 4], Variable::Temperature).unwrap();
        let out = run(&data.series, &cfg).unwrap();
        let report = dir.path().join(format!("report_{tag}.txt"));
        let traces = dir.path().join(format!("traces_{tag}.csv"));
        std::fs::write(&report, out.to_report(&cfg)).unwrap();
        let t = Traces::collect(&out.predictions, &out.prepared.test, &apply_cutoff(&out.prepared.test, 30.0));
        export_traces(&t, &traces).unwrap();
        (std::fs::read(report).unwrap(), std::fs::read(traces).unwrap())
    };
    let (ra, ta) = artifacts("a");
    let (rb, tb) = artifacts("b");
    line(
        "8",
        "determinism",
        ra == rb && ta == tb,
        format!("report {} bytes, traces {} bytes; identical: {}", ra.len(), ta.len(), ra == rb && ta == tb),
    )
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` style arguments are accepted and ignored
    let mut lines = vec![gradient_correctness(), data_oracles()];
    let (overfit, band) = synthetic_overfit();
    lines.push(overfit);
    lines.push(band);
    lines.push(ablation_direction());
    match std::env::var_os("GAPCAST_LAB_DATA").map(PathBuf::from) {
        Some(path) => lines.extend(lab_criteria(&path)),
        None => lines.extend([
            not_run("5", "dataset statistics"),
            not_run("6", "headline MAE"),
            not_run("7", "correlation property"),
        ]),
    }
    lines.push(determinism());

    let mut failed = 0;
    for l in &lines {
        let tag = match l.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::NotRun => "NOT RUN",
        };
        println!("acceptance {:<3} {:<50} {tag:<8} {}", l.id, l.name, l.detail);
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: no failures");
        ExitCode::SUCCESS
    }
}
