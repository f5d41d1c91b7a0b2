use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gapcast::model::{load_model, save_model};
use gapcast::ForecastModel;

fn gapcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gapcast")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic lab log inside `dir`.
fn lab(dir: &Path) -> PathBuf {
    let out = gapcast(&["synth", "--out", s(dir), "--steps", "400", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("lab.txt")
}

const SMALL: &[&str] = &["--ar", "4", "--hidden", "6", "--batch-size", "16", "--epochs", "2"];

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", s(data), "--out", s(out)];
    for pair in SMALL.chunks(2) {
        if !extra.contains(&pair[0]) {
            args.extend_from_slice(pair);
        }
    }
    args.extend_from_slice(extra);
    gapcast(&args)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn ingest_writes_stats_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let data = lab(dir.path());
    let out = dir.path().join("ingest");
    let run = gapcast(&["ingest", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let stats = std::fs::read_to_string(out.join("stats.txt")).unwrap();
    assert!(stats.contains("timesteps="), "{stats}");
    assert!(out.join("events.tsv").exists());

    // the event cache loads back to the same stream
    let again = dir.path().join("again");
    let run = gapcast(&["ingest", "--data", s(&out.join("events.tsv")), "--out", s(&again)]);
    assert_eq!(code(&run), 0);
    assert_eq!(read(&out.join("events.tsv")), read(&again.join("events.tsv")));
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = gapcast(&["ingest", "--data", "/nonexistent/lab.txt", "--out", s(dir.path())]);
    assert_eq!(code(&run), 2);
    let garbled = dir.path().join("garbled.txt");
    std::fs::write(&garbled, "not a sensor log\n").unwrap();
    let run = gapcast(&["ingest", "--data", s(&garbled), "--out", s(&dir.path().join("g"))]);
    assert_eq!(code(&run), 2);
    // asking for a mote the log never mentions is a settings mistake
    let run = gapcast(&["ingest", "--data", s(&lab(dir.path())), "--sensors", "1,99", "--out", s(dir.path())]);
    assert_eq!(code(&run), 1);
}

#[test]
fn bad_settings_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = lab(dir.path());
    let out = dir.path().join("o");
    assert_eq!(code(&train(&data, &out, &["--ar", "0"])), 1);
    assert_eq!(code(&train(&data, &out, &["--variant", "lstm"])), 1);
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(code(&train(&data, &out, &["--config", s(&cfg)])), 1);
    assert_eq!(code(&gapcast(&["train", "--out", s(&out)])), 1);
    assert_eq!(code(&gapcast(&["frobnicate"])), 1);
    assert!(!out.exists(), "nothing written on a rejected configuration");
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = lab(dir.path());
    let out = dir.path().join("t");
    let run = train(&data, &out, &["--epochs", "0", "--seed", "5", "--variant", "bilayer"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let saved: ForecastModel = load_model(&out.join("model.ckpt")).unwrap();
    let fresh = ForecastModel::new(saved.variant, 4, 6, saved.normalization.clone(), 5).unwrap();
    let path = dir.path().join("fresh.ckpt");
    save_model(&fresh, &path).unwrap();
    assert_eq!(read(&path), read(&out.join("model.ckpt")));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let data = lab(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let run = train(&data, out, &["--seed", "9", "--cutoffs", "30,100"]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    }
    for f in ["model.ckpt", "history.csv", "run_report.txt", "sweep.csv", "traces.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let history = std::fs::read_to_string(a.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "header plus one row per epoch");
}

#[test]
fn eval_and_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = lab(dir.path());
    let t = dir.path().join("t");
    assert_eq!(code(&train(&data, &t, &[])), 0);
    let ckpt = t.join("model.ckpt");

    let e = dir.path().join("e");
    let run = gapcast(&["eval", "--data", s(&data), "--checkpoint", s(&ckpt), "--ar", "4", "--cutoffs", "30", "--out", s(&e)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let sweep = std::fs::read_to_string(e.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 2);
    assert!(sweep.starts_with("cutoff,retained_windows,value_mae,gap_mae"));
    // evaluating the checkpoint reproduces the numbers reported at training time
    assert_eq!(
        std::fs::read_to_string(t.join("sweep.csv")).unwrap(),
        sweep,
        "train and eval agree at the default cut-off"
    );

    let w = dir.path().join("w");
    let run = gapcast(&["sweep", "--data", s(&data), "--checkpoint", s(&ckpt), "--ar", "4", "--out", s(&w)]);
    assert_eq!(code(&run), 0);
    let rows: Vec<_> = std::fs::read_to_string(w.join("sweep.csv")).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 4);
    let retained: Vec<usize> = rows.iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(retained.windows(2).all(|p| p[0] <= p[1]), "{retained:?}");

    let run = gapcast(&["eval", "--data", s(&data), "--checkpoint", "/nonexistent.ckpt", "--out", s(&e)]);
    assert_eq!(code(&run), 2);
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = lab(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("# small run\ndata = {}\nepochs = 3\nhidden = 5\nar = 4\nbatch-size = 16\n", data.display())).unwrap();
    let out = dir.path().join("c");
    let run = gapcast(&["train", "--config", s(&cfg), "--epochs", "1", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let report = std::fs::read_to_string(out.join("run_report.txt")).unwrap();
    assert!(report.contains("epochs=1\n"), "{report}");
    assert!(report.contains("hidden=5\n"), "{report}");
    let mut written: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    written.sort();
    assert_eq!(written, ["c", "lab.txt", "run.cfg"]);
}

#[test]
fn gradcheck_passes_and_catches_a_sign_flip() {
    let dir = tempfile::tempdir().unwrap();
    let run = gapcast(&["gradcheck", "--configs", "5", "--out", s(dir.path())]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stdout));
    assert!(dir.path().join("gradcheck.txt").exists());
    let run = gapcast(&["gradcheck", "--configs", "2", "--wrong-sign"]);
    assert_eq!(code(&run), 3);
}

#[test]
fn ablate_writes_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let data = lab(dir.path());
    let mut args = vec!["ablate", "--data", s(&data), "--mode", "unmasked-loss", "--out", s(dir.path())];
    args.extend_from_slice(SMALL);
    let run = gapcast(&args);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(dir.path().join("ablation_unmasked-loss.txt")).unwrap();
    assert!(text.contains("baseline") && text.contains("ablated"), "{text}");
    args[4] = "everything";
    assert_eq!(code(&gapcast(&args)), 1);
}
