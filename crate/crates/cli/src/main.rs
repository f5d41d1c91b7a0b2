//! `gapcast`: ingest sensor logs, train and evaluate gap-aware forecasters.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error,
//! 3 training divergence or failed check.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gapcast::eval::{evaluate_predictions, export_traces, predict, sweep_table, EvalReport, Traces};
use gapcast::ingest::{apply_cutoff, load_series, write_events, write_log, CorpusStats, LoadedData, SyntheticLog, SENSOR_ID_RANGE};
use gapcast::model::gradcheck::{run_suite, GRADCHECK_TOLERANCE};
use gapcast::model::{load_model, save_model, Variant};
use gapcast::pipeline::{ablate, normalization_report, run, test_windows, Ablation};
use gapcast::{Error, Result};

use config::{RunArgs, RunConfig};

#[derive(Parser)]
#[command(name = "gapcast", version)]
#[command(about = "Forecast next values and next observation times of sparse sensor series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and compress a lab log, select the subset, write corpus stats
    /// and an event cache
    Ingest {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train end to end: checkpoint, loss history, run report, traces
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split at each cut-off
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut-off sweep table for a checkpoint [default cutoffs: 25,30,35,40]
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient check of every variant
    Gradcheck {
        /// Random configurations per variant
        #[arg(long, default_value_t = 100)]
        configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        max_vars: usize,
        #[arg(long, default_value_t = 8)]
        max_hidden: usize,
        #[arg(long, default_value_t = 5)]
        max_ar: usize,
        /// Negate the analytic gradient (checks that the check can fail)
        #[arg(long, hide = true)]
        wrong_sign: bool,
        /// Also write the summary to OUT/gradcheck.txt
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train baseline and ablated arms with shared seeds and compare
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// no-imputation or unmasked-loss
        #[arg(long)]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic lab-format log to OUT/lab.txt
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Share of readings replaced by broken-sensor values above 100
        #[arg(long, default_value_t = 0.01)]
        anomaly_rate: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 1,
        Error::Diverged { .. } => 3,
        Error::InvalidInput(_) | Error::InsufficientData(_) | Error::Format { .. } | Error::Io { .. } => 2,
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn out_dir(dir: &Path) -> Result<&Path> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn load(cfg: &RunConfig) -> Result<LoadedData> {
    load_series(cfg.data_path()?, &cfg.sensors, cfg.variable)
}

fn ingest_report(cfg: &RunConfig, data: &LoadedData) -> String {
    let mut s = cfg.to_report();
    if let Some(d) = &data.diagnostics {
        writeln!(s, "lines={}", d.lines).unwrap();
        writeln!(s, "records={}", d.records).unwrap();
        writeln!(s, "skipped_empty={}", d.empty).unwrap();
        writeln!(s, "skipped_malformed={}", d.malformed).unwrap();
        writeln!(s, "skipped_missing_sensor={}", d.missing_sensor).unwrap();
        writeln!(s, "skipped_sensor_out_of_range={}", d.sensor_out_of_range).unwrap();
    }
    if let Some(n) = data.compressed_records {
        writeln!(s, "records_after_second_collapse={n}").unwrap();
        writeln!(s, "second_collapse_rule=truncate to whole seconds; latest report per (second, sensor) wins").unwrap();
    }
    if let Some(n) = data.motes_seen {
        writeln!(s, "motes_seen={n}").unwrap();
        writeln!(s, "mote_id_range={}-{}", SENSOR_ID_RANGE.start(), SENSOR_ID_RANGE.end()).unwrap();
    }
    s.push_str(&CorpusStats::of(&data.series).to_report());
    s
}

fn traces_at(reports: &[EvalReport], predictions: &gapcast::eval::Predictions<f64>, windows: &gapcast::WindowSet) -> Traces {
    let retained = apply_cutoff(windows, reports[0].cutoff);
    Traces::collect(predictions, windows, &retained)
}

fn cmd_ingest(args: &RunArgs, out: &Path) -> Result<()> {
    let cfg = args.resolve(&[30.0])?;
    let data = load(&cfg)?;
    let out = out_dir(out)?;
    write_events(&data.series.events(), data.series.num_vars(), &out.join("events.tsv"))?;
    let report = ingest_report(&cfg, &data);
    write(out, "stats.txt", &report)?;
    print!("{report}");
    Ok(())
}

fn cmd_train(args: &RunArgs, out: &Path) -> Result<()> {
    let cfg = args.resolve(&[30.0])?;
    let data = load(&cfg)?;
    let outcome = run(&data.series, &cfg.pipeline)?;
    let out = out_dir(out)?;
    save_model(&outcome.model, &out.join("model.ckpt"))?;
    let mut history = String::from("epoch,loss\n");
    for (i, l) in outcome.history.iter().enumerate() {
        writeln!(history, "{},{l}", i + 1).unwrap();
    }
    write(out, "history.csv", &history)?;
    let report = cfg.to_report() + &outcome.results_report();
    write(out, "run_report.txt", &report)?;
    write(out, "sweep.csv", &sweep_table(&outcome.reports))?;
    let traces = traces_at(&outcome.reports, &outcome.predictions, &outcome.prepared.test);
    export_traces(&traces, &out.join("traces.csv"))?;
    for r in &outcome.reports {
        print!("{}", r.to_report(""));
    }
    Ok(())
}

/// Shared by `eval` and `sweep`: reports at every cutoff for a checkpoint.
fn evaluate_checkpoint(cfg: &mut RunConfig, checkpoint: &Path) -> Result<(Vec<EvalReport>, Traces, String)> {
    let model = load_model::<f64>(checkpoint)?;
    let data = load(cfg)?;
    if data.series.num_vars() != model.num_vars {
        return Err(Error::InvalidConfig(format!(
            "checkpoint expects {} variables, data has {}",
            model.num_vars,
            data.series.num_vars()
        )));
    }
    cfg.pipeline.variant = model.variant;
    cfg.pipeline.train.hidden = model.hidden;
    let windows = test_windows(&data.series, &cfg.pipeline, &model.normalization)?;
    let predictions = predict(&model, &windows)?;
    let reports = cfg
        .pipeline
        .cutoffs
        .iter()
        .map(|&c| evaluate_predictions(&predictions, &windows, c))
        .collect::<Result<Vec<_>>>()?;
    let traces = traces_at(&reports, &predictions, &windows);
    let mut report = cfg.to_report();
    writeln!(report, "test_windows={}", windows.len()).unwrap();
    report.push_str(&normalization_report(&model.normalization));
    for (i, r) in reports.iter().enumerate() {
        report.push_str(&r.to_report(&format!("eval{i}.")));
    }
    Ok((reports, traces, report))
}

fn cmd_eval(args: &RunArgs, checkpoint: &Path, out: &Path) -> Result<()> {
    let mut cfg = args.resolve(&[30.0])?;
    let (reports, traces, report) = evaluate_checkpoint(&mut cfg, checkpoint)?;
    let out = out_dir(out)?;
    write(out, "eval_report.txt", &report)?;
    write(out, "sweep.csv", &sweep_table(&reports))?;
    export_traces(&traces, &out.join("traces.csv"))?;
    print!("{}", sweep_table(&reports));
    Ok(())
}

fn cmd_sweep(args: &RunArgs, checkpoint: &Path, out: &Path) -> Result<()> {
    let mut cfg = args.resolve(&[25.0, 30.0, 35.0, 40.0])?;
    let (reports, _, report) = evaluate_checkpoint(&mut cfg, checkpoint)?;
    let out = out_dir(out)?;
    write(out, "sweep_report.txt", &report)?;
    write(out, "sweep.csv", &sweep_table(&reports))?;
    print!("{}", sweep_table(&reports));
    Ok(())
}

fn cmd_gradcheck(configs: usize, seed: u64, dims: (usize, usize, usize), wrong_sign: bool, out: Option<&Path>) -> Result<bool> {
    if configs == 0 || dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::InvalidConfig("configs and dimension bounds must be positive".into()));
    }
    let mut summary = String::new();
    let mut all = true;
    for variant in Variant::ALL {
        let r = run_suite(variant, configs, dims, seed, wrong_sign);
        all &= r.passed();
        writeln!(
            summary,
            "{variant}: configs={} failures={} worst_relative_error={:e} tolerance={:e} {}",
            r.configs,
            r.failures,
            r.worst,
            GRADCHECK_TOLERANCE,
            if r.passed() { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    writeln!(summary, "overall={}", if all { "PASS" } else { "FAIL" }).unwrap();
    print!("{summary}");
    if let Some(dir) = out {
        write(out_dir(dir)?, "gradcheck.txt", &summary)?;
    }
    Ok(all)
}

fn cmd_ablate(args: &RunArgs, mode: &str, out: &Path) -> Result<()> {
    let ablation: Ablation = mode.parse()?;
    let cfg = args.resolve(&[30.0])?;
    let data = load(&cfg)?;
    let report = ablate(&data.series, &cfg.pipeline, ablation)?;
    let text = cfg.to_report() + &report.to_report();
    write(out_dir(out)?, &format!("ablation_{ablation}.txt"), &text)?;
    print!("{}", report.to_report());
    Ok(())
}

fn cmd_synth(out: &Path, steps: usize, seed: u64, anomaly_rate: f64) -> Result<()> {
    if steps == 0 || !(0.0..=1.0).contains(&anomaly_rate) {
        return Err(Error::InvalidConfig("steps must be positive and anomaly_rate in [0, 1]".into()));
    }
    let mut log = SyntheticLog {
        anomaly_rate,
        ..SyntheticLog::default()
    };
    log.stream.steps = steps;
    log.stream.seed = seed;
    let path = out_dir(out)?.join("lab.txt");
    write_log(&log.records(), &path)?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Ingest { run, out } => cmd_ingest(run, out),
        Command::Train { run, out } => cmd_train(run, out),
        Command::Eval { run, checkpoint, out } => cmd_eval(run, checkpoint, out),
        Command::Sweep { run, checkpoint, out } => cmd_sweep(run, checkpoint, out),
        Command::Gradcheck {
            configs,
            seed,
            max_vars,
            max_hidden,
            max_ar,
            wrong_sign,
            out,
        } => match cmd_gradcheck(*configs, *seed, (*max_vars, *max_hidden, *max_ar), *wrong_sign, out.as_deref()) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
        Command::Ablate { run, mode, out } => cmd_ablate(run, mode, out),
        Command::Synth {
            out,
            steps,
            seed,
            anomaly_rate,
        } => cmd_synth(out, *steps, *seed, *anomaly_rate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gapcast: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
