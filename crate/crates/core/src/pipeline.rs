//! Series in, reports out: split, impute, window, normalize, train,
//! evaluate. Shared by the CLI, the ablations and the determinism checks.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::data::{make_windows, Normalization, SporadicSeries, WindowSet};
use crate::error::{Error, Result};
use crate::eval::{cutoff_sweep, predict, EvalReport, Predictions};
use crate::ingest::split_train_test;
use crate::model::{ForecastModel, Variant};
use crate::train::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Imputation {
    /// Last observed value; the training mean before the first one.
    Forward,
    /// Unobserved entries are 0 in raw units.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    NoImputation,
    UnmaskedLoss,
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::NoImputation => "no-imputation",
            Ablation::UnmaskedLoss => "unmasked-loss",
        })
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-imputation" => Ok(Ablation::NoImputation),
            "unmasked-loss" => Ok(Ablation::UnmaskedLoss),
            _ => Err(Error::InvalidConfig(format!("unknown ablation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub train: TrainConfig,
    pub test_fraction: f64,
    pub cutoffs: Vec<f64>,
    pub imputation: Imputation,
    /// Train with every loss mask set to 1.
    pub unmasked_loss: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Simple,
            train: TrainConfig::default(),
            test_fraction: 0.3,
            cutoffs: vec![30.0],
            imputation: Imputation::Forward,
            unmasked_loss: false,
        }
    }
}

impl PipelineConfig {
    pub fn with_ablation(&self, ablation: Ablation) -> Self {
        let mut out = self.clone();
        match ablation {
            Ablation::NoImputation => out.imputation = Imputation::Zero,
            Ablation::UnmaskedLoss => out.unmasked_loss = true,
        }
        out
    }
}

/// Normalized train and test windows; the statistics come from the train
/// split only.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: WindowSet<f64>,
    pub test: WindowSet<f64>,
    pub stats: Normalization<f64>,
}

/// Imputed, unnormalized train and test windows. Leading gaps in either
/// split are filled with the training split's observed means.
pub fn prepare_raw(series: &SporadicSeries<f64>, cfg: &PipelineConfig) -> Result<(WindowSet<f64>, WindowSet<f64>)> {
    cfg.train.validate()?;
    let (train_series, test_series) = split_train_test(series, cfg.test_fraction)?;
    let fallback: Vec<f64> = train_series.observed_means().into_iter().map(|m| m.unwrap_or(0.0)).collect();
    let fill = |s: &SporadicSeries<f64>| match cfg.imputation {
        Imputation::Forward => s.forward_impute(&fallback),
        Imputation::Zero => Ok(s.zero_fill()),
    };
    Ok((
        make_windows(&fill(&train_series)?, cfg.train.ar)?,
        make_windows(&fill(&test_series)?, cfg.train.ar)?,
    ))
}

pub fn prepare(series: &SporadicSeries<f64>, cfg: &PipelineConfig) -> Result<Prepared> {
    let (train_raw, test_raw) = prepare_raw(series, cfg)?;
    let stats = Normalization::fit(&train_raw)?;
    let mut train = train_raw.normalized(&stats)?;
    if cfg.unmasked_loss {
        train = train.with_full_target_masks();
    }
    Ok(Prepared {
        train,
        test: test_raw.normalized(&stats)?,
        stats,
    })
}

/// Test windows normalized with `stats` (typically a checkpoint's).
pub fn test_windows(series: &SporadicSeries<f64>, cfg: &PipelineConfig, stats: &Normalization<f64>) -> Result<WindowSet<f64>> {
    prepare_raw(series, cfg)?.1.normalized(stats)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub prepared: Prepared,
    pub model: ForecastModel<f64>,
    pub history: Vec<f64>,
    pub predictions: Predictions<f64>,
    /// One per configured cutoff.
    pub reports: Vec<EvalReport>,
}

pub fn run(series: &SporadicSeries<f64>, cfg: &PipelineConfig) -> Result<RunOutcome> {
    let prepared = prepare(series, cfg)?;
    let init = ForecastModel::new(
        cfg.variant,
        series.num_vars(),
        cfg.train.hidden,
        prepared.stats.clone(),
        cfg.train.seed,
    )?;
    let (model, history) = train(&init, &prepared.train, &cfg.train)?;
    let predictions = predict(&model, &prepared.test)?;
    let reports = cutoff_sweep(&model, &prepared.test, &cfg.cutoffs)?;
    Ok(RunOutcome {
        prepared,
        model,
        history,
        predictions,
        reports,
    })
}

impl RunOutcome {
    /// Config echo, split sizes, normalization, history and every report.
    pub fn to_report(&self, cfg: &PipelineConfig) -> String {
        let mut s = String::new();
        writeln!(s, "variant={}", cfg.variant).unwrap();
        s.push_str(&cfg.train.to_report());
        writeln!(s, "test_fraction={}", cfg.test_fraction).unwrap();
        writeln!(s, "imputation={:?}", cfg.imputation).unwrap();
        writeln!(s, "unmasked_loss={}", cfg.unmasked_loss).unwrap();
        s.push_str(&self.results_report());
        s
    }

    /// Split sizes, normalization, history and reports, without the config.
    pub fn results_report(&self) -> String {
        let mut s = String::new();
        writeln!(s, "train_windows={}", self.prepared.train.len()).unwrap();
        writeln!(s, "test_windows={}", self.prepared.test.len()).unwrap();
        s.push_str(&normalization_report(&self.prepared.stats));
        let history: Vec<String> = self.history.iter().map(|v| v.to_string()).collect();
        writeln!(s, "loss_history={}", history.join(",")).unwrap();
        for (i, r) in self.reports.iter().enumerate() {
            s.push_str(&r.to_report(&format!("eval{i}.")));
        }
        s
    }
}

pub fn normalization_report(stats: &Normalization<f64>) -> String {
    let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    format!(
        "value_mean={}\nvalue_scale={}\ngap_mean={}\ngap_scale={}\n",
        list(&stats.value_mean),
        list(&stats.value_scale),
        list(&stats.gap_mean),
        list(&stats.gap_scale)
    )
}

/// Baseline and ablated runs with identical seeds and config otherwise.
#[derive(Debug, Clone)]
pub struct AblationReport {
    pub ablation: Ablation,
    pub baseline: Vec<EvalReport>,
    pub ablated: Vec<EvalReport>,
}

pub fn ablate(series: &SporadicSeries<f64>, cfg: &PipelineConfig, ablation: Ablation) -> Result<AblationReport> {
    let baseline = run(series, cfg)?.reports;
    let ablated = run(series, &cfg.with_ablation(ablation))?.reports;
    Ok(AblationReport {
        ablation,
        baseline,
        ablated,
    })
}

impl AblationReport {
    pub fn to_report(&self) -> String {
        let mut s = format!("ablation={}\n", self.ablation);
        for (i, r) in self.baseline.iter().enumerate() {
            s.push_str(&r.to_report(&format!("baseline{i}.")));
        }
        for (i, r) in self.ablated.iter().enumerate() {
            s.push_str(&r.to_report(&format!("ablated{i}.")));
        }
        s
    }
}
