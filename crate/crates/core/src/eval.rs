//! Masked MAE reports, cut-off sweeps, prediction correlations and trace
//! files for a trained model.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::ingest::apply_cutoff;
use crate::model::{Forecast, ForecastModel};
use crate::numeric::Matrix;
use crate::scalar::Real;

/// D × D Pearson matrix; an entry is absent when either series is constant
/// or there are fewer than two steps.
pub type CorrelationMatrix = Vec<Vec<Option<f64>>>;

/// Raw-unit forecasts for every window of a set, in window order.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions<T> {
    pub forecasts: Vec<Forecast<T>>,
}

/// Forecasts every window, in parallel. The windows must be normalized with
/// the model's own (training) statistics.
pub fn predict<T: Real>(model: &ForecastModel<T>, windows: &WindowSet<T>) -> Result<Predictions<T>> {
    match &windows.normalization {
        Some(stats) if *stats == model.normalization => {}
        _ => {
            return Err(Error::invalid(
                "evaluation windows must be normalized with the model's training statistics",
            ))
        }
    }
    let forecasts = windows.inputs.par_iter().map(|w| model.forecast(w)).collect::<Result<Vec<_>>>()?;
    Ok(Predictions { forecasts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cutoff: f64,
    pub total_windows: usize,
    pub retained: usize,
    /// Raw units (°C for the lab data).
    pub value_mae: Option<f64>,
    /// Seconds.
    pub gap_mae: Option<f64>,
    /// Value MAE after per-variable standardization with training stats.
    pub value_mae_normalized: Option<f64>,
    pub per_sensor_value_mae: Vec<Option<f64>>,
    pub per_sensor_gap_mae: Vec<Option<f64>>,
    pub value_correlation: CorrelationMatrix,
    pub gap_correlation: CorrelationMatrix,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn fmt_list(vs: &[Option<f64>]) -> String {
    vs.iter().map(|&v| fmt_opt(v)).collect::<Vec<_>>().join(",")
}

impl EvalReport {
    /// `key=value` lines; `prefix` is prepended to every key.
    pub fn to_report(&self, prefix: &str) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{prefix}{k}={v}").unwrap();
        kv("cutoff", self.cutoff.to_string());
        kv("total_windows", self.total_windows.to_string());
        kv("retained_windows", self.retained.to_string());
        kv("value_mae", fmt_opt(self.value_mae));
        kv("gap_mae", fmt_opt(self.gap_mae));
        kv("value_mae_normalized", fmt_opt(self.value_mae_normalized));
        kv("per_sensor_value_mae", fmt_list(&self.per_sensor_value_mae));
        kv("per_sensor_gap_mae", fmt_list(&self.per_sensor_gap_mae));
        for (name, m) in [("value_correlation", &self.value_correlation), ("gap_correlation", &self.gap_correlation)] {
            let rows: Vec<String> = m.iter().map(|r| fmt_list(r)).collect();
            kv(name, rows.join(";"));
        }
        kv("mean_value_correlation", fmt_opt(mean_off_diagonal(&self.value_correlation)));
        kv("mean_gap_correlation", fmt_opt(mean_off_diagonal(&self.gap_correlation)));
        s
    }
}

#[derive(Default, Clone, Copy)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// MAE over mask=1 target entries of the windows retained by `cutoff`.
pub fn evaluate_predictions<T: Real>(predictions: &Predictions<T>, windows: &WindowSet<T>, cutoff: f64) -> Result<EvalReport> {
    if predictions.forecasts.len() != windows.len() {
        return Err(Error::invalid("one prediction per window required"));
    }
    let stats = windows
        .normalization
        .as_ref()
        .ok_or_else(|| Error::invalid("evaluation windows must be normalized"))?;
    let d = windows.num_vars;
    let retained = apply_cutoff(windows, cutoff);
    let mut value = Mean::default();
    let mut gap = Mean::default();
    let mut value_norm = Mean::default();
    let mut per_value = vec![Mean::default(); d];
    let mut per_gap = vec![Mean::default(); d];
    for &k in &retained {
        let f = &predictions.forecasts[k];
        let tv = windows.raw_target_values(k);
        let tg = windows.raw_target_gaps(k);
        let mask = windows.target_masks.row(k);
        for j in 0..d {
            if mask[j] != T::one() {
                continue;
            }
            let ev = (f.values[j] - tv[j]).abs().as_f64();
            let eg = (f.gaps[j] - tg[j]).abs().as_f64();
            value.push(ev);
            gap.push(eg);
            per_value[j].push(ev);
            per_gap[j].push(eg);
            value_norm.push(ev / stats.value_scale[j].as_f64());
        }
    }
    let column = |pick: &dyn Fn(&Forecast<T>) -> &[T]| -> Vec<Vec<f64>> {
        (0..d)
            .map(|j| retained.iter().map(|&k| pick(&predictions.forecasts[k])[j].as_f64()).collect())
            .collect()
    };
    Ok(EvalReport {
        cutoff,
        total_windows: windows.len(),
        retained: retained.len(),
        value_mae: value.get(),
        gap_mae: gap.get(),
        value_mae_normalized: value_norm.get(),
        per_sensor_value_mae: per_value.into_iter().map(Mean::get).collect(),
        per_sensor_gap_mae: per_gap.into_iter().map(Mean::get).collect(),
        value_correlation: correlation_report(&column(&|f| &f.values)),
        gap_correlation: correlation_report(&column(&|f| &f.gaps)),
    })
}

pub fn evaluate<T: Real>(model: &ForecastModel<T>, windows: &WindowSet<T>, cutoff: f64) -> Result<EvalReport> {
    evaluate_predictions(&predict(model, windows)?, windows, cutoff)
}

/// One report per cutoff, sharing a single prediction pass.
pub fn cutoff_sweep<T: Real>(model: &ForecastModel<T>, windows: &WindowSet<T>, cutoffs: &[f64]) -> Result<Vec<EvalReport>> {
    if cutoffs.is_empty() {
        return Err(Error::InvalidConfig("cutoff list is empty".into()));
    }
    let predictions = predict(model, windows)?;
    cutoffs.iter().map(|&c| evaluate_predictions(&predictions, windows, c)).collect()
}

/// Comma-separated `cutoff,retained_windows,value_mae,gap_mae` table.
pub fn sweep_table(reports: &[EvalReport]) -> String {
    let mut s = String::from("cutoff,retained_windows,value_mae,gap_mae\n");
    for r in reports {
        writeln!(s, "{},{},{},{}", r.cutoff, r.retained, fmt_opt(r.value_mae), fmt_opt(r.gap_mae)).unwrap();
    }
    s
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation between every pair of series.
pub fn correlation_report(series: &[Vec<f64>]) -> CorrelationMatrix {
    series
        .iter()
        .enumerate()
        .map(|(i, a)| {
            series
                .iter()
                .enumerate()
                .map(|(j, b)| if i == j { pearson(a, a).map(|_| 1.0) } else { pearson(a, b) })
                .collect()
        })
        .collect()
}

/// Mean of the present entries above the diagonal.
pub fn mean_off_diagonal(m: &CorrelationMatrix) -> Option<f64> {
    let mut acc = Mean::default();
    for (i, row) in m.iter().enumerate() {
        for v in row.iter().skip(i + 1).flatten() {
            acc.push(*v);
        }
    }
    acc.get()
}

/// Per-window ground truth next to predictions, raw units; one row per
/// retained window.
#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    pub windows: Vec<usize>,
    pub target_values: Matrix<f64>,
    pub predicted_values: Matrix<f64>,
    pub target_gaps: Matrix<f64>,
    pub predicted_gaps: Matrix<f64>,
    pub target_masks: Matrix<f64>,
}

const TRACE_HEADER: &str = "window,sensor,target_value,predicted_value,target_gap,predicted_gap,target_mask";

impl Traces {
    pub fn collect<T: Real>(predictions: &Predictions<T>, windows: &WindowSet<T>, retained: &[usize]) -> Self {
        let d = windows.num_vars;
        let n = retained.len();
        let mut out = Self {
            windows: retained.to_vec(),
            target_values: Matrix::zeros(n, d),
            predicted_values: Matrix::zeros(n, d),
            target_gaps: Matrix::zeros(n, d),
            predicted_gaps: Matrix::zeros(n, d),
            target_masks: Matrix::zeros(n, d),
        };
        for (i, &k) in retained.iter().enumerate() {
            let f = &predictions.forecasts[k];
            let (tv, tg) = (windows.raw_target_values(k), windows.raw_target_gaps(k));
            for j in 0..d {
                out.target_values[(i, j)] = tv[j].as_f64();
                out.predicted_values[(i, j)] = f.values[j].as_f64();
                out.target_gaps[(i, j)] = tg[j].as_f64();
                out.predicted_gaps[(i, j)] = f.gaps[j].as_f64();
                out.target_masks[(i, j)] = windows.target_masks[(k, j)].as_f64();
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRACE_HEADER);
        s.push('\n');
        for (i, w) in self.windows.iter().enumerate() {
            for j in 0..self.target_values.cols() {
                writeln!(
                    s,
                    "{w},{j},{},{},{},{},{}",
                    self.target_values[(i, j)],
                    self.predicted_values[(i, j)],
                    self.target_gaps[(i, j)],
                    self.predicted_gaps[(i, j)],
                    self.target_masks[(i, j)]
                )
                .unwrap();
            }
        }
        s
    }

    /// Parses [`Traces::to_csv`] output. `num_vars` is needed because a
    /// header-only file carries no width.
    pub fn from_csv(text: &str, num_vars: usize) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(TRACE_HEADER) {
            return Err("missing trace header".into());
        }
        let rows: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();
        if num_vars == 0 || !rows.len().is_multiple_of(num_vars) {
            return Err(format!("{} rows is not a multiple of {num_vars} sensors", rows.len()));
        }
        let n = rows.len() / num_vars;
        let mut out = Self {
            windows: Vec::with_capacity(n),
            target_values: Matrix::zeros(n, num_vars),
            predicted_values: Matrix::zeros(n, num_vars),
            target_gaps: Matrix::zeros(n, num_vars),
            predicted_gaps: Matrix::zeros(n, num_vars),
            target_masks: Matrix::zeros(n, num_vars),
        };
        for (r, line) in rows.iter().enumerate() {
            let (i, j) = (r / num_vars, r % num_vars);
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("bad trace row {}", r + 2);
            if f.len() != 7 || f[1].parse::<usize>().ok() != Some(j) {
                return Err(bad());
            }
            let w: usize = f[0].parse().map_err(|_| bad())?;
            if j == 0 {
                out.windows.push(w);
            } else if out.windows[i] != w {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            out.target_values[(i, j)] = num(f[2])?;
            out.predicted_values[(i, j)] = num(f[3])?;
            out.target_gaps[(i, j)] = num(f[4])?;
            out.predicted_gaps[(i, j)] = num(f[5])?;
            out.target_masks[(i, j)] = num(f[6])?;
        }
        Ok(out)
    }
}

pub fn export_traces(traces: &Traces, path: &Path) -> Result<()> {
    std::fs::write(path, traces.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_traces(path: &Path, num_vars: usize) -> Result<Traces> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Traces::from_csv(&text, num_vars).map_err(|why| Error::format(path, why))
}
