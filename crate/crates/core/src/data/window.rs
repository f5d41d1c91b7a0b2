use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::data::SporadicSeries;
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::scalar::Real;

const SCALE_FLOOR: f64 = 1e-8;

/// Per-variable standardization of the value and gap channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization<T> {
    pub value_mean: Vec<T>,
    pub value_scale: Vec<T>,
    pub gap_mean: Vec<T>,
    pub gap_scale: Vec<T>,
}

impl<T: Real> Normalization<T> {
    /// Zero mean, unit scale: normalizing is a no-op.
    pub fn identity(num_vars: usize) -> Self {
        Self {
            value_mean: vec![T::zero(); num_vars],
            value_scale: vec![T::one(); num_vars],
            gap_mean: vec![T::zero(); num_vars],
            gap_scale: vec![T::one(); num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.value_mean.len()
    }

    /// Fits on the distinct timesteps of raw (unnormalized) windows.
    ///
    /// Value statistics use observed entries only, gap statistics use every
    /// entry. A variable that is never observed gets mean 0.
    pub fn fit(windows: &WindowSet<T>) -> Result<Self> {
        if windows.normalization.is_some() {
            return Err(Error::invalid("cannot fit normalization on already normalized windows"));
        }
        if windows.is_empty() {
            return Err(Error::InsufficientData("no windows to fit normalization on".into()));
        }
        let d = windows.num_vars;
        let mut value_acc = vec![Moments::default(); d];
        let mut gap_acc = vec![Moments::default(); d];
        let mut visit = |values: &[T], mask: &[T], gaps: &[T]| {
            for k in 0..d {
                if mask[k] == T::one() {
                    value_acc[k].push(values[k].as_f64());
                }
                gap_acc[k].push(gaps[k].as_f64());
            }
        };
        // first window contributes all rows, later windows only their newest row
        for (i, input) in windows.inputs.iter().enumerate() {
            let rows = if i == 0 { 0..input.rows() } else { input.rows() - 1..input.rows() };
            for r in rows {
                let row = input.row(r);
                visit(&row[..d], &row[d..2 * d], &row[2 * d..]);
            }
        }
        let last = windows.len() - 1;
        visit(
            windows.target_values.row(last),
            windows.target_masks.row(last),
            windows.target_gaps.row(last),
        );

        let split = |acc: &[Moments]| -> (Vec<T>, Vec<T>) {
            acc.iter().map(|m| (T::of(m.mean()), T::of(m.std().max(SCALE_FLOOR)))).unzip()
        };
        let (value_mean, value_scale) = split(&value_acc);
        let (gap_mean, gap_scale) = split(&gap_acc);
        Ok(Self {
            value_mean,
            value_scale,
            gap_mean,
            gap_scale,
        })
    }

    pub fn normalize_value(&self, d: usize, v: T) -> T {
        (v - self.value_mean[d]) / self.value_scale[d]
    }

    pub fn denormalize_value(&self, d: usize, v: T) -> T {
        v * self.value_scale[d] + self.value_mean[d]
    }

    pub fn normalize_gap(&self, d: usize, g: T) -> T {
        (g - self.gap_mean[d]) / self.gap_scale[d]
    }

    pub fn denormalize_gap(&self, d: usize, g: T) -> T {
        g * self.gap_scale[d] + self.gap_mean[d]
    }

    pub fn denormalize_values(&self, values: &[T]) -> Vec<T> {
        values.iter().enumerate().map(|(d, &v)| self.denormalize_value(d, v)).collect()
    }

    pub fn denormalize_gaps(&self, gaps: &[T]) -> Vec<T> {
        gaps.iter().enumerate().map(|(d, &g)| self.denormalize_gap(d, g)).collect()
    }

    /// Normalizes an input row laid out as `[x; m; Δ]` in place.
    fn normalize_row(&self, row: &mut [T]) {
        let d = self.num_vars();
        for k in 0..d {
            row[k] = self.normalize_value(k, row[k]);
            row[2 * d + k] = self.normalize_gap(k, row[2 * d + k]);
        }
    }

    fn denormalize_row(&self, row: &mut [T]) {
        let d = self.num_vars();
        for k in 0..d {
            row[k] = self.denormalize_value(k, row[k]);
            row[2 * d + k] = self.denormalize_gap(k, row[2 * d + k]);
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn std(&self) -> f64 {
        if self.n > 0.0 {
            (self.m2 / self.n).sqrt()
        } else {
            0.0
        }
    }
}

/// Length-`ar` input windows over `[x; m; Δ]` rows with next-step targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet<T> {
    pub ar: usize,
    pub num_vars: usize,
    /// Each `ar × 3·num_vars`.
    pub inputs: Vec<Matrix<T>>,
    pub target_values: Matrix<T>,
    pub target_gaps: Matrix<T>,
    pub target_masks: Matrix<T>,
    /// Set once the value and gap channels have been standardized.
    pub normalization: Option<Normalization<T>>,
}

/// Slices `series` into `N − ar` overlapping windows.
///
/// Window `k` covers timesteps `k..k+ar` and is paired with the values,
/// gaps and mask of timestep `k + ar`.
pub fn make_windows<T: Real>(series: &SporadicSeries<T>, ar: usize) -> Result<WindowSet<T>> {
    if ar == 0 {
        return Err(Error::InvalidConfig("window length must be positive".into()));
    }
    let n = series.len();
    if n <= ar {
        return Err(Error::InsufficientData(format!(
            "{n} timesteps cannot fill a window of {ar} plus a target"
        )));
    }
    if !series.is_imputed() {
        return Err(Error::invalid("series must be imputed before windowing"));
    }
    let d = series.num_vars();
    let row_of = |t: usize| -> Vec<T> {
        let mut row = Vec::with_capacity(3 * d);
        row.extend_from_slice(series.values.row(t));
        row.extend_from_slice(series.mask.row(t));
        row.extend_from_slice(series.gaps.row(t));
        row
    };
    let rows: Vec<Vec<T>> = (0..n).map(row_of).collect();

    let count = n - ar;
    let mut inputs = Vec::with_capacity(count);
    let mut target_values = Matrix::zeros(count, d);
    let mut target_gaps = Matrix::zeros(count, d);
    let mut target_masks = Matrix::zeros(count, d);
    for k in 0..count {
        inputs.push(Matrix::from_rows(&rows[k..k + ar])?);
        let t = k + ar;
        target_values.row_mut(k).copy_from_slice(series.values.row(t));
        target_gaps.row_mut(k).copy_from_slice(series.gaps.row(t));
        target_masks.row_mut(k).copy_from_slice(series.mask.row(t));
    }
    Ok(WindowSet {
        ar,
        num_vars: d,
        inputs,
        target_values,
        target_gaps,
        target_masks,
        normalization: None,
    })
}

impl<T: Real> WindowSet<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_width(&self) -> usize {
        3 * self.num_vars
    }

    /// Returns a copy with value and gap channels standardized by `stats`.
    /// The mask channel is untouched.
    pub fn normalized(&self, stats: &Normalization<T>) -> Result<Self> {
        if self.normalization.is_some() {
            return Err(Error::invalid("windows are already normalized"));
        }
        if stats.num_vars() != self.num_vars {
            return Err(Error::invalid("normalization fitted for a different variable count"));
        }
        let mut out = self.clone();
        for input in &mut out.inputs {
            for r in 0..input.rows() {
                stats.normalize_row(input.row_mut(r));
            }
        }
        for k in 0..out.len() {
            for d in 0..self.num_vars {
                out.target_values[(k, d)] = stats.normalize_value(d, out.target_values[(k, d)]);
                out.target_gaps[(k, d)] = stats.normalize_gap(d, out.target_gaps[(k, d)]);
            }
        }
        out.normalization = Some(stats.clone());
        Ok(out)
    }

    /// Inverse of [`WindowSet::normalized`].
    pub fn denormalized(&self) -> Self {
        let Some(stats) = &self.normalization else {
            return self.clone();
        };
        let mut out = self.clone();
        for input in &mut out.inputs {
            for r in 0..input.rows() {
                stats.denormalize_row(input.row_mut(r));
            }
        }
        for k in 0..out.len() {
            for d in 0..self.num_vars {
                out.target_values[(k, d)] = stats.denormalize_value(d, out.target_values[(k, d)]);
                out.target_gaps[(k, d)] = stats.denormalize_gap(d, out.target_gaps[(k, d)]);
            }
        }
        out.normalization = None;
        out
    }

    /// Target values of window `k` in raw units.
    pub fn raw_target_values(&self, k: usize) -> Vec<T> {
        match &self.normalization {
            Some(stats) => stats.denormalize_values(self.target_values.row(k)),
            None => self.target_values.row(k).to_vec(),
        }
    }

    pub fn raw_target_gaps(&self, k: usize) -> Vec<T> {
        match &self.normalization {
            Some(stats) => stats.denormalize_gaps(self.target_gaps.row(k)),
            None => self.target_gaps.row(k).to_vec(),
        }
    }

    /// Value channel of the final input row of window `k`, in raw units.
    pub fn raw_last_values(&self, k: usize) -> Vec<T> {
        let row = self.inputs[k].row(self.ar - 1);
        let values = &row[..self.num_vars];
        match &self.normalization {
            Some(stats) => stats.denormalize_values(values),
            None => values.to_vec(),
        }
    }

    /// The windows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let pick = |m: &Matrix<T>| {
            let mut out = Matrix::zeros(indices.len(), m.cols());
            for (i, &k) in indices.iter().enumerate() {
                out.row_mut(i).copy_from_slice(m.row(k));
            }
            out
        };
        Self {
            ar: self.ar,
            num_vars: self.num_vars,
            inputs: indices.iter().map(|&k| self.inputs[k].clone()).collect(),
            target_values: pick(&self.target_values),
            target_gaps: pick(&self.target_gaps),
            target_masks: pick(&self.target_masks),
            normalization: self.normalization.clone(),
        }
    }

    /// Sets every target mask entry to 1.
    pub fn with_full_target_masks(&self) -> Self {
        let mut out = self.clone();
        out.target_masks.fill(T::one());
        out
    }

    /// Writes the columnar text format: a header block, then one
    /// tab-separated record per window holding the window index, the
    /// row-major input, target values, target gaps and target mask.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[T]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        writeln!(s, "# gapcast windows v1").unwrap();
        writeln!(s, "ar={}", self.ar).unwrap();
        writeln!(s, "vars={}", self.num_vars).unwrap();
        writeln!(s, "count={}", self.len()).unwrap();
        if let Some(n) = &self.normalization {
            writeln!(s, "value_mean={}", join(&n.value_mean)).unwrap();
            writeln!(s, "value_scale={}", join(&n.value_scale)).unwrap();
            writeln!(s, "gap_mean={}", join(&n.gap_mean)).unwrap();
            writeln!(s, "gap_scale={}", join(&n.gap_scale)).unwrap();
        }
        writeln!(s, "---").unwrap();
        for k in 0..self.len() {
            let mut fields = vec![k.to_string()];
            fields.extend(self.inputs[k].as_slice().iter().map(T::to_string));
            for m in [&self.target_values, &self.target_gaps, &self.target_masks] {
                fields.extend(m.row(k).iter().map(T::to_string));
            }
            s.push_str(&fields.join("\t"));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<String> = BufReader::new(f)
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(path, e))?;
        Self::parse_lines(&lines).map_err(|reason| Error::format(path, reason))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<String> = text.lines().map(str::to_owned).collect();
        Self::parse_lines(&lines).map_err(|reason| Error::format("<text>", reason))
    }

    fn parse_lines(lines: &[String]) -> std::result::Result<Self, String> {
        let parse = |s: &str| s.parse::<T>().map_err(|_| format!("bad number {s:?}"));
        let parse_list = |s: &str| s.split(',').map(parse).collect::<std::result::Result<Vec<T>, _>>();
        let mut header = std::collections::BTreeMap::new();
        let mut body_start = None;
        for (i, line) in lines.iter().enumerate() {
            if line == "---" {
                body_start = Some(i + 1);
                break;
            }
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("bad header line {line:?}"))?;
            header.insert(k.to_owned(), v.to_owned());
        }
        let body_start = body_start.ok_or("missing --- separator")?;
        let get = |k: &str| header.get(k).ok_or_else(|| format!("missing header {k}"));
        let usize_of = |k: &str| -> std::result::Result<usize, String> {
            get(k)?.parse::<usize>().map_err(|_| format!("bad {k}"))
        };
        let ar = usize_of("ar")?;
        let d = usize_of("vars")?;
        let count = usize_of("count")?;
        let normalization = if header.contains_key("value_mean") {
            Some(Normalization {
                value_mean: parse_list(get("value_mean")?)?,
                value_scale: parse_list(get("value_scale")?)?,
                gap_mean: parse_list(get("gap_mean")?)?,
                gap_scale: parse_list(get("gap_scale")?)?,
            })
        } else {
            None
        };

        let body: Vec<&String> = lines[body_start..].iter().filter(|l| !l.is_empty()).collect();
        if body.len() != count {
            return Err(format!("header says {count} windows, found {}", body.len()));
        }
        let width = 3 * d;
        let mut inputs = Vec::with_capacity(count);
        let mut tv = Matrix::zeros(count, d);
        let mut tg = Matrix::zeros(count, d);
        let mut tm = Matrix::zeros(count, d);
        for (k, line) in body.iter().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 1 + ar * width + 3 * d {
                return Err(format!("record {k} has {} fields", fields.len()));
            }
            if fields[0].parse::<usize>().ok() != Some(k) {
                return Err(format!("record {k} has index {:?}", fields[0]));
            }
            let nums = fields[1..].iter().map(|s| parse(s)).collect::<std::result::Result<Vec<T>, _>>()?;
            let (input, rest) = nums.split_at(ar * width);
            inputs.push(Matrix::from_vec(ar, width, input.to_vec()).map_err(|e| e.to_string())?);
            tv.row_mut(k).copy_from_slice(&rest[..d]);
            tg.row_mut(k).copy_from_slice(&rest[d..2 * d]);
            tm.row_mut(k).copy_from_slice(&rest[2 * d..]);
        }
        Ok(Self {
            ar,
            num_vars: d,
            inputs,
            target_values: tv,
            target_gaps: tg,
            target_masks: tm,
            normalization,
        })
    }
}
