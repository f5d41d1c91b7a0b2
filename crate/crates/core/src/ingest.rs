//! Reading the lab sensor log and turning it into event streams.
//!
//! Each line of the log is whitespace separated:
//!
//! ```text
//! date       time            epoch moteid temperature humidity light voltage
//! 2004-02-28 00:59:16.02785  2     1      19.9884     37.0933  45.08 2.69964
//! ```
//!
//! Timestamps come from the wall-clock `date time` pair, not the logical
//! `epoch` counter. Lines without a usable time or mote id are skipped and
//! counted; an unparsable physical field is recorded as absent.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Event, SineStream, SporadicSeries, WindowSet};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mote ids accepted from the log.
pub const SENSOR_ID_RANGE: std::ops::RangeInclusive<u32> = 1..=58;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    Temperature,
    Humidity,
    Light,
    Voltage,
}

impl Variable {
    pub const ALL: [Variable; 4] = [Variable::Temperature, Variable::Humidity, Variable::Light, Variable::Voltage];
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variable::Temperature => "temperature",
            Variable::Humidity => "humidity",
            Variable::Light => "light",
            Variable::Voltage => "voltage",
        })
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.to_string() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variable {s:?}")))
    }
}

/// One line of the log.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord {
    /// Seconds since the Unix epoch, with sub-second precision.
    pub time: f64,
    pub sensor: u32,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    pub light: Option<f64>,
    pub voltage: Option<f64>,
}

impl SensorRecord {
    pub fn get(&self, variable: Variable) -> Option<f64> {
        match variable {
            Variable::Temperature => self.temperature,
            Variable::Humidity => self.humidity,
            Variable::Light => self.light,
            Variable::Voltage => self.voltage,
        }
    }

    /// Renders the record in the log's line format.
    pub fn to_line(&self) -> String {
        let secs = self.time.floor();
        let micros = ((self.time - secs) * 1e6).round().min(999_999.0) as u32;
        let dt = chrono::DateTime::from_timestamp(secs as i64, micros * 1000)
            .expect("time within chrono's range")
            .naive_utc();
        let field = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        format!(
            "{} {} {} {} {} {} {}",
            dt.format("%Y-%m-%d %H:%M:%S%.6f"),
            0,
            self.sensor,
            field(self.temperature),
            field(self.humidity),
            field(self.light),
            field(self.voltage)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    Empty,
    Malformed,
    MissingSensor,
    SensorOutOfRange,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedLine {
    Record(SensorRecord),
    Skip(SkipReason),
}

fn parse_time(date: &str, time: &str) -> Option<f64> {
    let joined = format!("{date} {time}");
    let dt = NaiveDateTime::parse_from_str(&joined, "%Y-%m-%d %H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(&joined, "%Y-%m-%d %H:%M:%S"))
        .ok()?
        .and_utc();
    Some(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9)
}

pub fn parse_line(line: &str) -> ParsedLine {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.is_empty() {
        return ParsedLine::Skip(SkipReason::Empty);
    }
    if fields.len() < 2 {
        return ParsedLine::Skip(SkipReason::Malformed);
    }
    let Some(time) = parse_time(fields[0], fields[1]) else {
        return ParsedLine::Skip(SkipReason::Malformed);
    };
    let Some(sensor) = fields.get(3) else {
        return ParsedLine::Skip(SkipReason::MissingSensor);
    };
    let Ok(sensor) = sensor.parse::<u32>() else {
        return ParsedLine::Skip(SkipReason::MissingSensor);
    };
    if !SENSOR_ID_RANGE.contains(&sensor) {
        return ParsedLine::Skip(SkipReason::SensorOutOfRange);
    }
    let number = |i: usize| fields.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
    ParsedLine::Record(SensorRecord {
        time,
        sensor,
        temperature: number(4),
        humidity: number(5),
        light: number(6),
        voltage: number(7),
    })
}

/// Line counts from one pass over a log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestDiagnostics {
    pub lines: usize,
    pub records: usize,
    pub empty: usize,
    pub malformed: usize,
    pub missing_sensor: usize,
    pub sensor_out_of_range: usize,
}

impl IngestDiagnostics {
    fn count(&mut self, parsed: &ParsedLine) {
        self.lines += 1;
        match parsed {
            ParsedLine::Record(_) => self.records += 1,
            ParsedLine::Skip(SkipReason::Empty) => self.empty += 1,
            ParsedLine::Skip(SkipReason::Malformed) => self.malformed += 1,
            ParsedLine::Skip(SkipReason::MissingSensor) => self.missing_sensor += 1,
            ParsedLine::Skip(SkipReason::SensorOutOfRange) => self.sensor_out_of_range += 1,
        }
    }
}

pub fn read_records(reader: impl BufRead) -> std::io::Result<(Vec<SensorRecord>, IngestDiagnostics)> {
    let mut diag = IngestDiagnostics::default();
    let mut records = Vec::new();
    for line in reader.lines() {
        let parsed = parse_line(&line?);
        diag.count(&parsed);
        if let ParsedLine::Record(r) = parsed {
            records.push(r);
        }
    }
    Ok((records, diag))
}

pub fn read_log(path: &Path) -> Result<(Vec<SensorRecord>, IngestDiagnostics)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(f)).map_err(|e| Error::io(path, e))
}

pub fn write_log(records: &[SensorRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Truncates times to whole seconds. When a sensor reports more than once
/// within a second, the latest report wins (ties keep the later line).
/// Output is sorted by (second, sensor).
pub fn compress_to_seconds(records: &[SensorRecord]) -> Vec<SensorRecord> {
    let mut latest: BTreeMap<(i64, u32), (f64, usize)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = (r.time.floor() as i64, r.sensor);
        match latest.get(&key) {
            Some(&(t, _)) if t > r.time => {}
            _ => {
                latest.insert(key, (r.time, i));
            }
        }
    }
    latest
        .into_iter()
        .map(|((second, _), (_, i))| SensorRecord {
            time: second as f64,
            ..records[i].clone()
        })
        .collect()
}

/// One event per reading of `variable` from the listed sensors. The event's
/// variable index is the sensor's position in `sensors`.
pub fn select_subset<T: Real>(records: &[SensorRecord], sensors: &[u32], variable: Variable) -> Result<Vec<Event<T>>> {
    if sensors.is_empty() {
        return Err(Error::InvalidConfig("no sensor ids given".into()));
    }
    if records.is_empty() {
        return Err(Error::InsufficientData("no parseable sensor records".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for r in records {
        seen.insert(r.sensor);
    }
    for (i, id) in sensors.iter().enumerate() {
        if sensors[..i].contains(id) {
            return Err(Error::InvalidConfig(format!("sensor {id} listed twice")));
        }
        if !seen.contains(id) {
            return Err(Error::InvalidConfig(format!("sensor {id} does not appear in the data")));
        }
    }
    let mut events: Vec<Event<T>> = records
        .iter()
        .filter_map(|r| {
            let slot = sensors.iter().position(|&s| s == r.sensor)?;
            let value = r.get(variable)?;
            Some(Event::new(T::of(r.time), slot, T::of(value)))
        })
        .collect();
    events.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));
    Ok(events)
}

/// Summary statistics of a raw (unimputed) series.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub timesteps: usize,
    pub sensors: usize,
    /// Mean of all observed values.
    pub value_mean: f64,
    /// Mean time between consecutive observations of the same sensor.
    pub gap_mean: f64,
    /// `Σm / (N·D)`.
    pub observed_fraction: f64,
    pub observations: usize,
}

impl CorpusStats {
    pub fn of<T: Real>(series: &SporadicSeries<T>) -> Self {
        let (n, d) = (series.len(), series.num_vars());
        let mut value_sum = 0.0;
        let mut observations = 0usize;
        let mut gap_sum = 0.0;
        let mut gap_count = 0usize;
        for k in 0..d {
            let mut last: Option<f64> = None;
            for t in 0..n {
                if !series.observed(t, k) {
                    continue;
                }
                value_sum += series.values[(t, k)].as_f64();
                observations += 1;
                let s = series.timestamps[t].as_f64();
                if let Some(prev) = last {
                    gap_sum += s - prev;
                    gap_count += 1;
                }
                last = Some(s);
            }
        }
        Self {
            timesteps: n,
            sensors: d,
            value_mean: value_sum / observations.max(1) as f64,
            gap_mean: gap_sum / gap_count.max(1) as f64,
            observed_fraction: series.observed_fraction(),
            observations,
        }
    }

    pub fn to_report(&self) -> String {
        let mut s = String::new();
        writeln!(s, "timesteps={}", self.timesteps).unwrap();
        writeln!(s, "sensors={}", self.sensors).unwrap();
        writeln!(s, "observations={}", self.observations).unwrap();
        writeln!(s, "value_mean={}", self.value_mean).unwrap();
        writeln!(s, "gap_mean_seconds={}", self.gap_mean).unwrap();
        writeln!(s, "observed_fraction={}", self.observed_fraction).unwrap();
        s
    }
}

/// Chronological split: the test half gets the final `⌈fraction·N⌉`
/// timesteps. Both halves are re-anchored at time 0.
pub fn split_train_test<T: Real>(series: &SporadicSeries<T>, test_fraction: f64) -> Result<(SporadicSeries<T>, SporadicSeries<T>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n = series.len();
    let test_len = (test_fraction * n as f64).ceil() as usize;
    if test_len == 0 || test_len >= n {
        return Err(Error::InsufficientData(format!(
            "{n} timesteps cannot be split with test fraction {test_fraction}"
        )));
    }
    let boundary = n - test_len;
    Ok((series.slice(0..boundary)?, series.slice(boundary..n)?))
}

/// Indices of the windows whose observed target values are all at or
/// below `cutoff` (raw units). Unobserved target entries never exclude a
/// window.
pub fn apply_cutoff<T: Real>(windows: &WindowSet<T>, cutoff: f64) -> Vec<usize> {
    (0..windows.len())
        .filter(|&k| {
            let raw = windows.raw_target_values(k);
            let mask = windows.target_masks.row(k);
            raw.iter().zip(mask).all(|(v, &m)| m != T::one() || v.as_f64() <= cutoff)
        })
        .collect()
}

/// Writes events as a columnar text cache: header, `---`, then one
/// `time<TAB>slot<TAB>value` line per event.
pub fn write_events<T: Real>(events: &[Event<T>], num_vars: usize, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = format!("{EVENTS_HEADER}\nvars={num_vars}\ncount={}\n---\n", events.len());
    for e in events {
        writeln!(body, "{}\t{}\t{}", e.time, e.var, e.value).unwrap();
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_events<T: Real>(path: &Path) -> Result<(Vec<Event<T>>, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: String| Error::format(path, why);
    let (header, body) = text.split_once("---\n").ok_or_else(|| bad("missing --- separator".into()))?;
    let field = |key: &str| -> Result<usize> {
        header
            .lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("missing {key}")))
    };
    let vars = field("vars")?;
    let count = field("count")?;
    let mut events = Vec::with_capacity(count);
    for (i, line) in body.lines().filter(|l| !l.is_empty()).enumerate() {
        let parts: Vec<&str> = line.split('\t').collect();
        let parsed = (parts.len() == 3)
            .then(|| Some(Event::new(parts[0].parse().ok()?, parts[1].parse().ok()?, parts[2].parse().ok()?)))
            .flatten();
        events.push(parsed.ok_or_else(|| bad(format!("bad event line {}", i + 1)))?);
    }
    if events.len() != count {
        return Err(bad(format!("header says {count} events, found {}", events.len())));
    }
    Ok((events, vars))
}

const EVENTS_HEADER: &str = "# gapcast events v1";

/// A loaded subset series plus what was learned while loading it.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub series: SporadicSeries<f64>,
    /// `None` when loading from an event cache.
    pub diagnostics: Option<IngestDiagnostics>,
    /// Distinct mote ids in the log (all motes, not just the subset).
    pub motes_seen: Option<usize>,
    /// Records left after the same-second collapse (all motes).
    pub compressed_records: Option<usize>,
}

/// Loads `path`, either a lab log or an event cache written by
/// [`write_events`] (recognized by its header). For a log the subset is
/// selected with `sensors` and `variable`; a cache is used as is.
pub fn load_series(path: &Path, sensors: &[u32], variable: Variable) -> Result<LoadedData> {
    let mut head = String::new();
    {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        BufReader::new(f).read_line(&mut head).map_err(|e| Error::io(path, e))?;
    }
    if head.trim_end() == EVENTS_HEADER {
        let (events, vars) = read_events::<f64>(path)?;
        return Ok(LoadedData {
            series: SporadicSeries::from_events(&events, vars)?,
            diagnostics: None,
            motes_seen: None,
            compressed_records: None,
        });
    }
    let (records, diagnostics) = read_log(path)?;
    let compressed = compress_to_seconds(&records);
    let motes: std::collections::BTreeSet<u32> = compressed.iter().map(|r| r.sensor).collect();
    let events = select_subset::<f64>(&compressed, sensors, variable)?;
    if events.is_empty() {
        return Err(Error::InsufficientData(format!("no {variable} readings for sensors {sensors:?}")));
    }
    Ok(LoadedData {
        series: SporadicSeries::from_events(&events, sensors.len())?,
        diagnostics: Some(diagnostics),
        motes_seen: Some(motes.len()),
        compressed_records: Some(compressed.len()),
    })
}

/// Lab-format records for `sensors` motes following smooth sine
/// temperatures with random reporting gaps, sub-second jitter, and a small
/// fraction of broken-sensor readings above 100 °C.
#[derive(Debug, Clone)]
pub struct SyntheticLog {
    pub stream: SineStream,
    pub anomaly_rate: f64,
    /// Unix seconds of the first timestep.
    pub start: i64,
}

impl Default for SyntheticLog {
    fn default() -> Self {
        Self {
            stream: SineStream {
                steps: 2000,
                sensors: 4,
                missing: 0.4,
                max_step: 60,
                period: 6.0 * 3600.0,
                amplitude: 3.0,
                offset: 22.0,
                seed: 0,
            },
            anomaly_rate: 0.01,
            start: 1_077_929_956,
        }
    }
}

impl SyntheticLog {
    pub fn records(&self) -> Vec<SensorRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.stream.seed.wrapping_add(1));
        self.stream
            .events::<f64>()
            .into_iter()
            .map(|e| {
                let temperature = if rng.gen_bool(self.anomaly_rate) {
                    rng.gen_range(100.0..130.0)
                } else {
                    e.value
                };
                let jitter: f64 = rng.gen_range(0.0..0.9);
                SensorRecord {
                    time: self.start as f64 + e.time + (jitter * 1e4).round() / 1e4,
                    sensor: e.var as u32 + 1,
                    temperature: Some((temperature * 1e4).round() / 1e4),
                    humidity: Some(40.0),
                    light: Some(100.0),
                    voltage: Some(2.7),
                }
            })
            .collect()
    }
}
