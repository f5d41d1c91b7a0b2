//! Run configuration: defaults, then a `key = value` file, then flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use gapcast::ingest::Variable;
use gapcast::model::Variant;
use gapcast::pipeline::PipelineConfig;
use gapcast::train::TrainConfig;
use gapcast::{Error, Result};

/// Every key accepted in a config file, in report order.
pub const KEYS: &[&str] = &[
    "data",
    "sensors",
    "variable",
    "test_fraction",
    "cutoffs",
    "variant",
    "ar",
    "hidden",
    "epochs",
    "batch_size",
    "learning_rate",
    "seed",
    "shuffle",
    "loss_threshold",
    "gap_weight",
    "clip_norm",
    "cosine_decay",
];

/// Flags shared by the data-driven subcommands. Each one overrides the
/// same-named key (dashes become underscores) of `--config`.
#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Flat `key = value` file; `#` starts a comment
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lab log, or an event cache written by `ingest`
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated mote ids, in slot order [default: 1,2,3,4]
    #[arg(long)]
    pub sensors: Option<String>,
    /// temperature, humidity, light or voltage [default: temperature]
    #[arg(long)]
    pub variable: Option<String>,
    /// Share of final timesteps held out [default: 0.3]
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Comma-separated evaluation cut-offs in raw units [default: 30]
    #[arg(long)]
    pub cutoffs: Option<String>,
    /// simple, bilayer or velocity [default: simple]
    #[arg(long)]
    pub variant: Option<String>,
    /// Window length [default: 10]
    #[arg(long)]
    pub ar: Option<usize>,
    /// Hidden size [default: 64]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 128]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shuffle training windows every epoch [default: true]
    #[arg(long)]
    pub shuffle: Option<bool>,
    /// Huber threshold [default: 1]
    #[arg(long)]
    pub loss_threshold: Option<f64>,
    /// Weight of the gap loss [default: 1]
    #[arg(long)]
    pub gap_weight: Option<f64>,
    /// Global gradient-norm clip [default: 5]
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Half-cosine learning-rate decay over the epochs [default: false]
    #[arg(long)]
    pub cosine_decay: Option<bool>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("data", self.data.as_ref().map(|p| p.display().to_string()));
        put("sensors", self.sensors.clone());
        put("variable", self.variable.clone());
        put("test_fraction", self.test_fraction.map(|v| v.to_string()));
        put("cutoffs", self.cutoffs.clone());
        put("variant", self.variant.clone());
        put("ar", self.ar.map(|v| v.to_string()));
        put("hidden", self.hidden.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("learning_rate", self.learning_rate.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("shuffle", self.shuffle.map(|v| v.to_string()));
        put("loss_threshold", self.loss_threshold.map(|v| v.to_string()));
        put("gap_weight", self.gap_weight.map(|v| v.to_string()));
        put("clip_norm", self.clip_norm.map(|v| v.to_string()));
        put("cosine_decay", self.cosine_decay.map(|v| v.to_string()));
        out
    }

    /// Defaults, overlaid by the config file, overlaid by flags.
    pub fn resolve(&self, default_cutoffs: &[f64]) -> Result<RunConfig> {
        let mut map = BTreeMap::new();
        if let Some(path) = &self.config {
            map = parse_config_file(path)?;
        }
        for (k, v) in self.overrides() {
            map.insert(k.to_string(), v);
        }
        RunConfig::from_map(&map, default_cutoffs)
    }
}

pub fn parse_config_text(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("line {}: unknown key {key:?}", i + 1));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text).map_err(|why| Error::InvalidConfig(format!("{}: {why}", path.display())))
}

/// Everything a subcommand needs, validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub sensors: Vec<u32>,
    pub variable: Variable,
    pub pipeline: PipelineConfig,
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

impl RunConfig {
    pub fn from_map(map: &BTreeMap<String, String>, default_cutoffs: &[f64]) -> Result<Self> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let d = TrainConfig::default();
        let train = TrainConfig {
            ar: get("ar").map_or(Ok(d.ar), |v| parse("ar", v))?,
            hidden: get("hidden").map_or(Ok(d.hidden), |v| parse("hidden", v))?,
            epochs: get("epochs").map_or(Ok(d.epochs), |v| parse("epochs", v))?,
            batch_size: get("batch_size").map_or(Ok(d.batch_size), |v| parse("batch_size", v))?,
            learning_rate: get("learning_rate").map_or(Ok(d.learning_rate), |v| parse("learning_rate", v))?,
            seed: get("seed").map_or(Ok(d.seed), |v| parse("seed", v))?,
            shuffle: get("shuffle").map_or(Ok(d.shuffle), |v| parse("shuffle", v))?,
            loss_threshold: get("loss_threshold").map_or(Ok(d.loss_threshold), |v| parse("loss_threshold", v))?,
            gap_weight: get("gap_weight").map_or(Ok(d.gap_weight), |v| parse("gap_weight", v))?,
            clip_norm: get("clip_norm").map_or(Ok(d.clip_norm), |v| parse("clip_norm", v))?,
            cosine_decay: get("cosine_decay").map_or(Ok(d.cosine_decay), |v| parse("cosine_decay", v))?,
        };
        train.validate()?;
        let p = PipelineConfig::default();
        let test_fraction = get("test_fraction").map_or(Ok(p.test_fraction), |v| parse("test_fraction", v))?;
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!("test_fraction {test_fraction} outside (0, 1)")));
        }
        let cutoffs = match get("cutoffs") {
            Some(v) => parse_list("cutoffs", v)?,
            None => default_cutoffs.to_vec(),
        };
        if cutoffs.is_empty() || cutoffs.iter().any(|c: &f64| c.is_nan()) {
            return Err(Error::InvalidConfig("cutoffs must be a non-empty list of numbers".into()));
        }
        let variant: Variant = get("variant").map_or(Ok(Variant::Simple), |v| v.parse())?;
        let sensors: Vec<u32> = get("sensors").map_or(Ok(vec![1, 2, 3, 4]), |v| parse_list("sensors", v))?;
        if sensors.is_empty() {
            return Err(Error::InvalidConfig("sensors must list at least one id".into()));
        }
        let variable: Variable = get("variable").map_or(Ok(Variable::Temperature), |v| v.parse())?;
        Ok(Self {
            data: get("data").map(PathBuf::from),
            sensors,
            variable,
            pipeline: PipelineConfig {
                variant,
                train,
                test_fraction,
                cutoffs,
                ..p
            },
        })
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no data path (set --data or data = ... in --config)".into()))
    }

    /// Resolved settings as `key=value` lines, in [`KEYS`] order.
    pub fn to_report(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let p = &self.pipeline;
        let mut s = String::new();
        let data = self.data.as_ref().map_or_else(|| "NA".to_string(), |d| d.display().to_string());
        writeln!(s, "data={data}").unwrap();
        writeln!(s, "sensors={}", join(self.sensors.iter().map(|v| v.to_string()).collect())).unwrap();
        writeln!(s, "variable={}", self.variable).unwrap();
        writeln!(s, "test_fraction={}", p.test_fraction).unwrap();
        writeln!(s, "cutoffs={}", join(p.cutoffs.iter().map(|v| v.to_string()).collect())).unwrap();
        writeln!(s, "variant={}", p.variant).unwrap();
        s.push_str(&p.train.to_report());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let map = parse_config_text("# run\nepochs = 7\nsensors=3,1\nlearning-rate = 0.01 # fast\n").unwrap();
        let args = RunArgs {
            epochs: Some(2),
            ..RunArgs::default()
        };
        let mut merged = map.clone();
        for (k, v) in args.overrides() {
            merged.insert(k.to_string(), v);
        }
        let cfg = RunConfig::from_map(&merged, &[30.0]).unwrap();
        assert_eq!(cfg.pipeline.train.epochs, 2);
        assert_eq!(cfg.pipeline.train.learning_rate, 0.01);
        assert_eq!(cfg.sensors, vec![3, 1]);
        assert_eq!(cfg.pipeline.cutoffs, vec![30.0]);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(parse_config_text("nonsense").is_err());
        assert!(parse_config_text("colour = red").is_err());
        let bad = |k: &str, v: &str| {
            let map = BTreeMap::from([(k.to_string(), v.to_string())]);
            RunConfig::from_map(&map, &[30.0]).is_err()
        };
        assert!(bad("ar", "0"));
        assert!(bad("epochs", "-1"));
        assert!(bad("test_fraction", "1.5"));
        assert!(bad("variant", "lstm"));
        assert!(bad("variable", "pressure"));
        assert!(bad("cutoffs", ""));
        assert!(bad("shuffle", "maybe"));
    }
}
