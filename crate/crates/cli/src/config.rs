//! Flat `key = value` run configuration with `#` comments.
//!
//! Values are resolved as flag > file > profile default.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bace_rul::data::{SynthConfig, BATTERY_RUL_CAP, CMAPSS_RUL_CAP};
use bace_rul::model::{Architecture, Variant};
use bace_rul::trainer::TrainConfig;
use bace_rul::{Error, Result};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("profile", "default set: cmapss | nasa | toyota"),
    ("dataset", "unit histories (C-MAPSS text, or .csv with a unit,cycle header)"),
    ("dataset_format", "auto | cmapss | csv"),
    ("rul_file", "per-unit final RUL values for a truncated test set"),
    ("rul_cap", "RUL early constant value, in cycles"),
    ("out", "output directory"),
    ("checkpoint", "checkpoint path (empty: <out>/model.ckpt)"),
    ("seed", "random seed"),
    ("ablation", "none | no-cond | no-e2"),
    ("samples", "noise samples per prediction"),
    ("learning_rate", "Adam step size for every network"),
    ("lr_e1", "learning-rate override for E1 (empty: learning_rate)"),
    ("lr_g1", "learning-rate override for G1"),
    ("lr_d1", "learning-rate override for D1"),
    ("lr_e2", "learning-rate override for E2"),
    ("lr_g2", "learning-rate override for G2"),
    ("lr_d2", "learning-rate override for D2"),
    ("batch_size", "samples per mini-batch"),
    ("k_ge_updates", "generator/encoder updates per iteration"),
    ("d_updates", "discriminator updates per iteration"),
    ("max_iterations", "iteration limit"),
    ("patience", "evaluations without improvement before stopping, or none"),
    ("eval_every", "iterations between stopping checks"),
    ("window", "moving-average window of the stopping signal"),
    ("lambda11", "weight of L_D1 in the CE objective"),
    ("lambda12", "weight of L_E1G1 in the CE objective"),
    ("lambda21", "weight of L_D2 in the RP objective"),
    ("lambda22", "weight of L_E2G2 in the RP objective"),
    ("conditional_dim", "conditional space width n"),
    ("latent_dim", "latent space width d_z"),
    ("d_hidden", "hidden widths of D1 and D2"),
    ("e1g1_hidden", "hidden widths of E1 and G1"),
    ("e2g2_hidden", "hidden widths of E2 and G2"),
    ("dropout_rate", "dropout on hidden layers"),
    ("synth_units", "synthetic fleet size"),
    ("synth_min_life", "shortest synthetic lifetime"),
    ("synth_max_life", "longest synthetic lifetime"),
    ("synth_features", "synthetic sensor count"),
    ("synth_noise_std", "synthetic sensor noise"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Cmapss,
    Nasa,
    Toyota,
}

impl Profile {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "cmapss" => Some(Profile::Cmapss),
            "nasa" => Some(Profile::Nasa),
            "toyota" => Some(Profile::Toyota),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Profile::Cmapss => "cmapss",
            Profile::Nasa => "nasa",
            Profile::Toyota => "toyota",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Auto,
    Cmapss,
    Csv,
}

impl DatasetFormat {
    fn name(self) -> &'static str {
        match self {
            DatasetFormat::Auto => "auto",
            DatasetFormat::Cmapss => "cmapss",
            DatasetFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub dataset: Option<PathBuf>,
    pub dataset_format: DatasetFormat,
    pub rul_file: Option<PathBuf>,
    pub rul_cap: u32,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub samples: usize,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    /// Keys set by the file or a flag rather than defaulted.
    pub explicit: BTreeSet<String>,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut train = TrainConfig::default();
        let mut rul_cap = CMAPSS_RUL_CAP;
        match profile {
            Profile::Cmapss => {}
            Profile::Nasa => train.arch = Architecture::nasa_battery(),
            Profile::Toyota => {
                train.arch = Architecture::toyota_battery();
                train.dims.n = 10;
                rul_cap = BATTERY_RUL_CAP;
            }
        }
        train.dims.rul_cap = rul_cap;
        let synth = SynthConfig {
            rul_cap,
            seed: train.seed,
            ..SynthConfig::default()
        };
        Self {
            profile,
            dataset: None,
            dataset_format: DatasetFormat::Auto,
            rul_file: None,
            rul_cap,
            out: PathBuf::from("."),
            checkpoint: None,
            samples: 100,
            train,
            synth,
            explicit: BTreeSet::new(),
        }
    }

    /// Defaults, then `file` entries, then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let entries = match file {
            Some(path) => parse_file(path)?,
            None => Vec::new(),
        };
        let profile_value = overrides
            .iter()
            .rev()
            .find(|(k, _)| k == "profile")
            .map(|(_, v)| v.clone())
            .or_else(|| entries.iter().rev().find(|e| e.key == "profile").map(|e| e.value.clone()));
        let profile = match profile_value {
            Some(v) => Profile::parse(&v)
                .ok_or_else(|| Error::Config(format!("profile: unknown profile `{v}` (cmapss, nasa, toyota)")))?,
            None => Profile::Cmapss,
        };
        let mut cfg = Self::for_profile(profile);
        for e in &entries {
            cfg.set(&e.key, &e.value)
                .map_err(|err| Error::Config(format!("{}:{}: {}", e.path.display(), e.line, strip(err))))?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        check_key(key)?;
        let v = value.trim();
        let t = &mut self.train;
        match key {
            "profile" => {
                let p = Profile::parse(v).ok_or_else(|| bad(key, v, "cmapss, nasa or toyota"))?;
                if p != self.profile {
                    return Err(Error::Config(format!("profile: `{v}` conflicts with `{}`", self.profile.name())));
                }
            }
            "dataset" => self.dataset = opt_path(v),
            "dataset_format" => {
                self.dataset_format = match v {
                    "auto" => DatasetFormat::Auto,
                    "cmapss" => DatasetFormat::Cmapss,
                    "csv" => DatasetFormat::Csv,
                    _ => return Err(bad(key, v, "auto, cmapss or csv")),
                }
            }
            "rul_file" => self.rul_file = opt_path(v),
            "rul_cap" => {
                let cap: u32 = num(key, v)?;
                self.rul_cap = cap;
                t.dims.rul_cap = cap;
                self.synth.rul_cap = cap;
            }
            "out" => self.out = PathBuf::from(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "seed" => {
                let seed: u64 = num(key, v)?;
                t.seed = seed;
                self.synth.seed = seed;
            }
            "ablation" => t.ablation = Variant::from_name(v).ok_or_else(|| bad(key, v, "none, no-cond or no-e2"))?,
            "samples" => self.samples = num(key, v)?,
            "learning_rate" => t.learning_rate = num(key, v)?,
            "lr_e1" => t.learning_rate_overrides.e1 = opt_num(key, v)?,
            "lr_g1" => t.learning_rate_overrides.g1 = opt_num(key, v)?,
            "lr_d1" => t.learning_rate_overrides.d1 = opt_num(key, v)?,
            "lr_e2" => t.learning_rate_overrides.e2 = opt_num(key, v)?,
            "lr_g2" => t.learning_rate_overrides.g2 = opt_num(key, v)?,
            "lr_d2" => t.learning_rate_overrides.d2 = opt_num(key, v)?,
            "batch_size" => t.batch_size = num(key, v)?,
            "k_ge_updates" => t.k_ge_updates = num(key, v)?,
            "d_updates" => t.d_updates = num(key, v)?,
            "max_iterations" => t.max_iterations = num(key, v)?,
            "patience" => t.patience = if v == "none" { None } else { Some(num(key, v)?) },
            "eval_every" => t.eval_every = num(key, v)?,
            "window" => t.window = num(key, v)?,
            "lambda11" => t.weights.lambda11 = num(key, v)?,
            "lambda12" => t.weights.lambda12 = num(key, v)?,
            "lambda21" => t.weights.lambda21 = num(key, v)?,
            "lambda22" => t.weights.lambda22 = num(key, v)?,
            "conditional_dim" => t.dims.n = num(key, v)?,
            "latent_dim" => t.dims.d_z = num(key, v)?,
            "d_hidden" => t.arch.d_hidden = widths(key, v)?,
            "e1g1_hidden" => t.arch.e1g1_hidden = widths(key, v)?,
            "e2g2_hidden" => t.arch.e2g2_hidden = widths(key, v)?,
            "dropout_rate" => t.arch.dropout_rate = num(key, v)?,
            "synth_units" => self.synth.n_units = num(key, v)?,
            "synth_min_life" => self.synth.min_life = num(key, v)?,
            "synth_max_life" => self.synth.max_life = num(key, v)?,
            "synth_features" => self.synth.m = num(key, v)?,
            "synth_noise_std" => self.synth.noise_std = num(key, v)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Effective value of `key`, formatted so that `set` reads it back.
    pub fn get(&self, key: &str) -> String {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let list = |w: &[usize]| w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match key {
            "profile" => self.profile.name().into(),
            "dataset" => path(&self.dataset),
            "dataset_format" => self.dataset_format.name().into(),
            "rul_file" => path(&self.rul_file),
            "rul_cap" => self.rul_cap.to_string(),
            "out" => self.out.display().to_string(),
            "checkpoint" => path(&self.checkpoint),
            "seed" => t.seed.to_string(),
            "ablation" => t.ablation.name().into(),
            "samples" => self.samples.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "lr_e1" => opt(t.learning_rate_overrides.e1),
            "lr_g1" => opt(t.learning_rate_overrides.g1),
            "lr_d1" => opt(t.learning_rate_overrides.d1),
            "lr_e2" => opt(t.learning_rate_overrides.e2),
            "lr_g2" => opt(t.learning_rate_overrides.g2),
            "lr_d2" => opt(t.learning_rate_overrides.d2),
            "batch_size" => t.batch_size.to_string(),
            "k_ge_updates" => t.k_ge_updates.to_string(),
            "d_updates" => t.d_updates.to_string(),
            "max_iterations" => t.max_iterations.to_string(),
            "patience" => t.patience.map(|p| p.to_string()).unwrap_or_else(|| "none".into()),
            "eval_every" => t.eval_every.to_string(),
            "window" => t.window.to_string(),
            "lambda11" => t.weights.lambda11.to_string(),
            "lambda12" => t.weights.lambda12.to_string(),
            "lambda21" => t.weights.lambda21.to_string(),
            "lambda22" => t.weights.lambda22.to_string(),
            "conditional_dim" => t.dims.n.to_string(),
            "latent_dim" => t.dims.d_z.to_string(),
            "d_hidden" => list(&t.arch.d_hidden),
            "e1g1_hidden" => list(&t.arch.e1g1_hidden),
            "e2g2_hidden" => list(&t.arch.e2g2_hidden),
            "dropout_rate" => t.arch.dropout_rate.to_string(),
            "synth_units" => self.synth.n_units.to_string(),
            "synth_min_life" => self.synth.min_life.to_string(),
            "synth_max_life" => self.synth.max_life.to_string(),
            "synth_features" => self.synth.m.to_string(),
            "synth_noise_std" => self.synth.noise_std.to_string(),
            _ => unreachable!("unknown key `{key}`"),
        }
    }

    /// Every key with its effective value; reads back as a config file.
    pub fn manifest(&self, command: &str) -> String {
        let mut out = format!("# bace-rul {command} manifest\n");
        for (key, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset.as_deref().ok_or_else(|| {
            Error::Config("`dataset` is not set; add `dataset = <path>` to the config or pass --dataset".into())
        })
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("model.ckpt"))
    }
}

struct Entry {
    path: PathBuf,
    line: usize,
    key: String,
    value: String,
}

fn parse_file(path: &Path) -> Result<Vec<Entry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| Error::Config(format!("{}:{}: {msg}", path.display(), idx + 1));
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected `key = value`, found `{line}`")))?;
        let key = k.trim();
        check_key(key).map_err(|e| at(strip(e)))?;
        out.push(Entry {
            path: path.to_path_buf(),
            line: idx + 1,
            key: key.to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        return Ok(());
    }
    let nearest = KEYS
        .iter()
        .map(|(k, _)| (strsim::levenshtein(key, k), *k))
        .min()
        .filter(|(d, _)| *d <= 3);
    Err(Error::Config(match nearest {
        Some((_, k)) => format!("unknown config key `{key}`; did you mean `{k}`?"),
        None => format!("unknown config key `{key}`"),
    }))
}

/// Message of a config error without its kind prefix.
fn strip(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}

fn bad(key: &str, v: &str, expected: &str) -> Error {
    Error::Config(format!("{key}: invalid value `{v}`, expected {expected}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, "a number"))
}

fn opt_num(key: &str, v: &str) -> Result<Option<f64>> {
    if v.is_empty() {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn widths(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|w| w.trim().parse().map_err(|_| bad(key, v, "comma-separated layer widths")))
        .collect()
}
