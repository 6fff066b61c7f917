//! Run configuration: built-in defaults, overridden by a `key = value` file,
//! overridden by command-line settings.
//!
//! ```text
//! # comments start with '#'
//! model.kind = discrete
//! dsp.fft_size = 1024
//! train.steps = 3000
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::continuous::ContinuousConfig;
use crate::discrete::DiscreteConfig;
use crate::dsp::DspParams;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Continuous,
    Discrete,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Continuous => "continuous",
            ModelKind::Discrete => "discrete",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(ModelKind::Continuous),
            "discrete" => Ok(ModelKind::Discrete),
            other => Err(Error::Parse(format!(
                "model kind must be `continuous` or `discrete`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Dead-code maintenance period for the discrete model; 0 disables it.
    pub reinit_window: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch: 64,
            lr: AdamConfig::default().lr,
            seed: 7,
            reinit_window: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub atlas: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model_kind: ModelKind,
    pub dsp: DspParams,
    pub continuous: ContinuousConfig,
    pub discrete: DiscreteConfig,
    pub train: TrainConfig,
    pub paths: Paths,
    pub serve_addr: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model_kind: ModelKind::Continuous,
            dsp: DspParams::default(),
            continuous: ContinuousConfig::default(),
            discrete: DiscreteConfig::default(),
            train: TrainConfig::default(),
            paths: Paths::default(),
            serve_addr: "127.0.0.1:8080".to_string(),
        }
    }
}

/// Every recognised key, in file order.
pub const KEYS: &[&str] = &[
    "model.kind",
    "dsp.sample_rate",
    "dsp.fft_size",
    "dsp.hop",
    "continuous.d_z",
    "continuous.hidden",
    "continuous.adv_hidden",
    "continuous.beta_kl",
    "continuous.lambda_adv",
    "continuous.factor_loudness",
    "discrete.k",
    "discrete.d_z",
    "discrete.hidden",
    "discrete.beta_commit",
    "train.steps",
    "train.batch",
    "train.lr",
    "train.seed",
    "train.reinit_window",
    "paths.dataset",
    "paths.checkpoint",
    "paths.atlas",
    "serve.addr",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("bad value `{value}` for `{key}`")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse(format!("`{key}` must be finite")))
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Sets one dotted key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model.kind" => self.model_kind = v.parse()?,
            "dsp.sample_rate" => self.dsp.sample_rate = parse(key, v)?,
            "dsp.fft_size" => self.dsp.fft_size = parse(key, v)?,
            "dsp.hop" => self.dsp.hop = parse(key, v)?,
            "continuous.d_z" => self.continuous.d_z = parse(key, v)?,
            "continuous.hidden" => self.continuous.hidden = parse(key, v)?,
            "continuous.adv_hidden" => self.continuous.adv_hidden = parse(key, v)?,
            "continuous.beta_kl" => self.continuous.beta_kl = parse_f64(key, v)?,
            "continuous.lambda_adv" => self.continuous.lambda_adv = parse_f64(key, v)?,
            "continuous.factor_loudness" => self.continuous.factor_loudness = parse(key, v)?,
            "discrete.k" => self.discrete.k = parse(key, v)?,
            "discrete.d_z" => self.discrete.d_z = parse(key, v)?,
            "discrete.hidden" => self.discrete.hidden = parse(key, v)?,
            "discrete.beta_commit" => self.discrete.beta_commit = parse_f64(key, v)?,
            "train.steps" => self.train.steps = parse(key, v)?,
            "train.batch" => self.train.batch = parse(key, v)?,
            "train.lr" => self.train.lr = parse_f64(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.reinit_window" => self.train.reinit_window = parse(key, v)?,
            "paths.dataset" => self.paths.dataset = opt_path(v),
            "paths.checkpoint" => self.paths.checkpoint = opt_path(v),
            "paths.atlas" => self.paths.atlas = opt_path(v),
            "serve.addr" => self.serve_addr = v.to_string(),
            other => return Err(Error::Parse(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Current value of a key, formatted as it would appear in a file.
    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "model.kind" => self.model_kind.name().to_string(),
            "dsp.sample_rate" => self.dsp.sample_rate.to_string(),
            "dsp.fft_size" => self.dsp.fft_size.to_string(),
            "dsp.hop" => self.dsp.hop.to_string(),
            "continuous.d_z" => self.continuous.d_z.to_string(),
            "continuous.hidden" => self.continuous.hidden.to_string(),
            "continuous.adv_hidden" => self.continuous.adv_hidden.to_string(),
            "continuous.beta_kl" => format!("{:?}", self.continuous.beta_kl),
            "continuous.lambda_adv" => format!("{:?}", self.continuous.lambda_adv),
            "continuous.factor_loudness" => self.continuous.factor_loudness.to_string(),
            "discrete.k" => self.discrete.k.to_string(),
            "discrete.d_z" => self.discrete.d_z.to_string(),
            "discrete.hidden" => self.discrete.hidden.to_string(),
            "discrete.beta_commit" => format!("{:?}", self.discrete.beta_commit),
            "train.steps" => self.train.steps.to_string(),
            "train.batch" => self.train.batch.to_string(),
            "train.lr" => format!("{:?}", self.train.lr),
            "train.seed" => self.train.seed.to_string(),
            "train.reinit_window" => self.train.reinit_window.to_string(),
            "paths.dataset" => show_path(&self.paths.dataset),
            "paths.checkpoint" => show_path(&self.paths.checkpoint),
            "paths.atlas" => show_path(&self.paths.atlas),
            "serve.addr" => self.serve_addr.clone(),
            other => return Err(Error::Parse(format!("unknown config key `{other}`"))),
        })
    }

    /// Applies the assignments of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Defaults, then the file (if any), then `overrides` in order.
    pub fn layered(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut c = Self::default();
        if let Some(t) = file_text {
            c.apply_text(t)?;
        }
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Every key with its value; [`RunConfig::from_text`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.dsp.validate()?;
        if self.train.batch == 0 {
            return Err(Error::InvalidArgument("train.batch must be positive".into()));
        }
        if !(self.train.lr > 0.0) {
            return Err(Error::InvalidArgument("train.lr must be positive".into()));
        }
        Ok(())
    }
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected key=value, got `{s}`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
