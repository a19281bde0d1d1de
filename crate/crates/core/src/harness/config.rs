use std::path::{Path, PathBuf};

use clap::{Args, Parser};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Arm;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Settings of one training run. Full-scale values are
/// `--epochs 200 --lr 0.01 --batch 128`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arm: Arm,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub data: PathBuf,
    pub out: PathBuf,
    pub precision: Precision,
    /// Caps the global gradient norm of each step; `None` disables it.
    pub clip_norm: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arm: Arm::Full,
            epochs: 20,
            lr: 0.01,
            batch: 16,
            seed: 1,
            data: PathBuf::from("data"),
            out: PathBuf::from("run"),
            precision: Precision::F32,
            clip_norm: Some(5.0),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Usage("epochs must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Usage("batch must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Usage(format!("lr must be positive, got {}", self.lr)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Usage(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// Reads a flat JSON object of `RunConfig` fields; absent keys keep
    /// their defaults and unknown keys are rejected.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Usage(format!("config file: {e}")))
    }
}

/// Command-line overrides of [`RunConfig`]; anything unset falls back to the
/// config file, then to the defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    #[arg(long, value_parser = parse_arm)]
    pub arm: Option<Arm>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Global gradient-norm cap, or `off`.
    #[arg(long, value_parser = parse_clip)]
    pub clip_norm: Option<Clip>,
    /// Flat JSON file of run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_arm(s: &str) -> std::result::Result<Arm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clip(pub Option<f64>);

fn parse_clip(s: &str) -> std::result::Result<Clip, String> {
    if s == "off" {
        return Ok(Clip(None));
    }
    s.parse().map(|v| Clip(Some(v))).map_err(|_| format!("expected a number or `off`, got `{s}`"))
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.arm {
            c.arm = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.batch {
            c.batch = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.data {
            c.data = v.clone();
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = self.precision {
            c.precision = v;
        }
        if let Some(Clip(v)) = self.clip_norm {
            c.clip_norm = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Parser)]
#[command(no_binary_name = true)]
struct Standalone {
    #[command(flatten)]
    args: RunArgs,
}

/// Parses run flags (without a program name) into a validated config.
pub fn parse_config<S: AsRef<str>>(argv: &[S]) -> Result<RunConfig> {
    Standalone::try_parse_from(argv.iter().map(AsRef::as_ref))
        .map_err(|e| Error::Usage(e.render().to_string().trim().to_string()))?
        .args
        .resolve()
}
