//! Run configuration: paper defaults, overridden by an optional TOML file,
//! overridden by command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rnn_iqa::activity::Ordering;
use rnn_iqa::multires::MultiresConfig;
use rnn_iqa::nn::HeadKind;
use rnn_iqa::train::TrainConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;

/// Contents of a `--config` file. Every table and key is optional.
///
/// ```toml
/// head = "rnn"
/// split_ratio = 0.8
///
/// [train]
/// epochs = 5
/// lr0 = 2e-4
///
/// [multires]
/// enable_low_scale = true
/// patch_size = 224
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub head: Option<HeadKind>,
    pub split_ratio: Option<f64>,
    pub train: TrainConfig,
    pub multires: MultiresConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Training flags that override the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainFlags {
    /// Initial learning rate.
    #[arg(long)]
    pub lr0: Option<f64>,
    /// Learning-rate multiplier applied after every epoch.
    #[arg(long)]
    pub lr_factor: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// L2 regularization on weights.
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub huber_delta: Option<f64>,
    /// Keep the training order fixed across epochs.
    #[arg(long)]
    pub no_shuffle: bool,
}

impl TrainFlags {
    pub fn apply(&self, mut cfg: TrainConfig, seed: Option<u64>) -> Result<TrainConfig> {
        if let Some(v) = self.lr0 {
            cfg.lr0 = v;
        }
        if let Some(v) = self.lr_factor {
            cfg.lr_factor = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.l2 {
            cfg.l2 = v;
        }
        if let Some(v) = self.huber_delta {
            cfg.huber_delta = v;
        }
        if self.no_shuffle {
            cfg.shuffle = false;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Multi-resolution flags that override the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct MultiresFlags {
    /// Only use patches of the original resolution.
    #[arg(long)]
    pub no_multires: bool,
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Patch order within each scale: asc-si, raster or random.
    #[arg(long)]
    pub ordering: Option<Ordering>,
    /// Fail instead of skipping the half-resolution group on small images.
    #[arg(long)]
    pub strict_low_scale: bool,
}

impl MultiresFlags {
    pub fn apply(&self, mut cfg: MultiresConfig, seed: Option<u64>) -> Result<MultiresConfig> {
        if self.no_multires {
            cfg.enable_low_scale = false;
        }
        if let Some(p) = self.patch_size {
            cfg.patch_size = p;
        }
        if let Some(o) = self.ordering {
            cfg.ordering = o;
        }
        if self.strict_low_scale {
            cfg.strict_low_scale = true;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if cfg.patch_size < rnn_iqa::features::STAT_MIN_PATCH || !cfg.patch_size.is_multiple_of(rnn_iqa::features::STAT_CELLS) {
            bail!(
                "patch size {} must be a multiple of {} and at least {}",
                cfg.patch_size,
                rnn_iqa::features::STAT_CELLS,
                rnn_iqa::features::STAT_MIN_PATCH
            );
        }
        Ok(cfg)
    }
}

pub fn split_ratio(flag: Option<f64>, file: &FileConfig) -> Result<f64> {
    let ratio = flag.or(file.split_ratio).unwrap_or(DEFAULT_SPLIT_RATIO);
    if !(ratio > 0.0 && ratio < 1.0) {
        bail!("split ratio {ratio} must lie in (0, 1)");
    }
    Ok(ratio)
}

/// Writes the effective configuration next to an output as
/// `<output>.config.json`.
pub fn echo(output: &Path, config: &serde_json::Value) -> Result<()> {
    let mut name = output.as_os_str().to_owned();
    name.push(".config.json");
    let mut json = serde_json::to_vec_pretty(config)?;
    json.push(b'\n');
    std::fs::write(&name, json).with_context(|| format!("writing {}", Path::new(&name).display()))
}
