//! Optional TOML defaults. Every key is optional and a flag always wins.
//!
//! ```toml
//! seed = 7
//! train_fraction = 0.75
//!
//! [synth]
//! classes = 4
//!
//! [train]
//! heads = "time,variety"
//!
//! [embed]
//! k = 15
//!
//! [traj]
//! k = 8
//! mode = "mean"
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub train_fraction: Option<f64>,
    pub synth: SynthSection,
    pub train: TrainSection,
    pub embed: EmbedSection,
    pub traj: TrajSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub classes: Option<usize>,
    pub tracks: Option<usize>,
    pub sessions: Option<usize>,
    pub dim: Option<usize>,
    pub noise: Option<f64>,
    pub scale: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub heads: Option<String>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub k: Option<usize>,
    pub min_dist: Option<f64>,
    pub epochs: Option<usize>,
    pub negative_samples: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajSection {
    pub k: Option<usize>,
    pub eps: Option<usize>,
    pub pooled: Option<bool>,
    pub steps: Option<usize>,
    pub mode: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }
}
