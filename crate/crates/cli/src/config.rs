use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use moemeta::{ModelConfig, TrainConfig};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub data: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
