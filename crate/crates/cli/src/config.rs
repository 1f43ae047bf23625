// SPDX-License-Identifier: Apache-2.0

//! Optional TOML defaults file. Values resolve as flag, then file, then
//! built-in default.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub gen: GenSection,
    /// Overrides for the training configuration.
    #[serde(default)]
    pub train: toml::Table,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sample: SampleSection,
    /// Overrides for the guidance configuration.
    #[serde(default)]
    pub guidance: toml::Table,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub params: Option<String>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Field overrides applied on top of `params`.
    #[serde(default)]
    pub synth: toml::Table,
}

#[derive(Debug, Default, Deserialize)]
pub struct ModelSection {
    pub preset: Option<String>,
    /// Field overrides applied on top of the preset.
    #[serde(flatten)]
    pub fields: toml::Table,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub seed: Option<u64>,
    pub guided: Option<bool>,
    pub deterministic: Option<bool>,
    pub snapshot_every: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Applies the keys of `table` on top of `base`. Unknown keys are rejected
/// by the target type.
pub fn overlay<T: Serialize + DeserializeOwned>(base: T, table: &toml::Table) -> Result<T> {
    if table.is_empty() {
        return Ok(base);
    }
    let mut value = serde_json::to_value(base)?;
    let obj = value.as_object_mut().context("configuration is not a table")?;
    for (k, v) in table {
        obj.insert(k.clone(), serde_json::to_value(v)?);
    }
    Ok(serde_json::from_value(value)?)
}
