// SPDX-License-Identifier: Apache-2.0

//! Run manifests: `<output>.manifest.json` records what produced a file.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use crate::inputs::write_json;

pub const FORMAT: &str = "diffplace-manifest";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub format: &'static str,
    pub version: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved settings after merging flags, config file and defaults.
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Command-specific results (dataset statistics, final loss, scores).
    pub summary: Value,
}

impl Manifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        Self {
            format: FORMAT,
            version: 1,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            argv: argv.to_vec(),
            config: Value::Null,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    /// Path of the manifest for `output`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    /// Writes the manifest beside `output`.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::path_for(output);
        write_json(&path, self)?;
        Ok(path)
    }
}
