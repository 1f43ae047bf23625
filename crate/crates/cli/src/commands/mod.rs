// SPDX-License-Identifier: Apache-2.0

pub mod convert;
pub mod eval;
pub mod gen;
pub mod render;
pub mod sample;
pub mod study;
pub mod train;

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use diffplace::guidance::GuidanceConfig;
use diffplace::synthgen::SynthParams;

use crate::config::{overlay, FileConfig};

/// Generator parameters from a preset name (`toy`, `v0`, `v1`, `v2`) or a
/// TOML file, with `[gen.synth]` overrides from the config file on top.
pub fn synth_params(spec: &str, file: &FileConfig) -> Result<SynthParams> {
    let base = match SynthParams::preset(spec) {
        Ok(p) => p,
        Err(_) => {
            let path = Path::new(spec);
            if !path.exists() {
                bail!(
                    "generator parameters: '{}' is neither a preset nor an existing file",
                    spec
                );
            }
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid generator parameters in {}", path.display()))?
        }
    };
    let p = overlay(base, &file.gen.synth)?;
    p.validate()?;
    Ok(p)
}

/// Guidance flags shared by `sample` and `study`.
#[derive(Args, Debug, Clone, Default)]
pub struct GuidanceArgs {
    /// Steer sampling toward legal, short-wired placements.
    #[arg(long)]
    pub guided: bool,
    /// Wirelength weight in the guidance potential [default: 0.0001].
    #[arg(long)]
    pub w_hpwl: Option<f64>,
    /// Inner optimization steps per denoising step [default: 10].
    #[arg(long)]
    pub inner_steps: Option<usize>,
    /// Tolerated overlap potential [default: 0.0001].
    #[arg(long)]
    pub slack: Option<f64>,
    /// Scale of the guidance shift [default: 1.0].
    #[arg(long)]
    pub w_g: Option<f64>,
}

impl GuidanceArgs {
    /// Resolved guidance, or `None` for unguided sampling. Tuning flags
    /// without `--guided` are a configuration conflict.
    pub fn resolve(&self, file: &FileConfig) -> Result<Option<GuidanceConfig>> {
        let guided = self.guided || file.sample.guided.unwrap_or(false);
        let tuned = self.w_hpwl.is_some() || self.inner_steps.is_some() || self.slack.is_some() || self.w_g.is_some();
        if !guided {
            if tuned {
                bail!("guidance settings (--w-hpwl, --inner-steps, --slack, --w-g) need --guided");
            }
            return Ok(None);
        }
        let mut g = overlay(GuidanceConfig::default(), &file.guidance)?;
        if let Some(v) = self.w_hpwl {
            g.w_hpwl = v;
        }
        if let Some(v) = self.inner_steps {
            g.inner_steps = v;
        }
        if let Some(v) = self.slack {
            g.slack = v;
        }
        if let Some(v) = self.w_g {
            g.w_g = v;
        }
        g.validate()?;
        Ok(Some(g))
    }
}
