// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use diffplace::checkpoint::Checkpoint;
use diffplace::denoiser::{parameter_count, DenoiserConfig, DenoiserParams};
use diffplace::io::dataset::read_dataset;
use diffplace::train::{TrainConfig, Trainer};
use diffplace::{Netlist, Placement};
use log::info;

use crate::config::{overlay, FileConfig};
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset (`.jsonl`).
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long, short)]
    out: PathBuf,
    /// Continue from this checkpoint (model, optimizer and step).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// With --resume: keep the weights but restart the optimizer and the
    /// step count, as for fine-tuning on a new dataset.
    #[arg(long, requires = "resume")]
    fine_tune: bool,
    /// Model preset: toy, small, medium or large [default: small].
    #[arg(long)]
    model: Option<String>,
    /// Replace attention layers with graph convolutions.
    #[arg(long)]
    no_attention: bool,
    /// Total training steps [default: 10000].
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Peak learning rate [default: 0.0003].
    #[arg(long)]
    lr: Option<f64>,
    /// Learning-rate floor of the cosine decay [default: 0].
    #[arg(long)]
    lr_min: Option<f64>,
    /// Diffusion length T [default: 1000].
    #[arg(long)]
    diffusion_steps: Option<usize>,
    /// Save a checkpoint every this many steps.
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Log the mean loss every this many steps [default: 100].
    #[arg(long)]
    log_every: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write per-step losses as CSV.
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

fn model_config(a: &TrainArgs, file: &FileConfig) -> Result<Option<DenoiserConfig>> {
    let named = a.model.is_some() || file.model.preset.is_some() || !file.model.fields.is_empty() || a.no_attention;
    if !named {
        return Ok(None);
    }
    let preset = a
        .model
        .clone()
        .or(file.model.preset.clone())
        .unwrap_or_else(|| "small".into());
    let mut cfg = overlay(DenoiserConfig::preset(&preset)?, &file.model.fields)?;
    if a.no_attention {
        cfg.attention = false;
    }
    cfg.validate()?;
    Ok(Some(cfg))
}

pub fn run(a: TrainArgs, file: &FileConfig, argv: &[String]) -> Result<()> {
    let mut cfg: TrainConfig = overlay(TrainConfig::default(), &file.train)?;
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = a.$field {
                cfg.$field = v;
            }
        };
    }
    set!(steps);
    set!(batch_size);
    set!(lr);
    set!(lr_min);
    set!(diffusion_steps);
    set!(log_every);
    set!(seed);
    if a.checkpoint_every.is_some() {
        cfg.checkpoint_every = a.checkpoint_every;
    }
    cfg.checkpoint_path = Some(a.out.clone());
    cfg.validate()?;
    let model = model_config(&a, file)?;

    // Settle every conflict before loading data or touching the model.
    let resumed = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("cannot load {}", path.display()))?;
            if let Some(m) = &model {
                if *m != ck.params.config {
                    bail!(
                        "--model/--no-attention disagree with the architecture stored in {}",
                        path.display()
                    );
                }
            }
            if a.diffusion_steps.is_none() {
                cfg.diffusion_steps = ck.diffusion_steps;
            }
            ensure!(
                cfg.diffusion_steps == ck.diffusion_steps,
                "checkpoint was trained with {} diffusion steps, not {}",
                ck.diffusion_steps,
                cfg.diffusion_steps
            );
            if !a.fine_tune {
                ensure!(
                    ck.step < cfg.steps,
                    "checkpoint is already at step {} of {}; raise --steps or pass --fine-tune",
                    ck.step,
                    cfg.steps
                );
            }
            Some(ck)
        }
        None => None,
    };

    let records = read_dataset(&a.data)?;
    ensure!(!records.is_empty(), "{} holds no circuits", a.data.display());
    let data: Vec<(Netlist, Placement)> = records.iter().map(|r| (r.netlist(), r.placement())).collect();
    drop(records);

    let mut trainer = match resumed {
        Some(ck) if a.fine_tune => Trainer::new(cfg.clone(), ck.params)?,
        Some(ck) => Trainer::resume(cfg.clone(), ck)?,
        None => {
            let m = model.unwrap_or_else(DenoiserConfig::small);
            Trainer::new(cfg.clone(), DenoiserParams::init(m, cfg.seed)?)?
        }
    };
    let start = trainer.step;
    info!(
        "training {} parameters on {} circuits, steps {}..{}",
        parameter_count(&trainer.params.config),
        data.len(),
        start,
        cfg.steps
    );
    trainer.run(&data)?;

    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.loss_log {
        let mut csv = String::from("step,loss\n");
        for (k, l) in trainer.losses.iter().enumerate() {
            csv.push_str(&format!("{},{}\n", start + k as u64 + 1, l));
        }
        std::fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?;
        outputs.push(path.clone());
    }
    let tail = &trainer.losses[trainer.losses.len().saturating_sub(100)..];
    let final_loss = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    info!(
        "done at step {}, mean loss of the last {} steps {:.4}",
        trainer.step,
        tail.len(),
        final_loss
    );

    let mut m = Manifest::new("train", argv);
    m.config = serde_json::json!({ "train": cfg, "model": trainer.params.config });
    m.seed = Some(cfg.seed);
    m.inputs = std::iter::once(a.data.clone()).chain(a.resume.clone()).collect();
    m.outputs = outputs;
    m.summary = serde_json::json!({
        "start_step": start,
        "end_step": trainer.step,
        "parameters": parameter_count(&trainer.params.config),
        "final_loss": if final_loss.is_finite() { serde_json::json!(final_loss) } else { serde_json::Value::Null },
    });
    m.write_beside(&a.out)?;
    Ok(())
}
