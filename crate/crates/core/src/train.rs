// SPDX-License-Identifier: Apache-2.0

//! The training loop: shuffled mini-batches, cosine learning-rate decay,
//! periodic checkpoints and exact resumption.

use std::path::PathBuf;

use diffplace_grad::{AdamConfig, AdamState};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::ddpm::{training_step, NoiseSchedule};
use crate::denoiser::DenoiserParams;
use crate::netlist::{Netlist, Placement};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Step count at which training stops (counted from the first run, so a
    /// resumed run continues toward the same total).
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Floor of the cosine decay.
    pub lr_min: f64,
    pub diffusion_steps: usize,
    /// Rescale gradients whose global norm exceeds this.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub log_every: u64,
    pub checkpoint_every: Option<u64>,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            batch_size: 16,
            lr: 3e-4,
            lr_min: 0.0,
            diffusion_steps: 1000,
            grad_clip: Some(1.0),
            seed: 0,
            log_every: 100,
            checkpoint_every: None,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr > 0.0) || self.lr_min < 0.0 || self.lr_min > self.lr {
            return Err(Error::Config("need 0 <= lr_min <= lr and lr > 0".into()));
        }
        if self.diffusion_steps == 0 {
            return Err(Error::Config("diffusion steps must be positive".into()));
        }
        if self.checkpoint_every.is_some() && self.checkpoint_path.is_none() {
            return Err(Error::Config(
                "checkpoint interval given without a checkpoint path".into(),
            ));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("gradient clip must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate for the step with 0-based index `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let total = self.steps.max(1) as f64;
        let frac = (step as f64 / total).min(1.0);
        self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Parameters, optimizer and step counter of one run.
pub struct Trainer {
    pub config: TrainConfig,
    pub params: DenoiserParams,
    pub optimizer: AdamState,
    pub step: u64,
    schedule: NoiseSchedule,
    /// Loss of every step run by this trainer.
    pub losses: Vec<f64>,
}

impl Trainer {
    pub fn new(config: TrainConfig, params: DenoiserParams) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamState::new(
            AdamConfig {
                lr: config.lr,
                ..Default::default()
            },
            params.tensors(),
        );
        Ok(Self {
            schedule: NoiseSchedule::cosine(config.diffusion_steps)?,
            config,
            params,
            optimizer,
            step: 0,
            losses: Vec::new(),
        })
    }

    /// Continues from a checkpoint. The optimizer state is restored when
    /// the checkpoint carries it and started fresh otherwise.
    pub fn resume(config: TrainConfig, ck: Checkpoint) -> Result<Self> {
        if ck.diffusion_steps != config.diffusion_steps {
            return Err(Error::Config(format!(
                "checkpoint uses {} diffusion steps, configuration asks for {}",
                ck.diffusion_steps, config.diffusion_steps
            )));
        }
        let mut t = Self::new(config, ck.params)?;
        if let Some(o) = ck.optimizer {
            t.optimizer = o;
        }
        t.step = ck.step;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            step: self.step,
            diffusion_steps: self.config.diffusion_steps,
            optimizer: Some(self.optimizer.clone()),
        }
    }

    /// Circuit indices used by step `step`. Each epoch is a fresh
    /// permutation drawn from the run seed, so a resumed run sees the same
    /// batches as an uninterrupted one.
    pub fn batch_indices(&self, step: u64, n: usize) -> Vec<usize> {
        let b = self.config.batch_size;
        let start = step as usize * b;
        let mut out = Vec::with_capacity(b);
        let mut epoch = usize::MAX;
        let mut perm: Vec<usize> = Vec::new();
        for k in start..start + b {
            let e = k / n;
            if e != epoch {
                epoch = e;
                perm = (0..n).collect();
                perm.shuffle(&mut rng::stream(self.config.seed, "train/shuffle", e as u64));
            }
            out.push(perm[k % n]);
        }
        out
    }

    /// Runs one step and returns its loss.
    pub fn step_once(&mut self, data: &[(Netlist, Placement)]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let ids = self.batch_indices(self.step, data.len());
        let batch: Vec<(&Netlist, &Placement)> = ids.iter().map(|&i| (&data[i].0, &data[i].1)).collect();
        let mut r = rng::stream(self.config.seed, rng::TRAIN, self.step);
        let lr = self.config.lr_at(self.step);
        let loss = training_step(
            &mut self.params,
            &mut self.optimizer,
            &batch,
            &self.schedule,
            &mut r,
            lr,
            self.config.grad_clip,
        )
        .map_err(|e| match e {
            Error::NonFinite { detail, .. } => Error::NonFinite {
                step: self.step as usize,
                detail: format!("{} (circuits {:?})", detail, ids),
            },
            other => other,
        })?;
        self.step += 1;
        self.losses.push(loss);
        Ok(loss)
    }

    /// Trains until `config.steps`, logging and checkpointing on the way.
    pub fn run(&mut self, data: &[(Netlist, Placement)]) -> Result<()> {
        let mut window = 0.0;
        let mut count = 0;
        while self.step < self.config.steps {
            let loss = self.step_once(data)?;
            window += loss;
            count += 1;
            if self.config.log_every > 0 && self.step.is_multiple_of(self.config.log_every) {
                log::info!(
                    "step {} loss {:.5} lr {:.3e}",
                    self.step,
                    window / count as f64,
                    self.config.lr_at(self.step)
                );
                window = 0.0;
                count = 0;
            }
            if let (Some(every), Some(path)) = (self.config.checkpoint_every, &self.config.checkpoint_path) {
                if every > 0 && self.step.is_multiple_of(every) {
                    self.checkpoint().save(path)?;
                    log::info!("saved checkpoint at step {} to {}", self.step, path.display());
                }
            }
        }
        if let Some(path) = &self.config.checkpoint_path {
            self.checkpoint().save(path)?;
        }
        Ok(())
    }
}
