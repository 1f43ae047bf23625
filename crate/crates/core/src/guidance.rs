// SPDX-License-Identifier: Apache-2.0

//! Backward guidance toward short, overlap-free placements.
//!
//! At each denoising step the clean-sample estimate is improved by a few
//! gradient steps on `w_hpwl * wirelength + w_legality * overlap`, and the
//! legality weight is raised by dual ascent while the overlap potential
//! exceeds a slack. The weight and its optimizer state live for a whole
//! sampling run.

use diffplace_grad::{adam_update, AdamConfig};
use serde::{Deserialize, Serialize};

use crate::ddpm::NoiseSchedule;
use crate::metrics::{legality_potential, Boundary, WireModel};
use crate::netlist::{Netlist, Placement, Vec2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceConfig {
    pub w_hpwl: f64,
    /// Gradient-descent rate on the clean-sample estimate.
    pub x_lr: f64,
    /// Adam rate for the legality weight.
    pub w_lr: f64,
    pub w_init: f64,
    pub inner_steps: usize,
    /// Tolerated overlap potential.
    pub slack: f64,
    /// Scale of the guidance shift in the combined score.
    pub w_g: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            w_hpwl: 1e-4,
            x_lr: 0.008,
            w_lr: 5e-4,
            w_init: 0.0,
            inner_steps: 10,
            slack: 1e-4,
            w_g: 1.0,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_lr > 0.0 && self.w_lr > 0.0) {
            return Err(Error::Config("guidance rates must be positive".into()));
        }
        if self.inner_steps == 0 {
            return Err(Error::Config("guidance needs at least one inner step".into()));
        }
        if self.w_hpwl < 0.0 || self.w_init < 0.0 || self.slack < 0.0 {
            return Err(Error::Config("guidance weights and slack must be non-negative".into()));
        }
        Ok(())
    }
}

/// The legality weight with its scalar Adam moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegalityWeight {
    pub value: f64,
    m: f64,
    v: f64,
    step: u64,
}

impl LegalityWeight {
    pub fn new(value: f64) -> Self {
        Self {
            value,
            m: 0.0,
            v: 0.0,
            step: 0,
        }
    }

    /// One clamped Adam ascent step along `grad`.
    pub fn ascend(&mut self, grad: f64, lr: f64) {
        self.step += 1;
        let mut p = [self.value];
        let mut m = [self.m];
        let mut v = [self.v];
        adam_update(&AdamConfig::default(), -lr, self.step, &mut p, &[grad], &mut m, &mut v);
        self.value = p[0].max(0.0);
        self.m = m[0];
        self.v = v[0];
    }
}

/// Per-netlist state reused across guidance calls.
pub struct Guide<'a> {
    pub netlist: &'a Netlist,
    wires: WireModel,
    pub config: GuidanceConfig,
    pub weight: LegalityWeight,
    pub boundary: Boundary,
}

/// Result of one guidance call.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceStep {
    pub delta: Vec<Vec2>,
    /// False when a non-finite value appeared; `delta` is then zero.
    pub finite: bool,
    pub legality_potential: f64,
}

impl<'a> Guide<'a> {
    pub fn new(netlist: &'a Netlist, config: GuidanceConfig) -> Self {
        Self {
            netlist,
            wires: WireModel::new(netlist),
            weight: LegalityWeight::new(config.w_init),
            config,
            boundary: Boundary::CANVAS,
        }
    }

    /// Value and gradient of `w_hpwl * wirelength + w_legality * overlap`.
    /// Fixed objects get zero gradient.
    pub fn combined_potential(&self, x: &Placement, w_hpwl: f64, w_legality: f64) -> (f64, Vec<Vec2>) {
        let (leg, mut grad) = legality_potential(x, self.netlist, &self.boundary);
        for g in &mut grad {
            g.x *= w_legality;
            g.y *= w_legality;
        }
        self.wires.add_subgradient(&x.coords, &mut grad, w_hpwl);
        for (i, g) in grad.iter_mut().enumerate() {
            if self.netlist.is_fixed(i) {
                *g = Vec2::ZERO;
            }
        }
        let value = w_hpwl * self.wires.hpwl(&x.coords) + w_legality * leg;
        (value, grad)
    }

    /// Runs the inner loop from `x0` and returns the total shift.
    pub fn backward_guidance(&mut self, x0: &Placement) -> GuidanceStep {
        let cfg = self.config;
        let zero = |leg| GuidanceStep {
            delta: vec![Vec2::ZERO; x0.len()],
            finite: false,
            legality_potential: leg,
        };
        if !x0.is_finite() {
            return zero(f64::NAN);
        }
        let saved = self.weight;
        let mut x = x0.clone();
        let mut leg = 0.0;
        for _ in 0..cfg.inner_steps {
            let (_, grad) = self.combined_potential(&x, cfg.w_hpwl, self.weight.value);
            for (c, g) in x.coords.iter_mut().zip(&grad) {
                c.x -= cfg.x_lr * g.x;
                c.y -= cfg.x_lr * g.y;
            }
            leg = legality_potential(&x, self.netlist, &self.boundary).0;
            if !leg.is_finite() || !x.is_finite() {
                self.weight = saved;
                return zero(leg);
            }
            self.weight.ascend(leg - cfg.slack, cfg.w_lr);
        }
        GuidanceStep {
            delta: x.coords.iter().zip(&x0.coords).map(|(a, b)| *a - *b).collect(),
            finite: true,
            legality_potential: leg,
        }
    }
}

/// Noise estimate whose implied clean sample is shifted by `w_g * delta`.
pub fn guided_score(eps_hat: &[f64], delta: &[f64], t: usize, schedule: &NoiseSchedule, w_g: f64) -> Vec<f64> {
    let ab = schedule.alphabar(t);
    let k = w_g * ab.sqrt() / (1.0 - ab).sqrt();
    eps_hat.iter().zip(delta).map(|(e, d)| e - k * d).collect()
}
