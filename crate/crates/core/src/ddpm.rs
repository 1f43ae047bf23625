// SPDX-License-Identifier: Apache-2.0

//! Diffusion schedule, noising, the training objective and ancestral
//! sampling with optional guidance.

use diffplace_grad::{AdamState, Tape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::denoiser::{self, BoundParams, DenoiserParams, GraphBatch};
use crate::guidance::{GuidanceConfig, Guide};
use crate::netlist::{Netlist, Placement, Vec2};
use crate::{rng, Error, Result};

/// Bound on each coordinate of the clean-sample estimate during sampling.
pub const X0_CLIP: f64 = 1.5;

const COSINE_OFFSET: f64 = 0.008;
const MIN_ALPHA: f64 = 0.001;

/// Per-step coefficients, indexed by `t` in `0..=T` (index 0 is the clean
/// sample and only defines `alphabar(0) = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    alpha: Vec<f64>,
    alphabar: Vec<f64>,
    coef_x: Vec<f64>,
    coef_eps: Vec<f64>,
    sigma: Vec<f64>,
}

fn cosine_f(t: usize, steps: usize) -> f64 {
    let u = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
    (u * std::f64::consts::FRAC_PI_2).cos().powi(2)
}

impl NoiseSchedule {
    /// Cosine schedule with per-step `alpha` floored at 0.001.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("noise schedule needs at least one step".into()));
        }
        let f0 = cosine_f(0, steps);
        let mut alpha = vec![1.0; steps + 1];
        let mut alphabar = vec![1.0; steps + 1];
        for t in 1..=steps {
            let raw = cosine_f(t, steps) / cosine_f(t - 1, steps);
            if raw >= MIN_ALPHA {
                alphabar[t] = cosine_f(t, steps) / f0;
                alpha[t] = alphabar[t] / alphabar[t - 1];
            } else {
                alpha[t] = MIN_ALPHA;
                alphabar[t] = alphabar[t - 1] * MIN_ALPHA;
            }
        }
        let mut coef_x = vec![1.0; steps + 1];
        let mut coef_eps = vec![0.0; steps + 1];
        let mut sigma = vec![0.0; steps + 1];
        for t in 1..=steps {
            let a = alpha[t];
            coef_x[t] = 1.0 / a.sqrt();
            coef_eps[t] = -(1.0 - a) / (a.sqrt() * (1.0 - alphabar[t]).sqrt());
            let var = (1.0 - alphabar[t - 1]) / (1.0 - alphabar[t]) * (1.0 - a);
            sigma[t] = var.max(0.0).sqrt();
        }
        Ok(Self {
            steps,
            alpha,
            alphabar,
            coef_x,
            coef_eps,
            sigma,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alphabar(&self, t: usize) -> f64 {
        self.alphabar[t]
    }

    /// Multiplier of `x_t` in the reverse update.
    pub fn coef_x(&self, t: usize) -> f64 {
        self.coef_x[t]
    }

    /// Multiplier of the noise estimate in the reverse update.
    pub fn coef_eps(&self, t: usize) -> f64 {
        self.coef_eps[t]
    }

    /// Standard deviation of the fresh noise in the reverse update.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }
}

pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], s: &NoiseSchedule) -> Vec<f64> {
    let (a, b) = (s.alphabar(t).sqrt(), (1.0 - s.alphabar(t)).sqrt());
    x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect()
}

/// Clean-sample estimate without clipping.
pub fn predict_x0_raw(x_t: &[f64], t: usize, eps_hat: &[f64], s: &NoiseSchedule) -> Vec<f64> {
    let (a, b) = (s.alphabar(t).sqrt(), (1.0 - s.alphabar(t)).sqrt());
    x_t.iter().zip(eps_hat).map(|(x, e)| (x - b * e) / a).collect()
}

/// Clean-sample estimate clipped to `±X0_CLIP`.
pub fn predict_x0(x_t: &[f64], t: usize, eps_hat: &[f64], s: &NoiseSchedule) -> Vec<f64> {
    let mut x0 = predict_x0_raw(x_t, t, eps_hat, s);
    for v in &mut x0 {
        *v = v.clamp(-X0_CLIP, X0_CLIP);
    }
    x0
}

/// Anything that predicts noise for a batch of circuits.
pub trait NoisePredictor {
    fn predict(&self, batch: &GraphBatch, x_t: &[f64], t: &[usize]) -> Result<Vec<f64>>;
}

impl NoisePredictor for DenoiserParams {
    fn predict(&self, batch: &GraphBatch, x_t: &[f64], t: &[usize]) -> Result<Vec<f64>> {
        denoiser::predict(self, batch, x_t, t)
    }
}

impl<F> NoisePredictor for F
where
    F: Fn(&GraphBatch, &[f64], &[usize]) -> Result<Vec<f64>>,
{
    fn predict(&self, batch: &GraphBatch, x_t: &[f64], t: &[usize]) -> Result<Vec<f64>> {
        self(batch, x_t, t)
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One optimizer step on a batch of `(netlist, clean placement)` pairs.
/// Returns the loss before the update.
pub fn training_step(
    params: &mut DenoiserParams,
    opt: &mut AdamState,
    batch: &[(&Netlist, &Placement)],
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
    lr: f64,
    grad_clip: Option<f64>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("training batch is empty".into()));
    }
    let netlists: Vec<&Netlist> = batch.iter().map(|(n, _)| *n).collect();
    let g = GraphBatch::new(&netlists);
    let mut ts = Vec::with_capacity(batch.len());
    let mut x_t = Vec::with_capacity(2 * g.nodes);
    let mut eps = Vec::with_capacity(2 * g.nodes);
    for (nl, p) in batch {
        let t = rng.random_range(1..=schedule.steps());
        ts.push(t);
        let (a, b) = (schedule.alphabar(t).sqrt(), (1.0 - schedule.alphabar(t)).sqrt());
        for (i, c) in p.coords.iter().enumerate() {
            let e = Vec2::new(normal(rng), normal(rng));
            if nl.is_fixed(i) {
                x_t.extend([c.x, c.y]);
            } else {
                x_t.extend([a * c.x + b * e.x, a * c.y + b * e.y]);
            }
            eps.extend([e.x, e.y]);
        }
    }
    let movable: Vec<bool> = g.fixed.iter().map(|f| !f).collect();
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, true)?;
    let pred = denoiser::forward(&mut tape, &bound, &params.config, &g, &x_t, &ts)?;
    let loss = tape.masked_mse(pred, &eps, Some(&movable))?;
    let value = tape.value(loss)[0];
    if !value.is_finite() {
        return Err(Error::NonFinite {
            step: opt.step_count() as usize,
            detail: format!("training loss {} on a batch of {} circuits", value, batch.len()),
        });
    }
    let grads = tape.backward(loss)?;
    let mut flat: Vec<Vec<f64>> = bound
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(v, t)| grads.get_or_zeros(*v, t.len()))
        .collect();
    if let Some(max) = grad_clip {
        let norm = flat.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if norm > max {
            let k = max / norm;
            flat.iter_mut().flatten().for_each(|g| *g *= k);
        }
    }
    opt.step_with_lr(params.tensors_mut(), &flat, lr)?;
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleOptions {
    pub guidance: Option<GuidanceConfig>,
    /// Drop the fresh noise of every reverse step.
    pub deterministic: bool,
    /// Record the clean-sample estimate every this many steps.
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub placement: Placement,
    /// The starting noise, with fixed objects in place.
    pub initial: Placement,
    /// `(t, estimate)` pairs, earliest step first.
    pub trajectory: Vec<(usize, Placement)>,
    /// Steps at which guidance hit a non-finite value and was skipped.
    pub guidance_failures: usize,
    pub final_legality_weight: Option<f64>,
}

/// Samples one placement per circuit. `context` carries the coordinates of
/// fixed objects; movable entries are ignored. Each circuit draws its noise
/// from its own seed.
pub fn sample_batch(
    model: &dyn NoisePredictor,
    netlists: &[&Netlist],
    context: &[Option<&Placement>],
    schedule: &NoiseSchedule,
    opts: &SampleOptions,
    seeds: &[u64],
) -> Result<Vec<SampleOutput>> {
    if netlists.len() != seeds.len() || netlists.len() != context.len() {
        return Err(Error::Config(
            "one seed and one context entry per circuit are required".into(),
        ));
    }
    if let Some(cfg) = &opts.guidance {
        cfg.validate()?;
    }
    let g = GraphBatch::new(netlists);
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|&s| rng::stream(s, rng::SAMPLE, 0)).collect();
    let mut x = Vec::with_capacity(2 * g.nodes);
    for (c, nl) in netlists.iter().enumerate() {
        for i in 0..nl.len() {
            if nl.is_fixed(i) {
                let p = context[c]
                    .and_then(|p| p.coords.get(i))
                    .ok_or_else(|| Error::Config(format!("circuit {} object {} is fixed but has no position", c, i)))?;
                x.extend([p.x, p.y]);
            } else {
                x.extend([normal(&mut rngs[c]), normal(&mut rngs[c])]);
            }
        }
    }
    let mut guides: Vec<Option<Guide>> = netlists
        .iter()
        .map(|nl| opts.guidance.map(|cfg| Guide::new(nl, cfg)))
        .collect();
    let mut outputs: Vec<SampleOutput> = netlists
        .iter()
        .map(|_| SampleOutput {
            placement: Placement::default(),
            initial: Placement::default(),
            trajectory: Vec::new(),
            guidance_failures: 0,
            final_legality_weight: None,
        })
        .collect();
    for (c, &(lo, hi)) in g.ranges.iter().enumerate() {
        outputs[c].initial = Placement::from_flat(&x[2 * lo..2 * hi]);
    }
    let steps = schedule.steps();
    for t in (1..=steps).rev() {
        let ts = vec![t; netlists.len()];
        let eps = model.predict(&g, &x, &ts)?;
        if eps.len() != x.len() {
            return Err(Error::Config(format!(
                "model returned {} values for {}",
                eps.len(),
                x.len()
            )));
        }
        let snapshot = opts
            .snapshot_every
            .is_some_and(|k| k > 0 && (steps - t).is_multiple_of(k));
        let (sa, sb) = (schedule.alphabar(t).sqrt(), (1.0 - schedule.alphabar(t)).sqrt());
        for (c, &(lo, hi)) in g.ranges.iter().enumerate() {
            let xs = &x[2 * lo..2 * hi];
            let mut x0 = predict_x0(xs, t, &eps[2 * lo..2 * hi], schedule);
            if snapshot {
                outputs[c].trajectory.push((t, Placement::from_flat(&x0)));
            }
            if let Some(guide) = guides[c].as_mut() {
                let step = guide.backward_guidance(&Placement::from_flat(&x0));
                if step.finite {
                    let w = guide.config.w_g;
                    for (k, d) in step.delta.iter().enumerate() {
                        x0[2 * k] += w * d.x;
                        x0[2 * k + 1] += w * d.y;
                    }
                } else {
                    outputs[c].guidance_failures += 1;
                }
            }
            let z_scale = if opts.deterministic { 0.0 } else { schedule.sigma(t) };
            let mut next = Vec::with_capacity(xs.len());
            for k in 0..xs.len() {
                let e = (xs[k] - sa * x0[k]) / sb;
                let z = if t > 1 { normal(&mut rngs[c]) } else { 0.0 };
                next.push(schedule.coef_x(t) * xs[k] + schedule.coef_eps(t) * e + z_scale * z);
            }
            for (k, v) in next.into_iter().enumerate() {
                if !g.fixed[lo + k / 2] {
                    x[2 * lo + k] = v;
                }
            }
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: t,
                detail: format!("sampler state coordinate {} is {}", k, x[k]),
            });
        }
    }
    for (c, &(lo, hi)) in g.ranges.iter().enumerate() {
        let coords = x[2 * lo..2 * hi]
            .chunks_exact(2)
            .enumerate()
            .map(|(k, v)| {
                if g.fixed[lo + k] {
                    Vec2::new(v[0], v[1])
                } else {
                    Vec2::new(v[0].clamp(-1.0, 1.0), v[1].clamp(-1.0, 1.0))
                }
            })
            .collect();
        outputs[c].placement = Placement::new(coords);
        outputs[c].final_legality_weight = guides[c].as_ref().map(|g| g.weight.value);
    }
    Ok(outputs)
}

pub fn sample(
    model: &dyn NoisePredictor,
    netlist: &Netlist,
    context: Option<&Placement>,
    schedule: &NoiseSchedule,
    opts: &SampleOptions,
    seed: u64,
) -> Result<SampleOutput> {
    let mut out = sample_batch(model, &[netlist], &[context], schedule, opts, &[seed])?;
    Ok(out.remove(0))
}
