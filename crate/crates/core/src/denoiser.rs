// SPDX-License-Identifier: Apache-2.0

//! Noise-prediction network.
//!
//! Node features are the noisy center, a multi-frequency sinusoidal code of
//! it and the object size. A per-circuit timestep embedding is added once
//! after the input projection. Each block then runs, with pre-norm
//! residual wiring:
//!
//! 1. a graph sublayer of stacked GATv2 layers whose logits see the pin
//!    offsets at both ends of every edge,
//! 2. an MLP,
//! 3. multi-head self-attention over all objects of the same circuit,
//! 4. another MLP.
//!
//! A zero-initialized linear head maps the trunk to a 2D noise estimate.
//! Several circuits can be batched as one disjoint graph.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use diffplace_grad::{Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::netlist::{Netlist, Vec2};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Trunk width.
    pub model_size: usize,
    pub blocks: usize,
    /// GATv2 layers per graph sublayer.
    pub layers_per_block: usize,
    /// Per-head width of the self-attention sublayer.
    pub attgnn_size: usize,
    /// Hidden width of the graph sublayer (all heads together).
    pub resgnn_size: usize,
    pub mlp_factor: usize,
    /// Linear layers per MLP sublayer.
    pub mlp_layers: usize,
    pub heads: usize,
    pub t_enc_dim: usize,
    pub xy_enc_dim: usize,
    /// When false, every self-attention sublayer becomes a graph sublayer.
    #[serde(default = "yes")]
    pub attention: bool,
}

fn yes() -> bool {
    true
}

impl DenoiserConfig {
    pub fn small() -> Self {
        Self {
            model_size: 64,
            blocks: 2,
            layers_per_block: 2,
            attgnn_size: 32,
            resgnn_size: 64,
            mlp_factor: 4,
            mlp_layers: 2,
            heads: 4,
            t_enc_dim: 32,
            xy_enc_dim: 32,
            attention: true,
        }
    }

    pub fn medium() -> Self {
        Self {
            model_size: 128,
            resgnn_size: 256,
            ..Self::small()
        }
    }

    pub fn large() -> Self {
        Self {
            model_size: 256,
            blocks: 3,
            attgnn_size: 256,
            resgnn_size: 256,
            ..Self::small()
        }
    }

    /// Width-32 model for quick experiments.
    pub fn toy() -> Self {
        Self {
            model_size: 32,
            attgnn_size: 8,
            resgnn_size: 32,
            ..Self::small()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "small" => Ok(Self::small()),
            "medium" => Ok(Self::medium()),
            "large" => Ok(Self::large()),
            "toy" => Ok(Self::toy()),
            _ => Err(Error::Config(format!("unknown model preset '{}'", name))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("model_size", self.model_size),
            ("blocks", self.blocks),
            ("layers_per_block", self.layers_per_block),
            ("attgnn_size", self.attgnn_size),
            ("resgnn_size", self.resgnn_size),
            ("mlp_factor", self.mlp_factor),
            ("heads", self.heads),
            ("t_enc_dim", self.t_enc_dim),
            ("xy_enc_dim", self.xy_enc_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{} must be positive", name)));
            }
        }
        if self.mlp_layers < 2 {
            return Err(Error::Config("mlp_layers must be at least 2".into()));
        }
        if !self.xy_enc_dim.is_multiple_of(4) {
            return Err(Error::Config("xy_enc_dim must be divisible by 4".into()));
        }
        if !self.t_enc_dim.is_multiple_of(2) {
            return Err(Error::Config("t_enc_dim must be even".into()));
        }
        if !self.resgnn_size.is_multiple_of(self.heads) {
            return Err(Error::Config("resgnn_size must be divisible by heads".into()));
        }
        Ok(())
    }

    fn input_dim(&self) -> usize {
        2 + self.xy_enc_dim + 2
    }
}

/// Raw coordinates followed by `dim/4` sine/cosine pairs per axis, with
/// wavelengths halving from the canvas width 2.
pub fn sinusoidal_xy_encoding(p: Vec2, dim: usize) -> Result<Vec<f64>> {
    if !dim.is_multiple_of(4) {
        return Err(Error::Config(format!(
            "position encoding width {} is not divisible by 4",
            dim
        )));
    }
    let mut out = Vec::with_capacity(dim + 2);
    out.extend([p.x, p.y]);
    for v in [p.x, p.y] {
        for j in 0..dim / 4 {
            let w = PI * (1u64 << j) as f64;
            out.extend([(w * v).sin(), (w * v).cos()]);
        }
    }
    Ok(out)
}

/// Transformer-style sinusoidal code of an integer timestep.
pub fn timestep_encoding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let f = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        out.push((t as f64 * f).sin());
    }
    for i in 0..half {
        let f = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        out.push((t as f64 * f).cos());
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Normal with variance 1/fan_in, fan_in being the first dimension.
    FanIn,
    Zeros,
    Ones,
}

struct Layout<'a> {
    cfg: &'a DenoiserConfig,
    entries: Vec<(String, Vec<usize>, Init)>,
}

impl Layout<'_> {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.entries.push((name, shape, init));
    }

    fn linear(&mut self, name: &str, i: usize, o: usize) {
        self.push(format!("{}.w", name), vec![i, o], Init::FanIn);
        self.push(format!("{}.b", name), vec![o], Init::Zeros);
    }

    fn norm(&mut self, name: &str) {
        let d = self.cfg.model_size;
        self.push(format!("{}.gain", name), vec![d], Init::Ones);
        self.push(format!("{}.bias", name), vec![d], Init::Zeros);
    }

    fn graph(&mut self, p: &str) {
        let (d, r, heads) = (self.cfg.model_size, self.cfg.resgnn_size, self.cfg.heads);
        self.norm(&format!("{}.norm", p));
        for l in 0..self.cfg.layers_per_block {
            let input = if l == 0 { d } else { r };
            let q = format!("{}.gat{}", p, l);
            self.linear(&format!("{}.src", q), input, r);
            self.linear(&format!("{}.dst", q), input, r);
            self.push(format!("{}.edge", q), vec![4, r], Init::FanIn);
            self.push(format!("{}.att", q), vec![heads, r / heads], Init::FanIn);
            self.push(format!("{}.bias", q), vec![r], Init::Zeros);
        }
        self.linear(&format!("{}.out", p), r, d);
    }

    fn mlp(&mut self, p: &str) {
        let d = self.cfg.model_size;
        let hidden = d * self.cfg.mlp_factor;
        let layers = self.cfg.mlp_layers;
        self.norm(&format!("{}.norm", p));
        for l in 0..layers {
            let i = if l == 0 { d } else { hidden };
            let o = if l + 1 == layers { d } else { hidden };
            self.linear(&format!("{}.lin{}", p, l), i, o);
        }
    }

    fn attention(&mut self, p: &str) {
        let d = self.cfg.model_size;
        let w = self.cfg.heads * self.cfg.attgnn_size;
        self.norm(&format!("{}.norm", p));
        for k in ["q", "k", "v"] {
            self.linear(&format!("{}.{}", p, k), d, w);
        }
        self.linear(&format!("{}.out", p), w, d);
    }
}

fn layout(cfg: &DenoiserConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.model_size;
    let mut l = Layout {
        cfg,
        entries: Vec::new(),
    };
    l.linear("input", cfg.input_dim(), d);
    l.linear("time.0", cfg.t_enc_dim, d);
    l.linear("time.1", d, d);
    for b in 0..cfg.blocks {
        l.graph(&format!("block{}.graph", b));
        l.mlp(&format!("block{}.mlp0", b));
        if cfg.attention {
            l.attention(&format!("block{}.attn", b));
        } else {
            l.graph(&format!("block{}.graph2", b));
        }
        l.mlp(&format!("block{}.mlp1", b));
    }
    l.norm("head.norm");
    l.push("head.w".into(), vec![d, 2], Init::Zeros);
    l.push("head.b".into(), vec![2], Init::Zeros);
    l.entries
}

/// All learnable tensors of one denoiser, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub config: DenoiserConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl DenoiserParams {
    pub fn init(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, rng::INIT, 0);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape, init) in layout(&config) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::FanIn => {
                    let sd = 1.0 / (shape[0] as f64).sqrt();
                    (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut r);
                            sd * z
                        })
                        .collect()
                }
            };
            names.push(name);
            tensors.push(Tensor::from_vec(shape, data)?);
        }
        Ok(Self::assemble(config, names, tensors))
    }

    fn assemble(config: DenoiserConfig, names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self {
            config,
            names,
            tensors,
            index,
        }
    }

    /// Rebuilds parameters from named tensors, checking them against the
    /// layout implied by `config`.
    pub fn from_named(config: DenoiserConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != named.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                named.len()
            )));
        }
        for ((name, shape, _), (got, t)) in expected.iter().zip(&named) {
            if name != got || shape.as_slice() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    got,
                    t.shape(),
                    name,
                    shape
                )));
            }
        }
        let (names, tensors) = named.into_iter().unzip();
        Ok(Self::assemble(config, names, tensors))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

/// Parameter count implied by a configuration.
pub fn parameter_count(config: &DenoiserConfig) -> usize {
    layout(config).iter().map(|(_, s, _)| s.iter().product::<usize>()).sum()
}

/// Parameters registered on a tape.
pub struct BoundParams {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    /// Registers every tensor; `trainable` decides whether gradients flow.
    pub fn bind(tape: &mut Tape, params: &DenoiserParams, trainable: bool) -> Result<Self> {
        let mut vars = Vec::with_capacity(params.tensors.len());
        for t in &params.tensors {
            let v = if trainable {
                tape.param(t)
            } else {
                tape.constant(t.rows(), t.cols(), t.data().to_vec())?
            };
            vars.push(v);
        }
        Ok(Self {
            vars,
            index: params.index.clone(),
        })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn get(&self, name: &str) -> Var {
        self.vars[self.index[name]]
    }
}

/// One or more circuits as a single disjoint graph.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub nodes: usize,
    /// Row range of each circuit.
    pub ranges: Arc<[(usize, usize)]>,
    pub circuit_of: Arc<[usize]>,
    /// Object sizes, `nodes x 2`.
    pub sizes: Vec<f64>,
    /// Directed message edges including one self-loop per node.
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// Receiver pin offset then sender pin offset, `edges x 4`.
    pub edge_feat: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl GraphBatch {
    pub fn new(netlists: &[&Netlist]) -> Self {
        let mut ranges = Vec::new();
        let mut circuit_of = Vec::new();
        let mut sizes = Vec::new();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut feat = Vec::new();
        let mut fixed = Vec::new();
        let mut base = 0;
        for (c, nl) in netlists.iter().enumerate() {
            let n = nl.len();
            ranges.push((base, base + n));
            for (i, o) in nl.objects.iter().enumerate() {
                circuit_of.push(c);
                sizes.extend([o.width, o.height]);
                fixed.push(nl.is_fixed(i));
            }
            for e in &nl.edges {
                let (a, b) = (e.attr.src_offset, e.attr.dst_offset);
                src.push(base + e.src);
                dst.push(base + e.dst);
                feat.extend([b.x, b.y, a.x, a.y]);
                src.push(base + e.dst);
                dst.push(base + e.src);
                feat.extend([a.x, a.y, b.x, b.y]);
            }
            for i in 0..n {
                src.push(base + i);
                dst.push(base + i);
                feat.extend([0.0; 4]);
            }
            base += n;
        }
        Self {
            nodes: base,
            ranges: ranges.into(),
            circuit_of: circuit_of.into(),
            sizes,
            src: src.into(),
            dst: dst.into(),
            edge_feat: feat,
            fixed,
        }
    }

    pub fn circuits(&self) -> usize {
        self.ranges.len()
    }

    pub fn edges(&self) -> usize {
        self.src.len()
    }
}

fn linear(tape: &mut Tape, p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{}.w", name));
    let b = p.get(&format!("{}.b", name));
    Ok(tape.linear(x, w, b)?)
}

fn norm(tape: &mut Tape, p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let g = p.get(&format!("{}.gain", name));
    let b = p.get(&format!("{}.bias", name));
    Ok(tape.layer_norm(x, g, b)?)
}

fn gat_layer(
    tape: &mut Tape,
    p: &BoundParams,
    name: &str,
    h: Var,
    edge_feat: Var,
    g: &GraphBatch,
    heads: usize,
) -> Result<Var> {
    let xs = linear(tape, p, &format!("{}.src", name), h)?;
    let xd = linear(tape, p, &format!("{}.dst", name), h)?;
    let e = tape.matmul(edge_feat, p.get(&format!("{}.edge", name)))?;
    let xs_e = tape.gather_rows(xs, &g.src)?;
    let xd_e = tape.gather_rows(xd, &g.dst)?;
    let z = tape.add(xs_e, xd_e)?;
    let z = tape.add(z, e)?;
    let z = tape.leaky_relu(z, 0.2);
    let logits = tape.head_dot(z, p.get(&format!("{}.att", name)), heads)?;
    let alpha = tape.segment_softmax(logits, &g.dst, g.nodes)?;
    let msg = tape.head_scale(xs_e, alpha)?;
    let agg = tape.segment_sum(msg, &g.dst, g.nodes)?;
    Ok(tape.add_row(agg, p.get(&format!("{}.bias", name)))?)
}

fn graph_sublayer(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &DenoiserConfig,
    name: &str,
    h: Var,
    edge_feat: Var,
    g: &GraphBatch,
) -> Result<Var> {
    let mut x = norm(tape, p, &format!("{}.norm", name), h)?;
    for l in 0..cfg.layers_per_block {
        if l > 0 {
            x = tape.gelu(x);
        }
        x = gat_layer(tape, p, &format!("{}.gat{}", name, l), x, edge_feat, g, cfg.heads)?;
    }
    let x = tape.gelu(x);
    let out = linear(tape, p, &format!("{}.out", name), x)?;
    Ok(tape.add(h, out)?)
}

fn mlp_sublayer(tape: &mut Tape, p: &BoundParams, cfg: &DenoiserConfig, name: &str, h: Var) -> Result<Var> {
    let mut x = norm(tape, p, &format!("{}.norm", name), h)?;
    for l in 0..cfg.mlp_layers {
        if l > 0 {
            x = tape.gelu(x);
        }
        x = linear(tape, p, &format!("{}.lin{}", name, l), x)?;
    }
    Ok(tape.add(h, x)?)
}

fn attention_sublayer(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &DenoiserConfig,
    name: &str,
    h: Var,
    g: &GraphBatch,
) -> Result<Var> {
    let x = norm(tape, p, &format!("{}.norm", name), h)?;
    let q = linear(tape, p, &format!("{}.q", name), x)?;
    let k = linear(tape, p, &format!("{}.k", name), x)?;
    let v = linear(tape, p, &format!("{}.v", name), x)?;
    let a = tape.segment_attention(q, k, v, &g.ranges, cfg.heads)?;
    let out = linear(tape, p, &format!("{}.out", name), a)?;
    Ok(tape.add(h, out)?)
}

/// Predicts per-node noise (`nodes x 2`) for noisy centers `x_t`
/// (`nodes x 2`, flattened) at per-circuit timesteps `t`.
pub fn forward(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &DenoiserConfig,
    g: &GraphBatch,
    x_t: &[f64],
    t: &[usize],
) -> Result<Var> {
    if x_t.len() != 2 * g.nodes || t.len() != g.circuits() {
        return Err(Error::Config(format!(
            "denoiser input has {} coordinates and {} timesteps for {} nodes in {} circuits",
            x_t.len(),
            t.len(),
            g.nodes,
            g.circuits()
        )));
    }
    let width = cfg.input_dim();
    let mut feats = Vec::with_capacity(g.nodes * width);
    for i in 0..g.nodes {
        feats.extend(sinusoidal_xy_encoding(
            Vec2::new(x_t[2 * i], x_t[2 * i + 1]),
            cfg.xy_enc_dim,
        )?);
        feats.extend([g.sizes[2 * i], g.sizes[2 * i + 1]]);
    }
    let feats = tape.constant(g.nodes, width, feats)?;
    let mut h = linear(tape, p, "input", feats)?;

    let tenc: Vec<f64> = t.iter().flat_map(|&s| timestep_encoding(s, cfg.t_enc_dim)).collect();
    let tenc = tape.constant(t.len(), cfg.t_enc_dim, tenc)?;
    let te = linear(tape, p, "time.0", tenc)?;
    let te = tape.gelu(te);
    let te = linear(tape, p, "time.1", te)?;
    let te = tape.gather_rows(te, &g.circuit_of)?;
    h = tape.add(h, te)?;

    let edge_feat = tape.constant(g.edges(), 4, g.edge_feat.clone())?;
    for b in 0..cfg.blocks {
        h = graph_sublayer(tape, p, cfg, &format!("block{}.graph", b), h, edge_feat, g)?;
        h = mlp_sublayer(tape, p, cfg, &format!("block{}.mlp0", b), h)?;
        h = if cfg.attention {
            attention_sublayer(tape, p, cfg, &format!("block{}.attn", b), h, g)?
        } else {
            graph_sublayer(tape, p, cfg, &format!("block{}.graph2", b), h, edge_feat, g)?
        };
        h = mlp_sublayer(tape, p, cfg, &format!("block{}.mlp1", b), h)?;
    }
    let h = norm(tape, p, "head.norm", h)?;
    linear(tape, p, "head", h)
}

/// Inference-only forward pass returning the flattened noise estimate.
pub fn predict(params: &DenoiserParams, g: &GraphBatch, x_t: &[f64], t: &[usize]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let p = BoundParams::bind(&mut tape, params, false)?;
    let out = forward(&mut tape, &p, &params.config, g, x_t, t)?;
    Ok(tape.value(out).to_vec())
}

/// Replaces every parameter with a fresh normal draw, the output head
/// included; useful for tests that need a non-trivial network.
pub fn randomize(params: &mut DenoiserParams, scale: f64, rng: &mut impl Rng) {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * z;
        }
    }
}
