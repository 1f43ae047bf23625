// SPDX-License-Identifier: Apache-2.0

//! Synthetic circuits built backwards from a legal placement.
//!
//! Objects are dropped at random positions until a target area density is
//! reached, pins are scattered over their outlines, and edges are drawn
//! between pin pairs with a probability that decays with pin distance. The
//! resulting placement is legal by construction and short-wired for its
//! netlist.

use std::time::Instant;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::dataset::{DatasetRecord, DatasetWriter, RecordMeta};
use crate::netlist::{Edge, Netlist, ObjectGeom, Pin, Placement, Vec2};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    pub low: f64,
    pub high: f64,
}

impl Uniform {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.high > self.low {
            rng.random_range(self.low..self.high)
        } else {
            self.low
        }
    }
}

/// Exponential length clamped to `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippedExp {
    pub scale: f64,
    pub min: f64,
    pub max: f64,
}

impl ClippedExp {
    fn sample(&self, scale_factor: f64, rng: &mut impl Rng) -> f64 {
        let exp = Exp::new(1.0 / (self.scale * scale_factor)).expect("positive rate");
        exp.sample(rng).clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeDistKind {
    Exponential,
    Sigmoid,
    Linear,
}

impl std::str::FromStr for EdgeDistKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(Self::Exponential),
            "sigmoid" => Ok(Self::Sigmoid),
            "linear" => Ok(Self::Linear),
            _ => Err(Error::Config(format!("unknown edge distribution '{}'", s))),
        }
    }
}

/// Edge length scale: a constant or log-uniform per circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSpec {
    Fixed(f64),
    LogUniform { low: f64, high: f64 },
}

impl ScaleSpec {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ScaleSpec::Fixed(s) => s,
            ScaleSpec::LogUniform { low, high } => {
                if high > low {
                    rng.random_range(low.ln()..high.ln()).exp().clamp(low, high)
                } else {
                    low
                }
            }
        }
    }
}

/// Edge-count multiplier: a constant or `coef * s^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSpec {
    Fixed(f64),
    PowerLaw { coef: f64, exponent: f64 },
}

impl GammaSpec {
    pub fn at(&self, s: f64) -> f64 {
        match *self {
            GammaSpec::Fixed(g) => g,
            GammaSpec::PowerLaw { coef, exponent } => coef * s.powf(exponent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    /// Fraction of the canvas to cover before stopping.
    pub stop_density: Uniform,
    /// Short side over long side.
    pub aspect_ratio: Uniform,
    /// Square root of object area.
    pub size_dist: ClippedExp,
    pub pin_powerlaw_exponent: f64,
    pub pin_min: u32,
    pub pin_max: u32,
    pub edge_dist_kind: EdgeDistKind,
    pub scale_s: ScaleSpec,
    pub gamma: GammaSpec,
    pub p_max: f64,
    /// Position attempts per object before shrinking it.
    pub placement_retry_limit: u32,
    /// Total size draws per circuit before giving up on the density target.
    pub max_object_attempts: u32,
}

impl SynthParams {
    pub fn v0() -> Self {
        Self {
            stop_density: Uniform { low: 0.75, high: 0.9 },
            aspect_ratio: Uniform { low: 0.25, high: 1.0 },
            size_dist: ClippedExp {
                scale: 0.08,
                min: 0.02,
                max: 1.0,
            },
            pin_powerlaw_exponent: 1.85,
            pin_min: 1,
            pin_max: 32,
            edge_dist_kind: EdgeDistKind::Exponential,
            scale_s: ScaleSpec::Fixed(0.2),
            gamma: GammaSpec::Fixed(0.21),
            p_max: 0.9,
            placement_retry_limit: 100,
            max_object_attempts: 10_000,
        }
    }

    pub fn v1() -> Self {
        Self {
            scale_s: ScaleSpec::LogUniform { low: 0.05, high: 1.6 },
            gamma: GammaSpec::PowerLaw {
                coef: 0.212,
                exponent: -1.42,
            },
            ..Self::v0()
        }
    }

    pub fn v2() -> Self {
        Self {
            size_dist: ClippedExp {
                scale: 0.04,
                min: 0.01,
                max: 0.5,
            },
            scale_s: ScaleSpec::LogUniform { low: 0.025, high: 0.8 },
            gamma: GammaSpec::PowerLaw {
                coef: 0.00792,
                exponent: -1.42,
            },
            ..Self::v0()
        }
    }

    /// Small circuits (mostly 10 to 40 objects) for quick experiments. The
    /// longer edge scale keeps about 100 edges per circuit.
    pub fn toy() -> Self {
        Self {
            size_dist: ClippedExp {
                scale: 0.25,
                min: 0.1,
                max: 1.0,
            },
            scale_s: ScaleSpec::Fixed(0.4),
            gamma: GammaSpec::Fixed(0.5),
            ..Self::v0()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            "v0" => Ok(Self::v0()),
            "v1" => Ok(Self::v1()),
            "v2" => Ok(Self::v2()),
            _ => Err(Error::Config(format!("unknown preset '{}'", name))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let d = self.stop_density;
        if !(0.0 < d.low && d.low <= d.high && d.high < 1.0) {
            return bad("stop density must satisfy 0 < low <= high < 1");
        }
        let a = self.aspect_ratio;
        if !(0.0 < a.low && a.low <= a.high && a.high <= 1.0) {
            return bad("aspect ratio must satisfy 0 < low <= high <= 1");
        }
        let s = self.size_dist;
        if !(s.scale > 0.0 && 0.0 < s.min && s.min <= s.max && s.max <= 2.0) {
            return bad("size distribution needs scale > 0 and 0 < min <= max <= 2");
        }
        if self.pin_min == 0 || self.pin_min > self.pin_max {
            return bad("pin range must satisfy 1 <= pin_min <= pin_max");
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return bad("p_max must lie in (0, 1]");
        }
        match self.scale_s {
            ScaleSpec::Fixed(v) if v > 0.0 => {}
            ScaleSpec::LogUniform { low, high } if low > 0.0 && low <= high => {}
            _ => return bad("edge scale must be positive"),
        }
        if self.placement_retry_limit == 0 || self.max_object_attempts == 0 {
            return bad("retry limits must be positive");
        }
        Ok(())
    }
}

/// Edge probability for pins `l` apart (L1) at scale `s`, capped at `p_max`.
pub fn edge_probability(l: f64, kind: EdgeDistKind, s: f64, gamma: f64, p_max: f64) -> f64 {
    let raw = match kind {
        EdgeDistKind::Exponential => gamma * (-l / s).exp(),
        EdgeDistKind::Sigmoid => gamma / (1.0 + (s - l).exp()),
        EdgeDistKind::Linear => gamma * ((s - l) / s).max(0.0),
    };
    raw.clamp(0.0, p_max)
}

/// Uniform bucket grid over the canvas for overlap queries.
struct OccupancyGrid {
    n: usize,
    cells: Vec<Vec<usize>>,
    rects: Vec<[f64; 4]>,
}

impl OccupancyGrid {
    fn new(n: usize) -> Self {
        Self {
            n,
            cells: vec![Vec::new(); n * n],
            rects: Vec::new(),
        }
    }

    fn span(&self, a: f64, b: f64) -> std::ops::RangeInclusive<usize> {
        let f = |v: f64| (((v + 1.0) / 2.0 * self.n as f64).floor().max(0.0) as usize).min(self.n - 1);
        f(a)..=f(b)
    }

    fn overlaps(&self, r: &[f64; 4]) -> bool {
        for iy in self.span(r[1], r[3]) {
            for ix in self.span(r[0], r[2]) {
                for &k in &self.cells[iy * self.n + ix] {
                    let q = &self.rects[k];
                    if r[0] < q[2] && q[0] < r[2] && r[1] < q[3] && q[1] < r[3] {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn insert(&mut self, r: [f64; 4]) {
        let k = self.rects.len();
        for iy in self.span(r[1], r[3]) {
            for ix in self.span(r[0], r[2]) {
                self.cells[iy * self.n + ix].push(k);
            }
        }
        self.rects.push(r);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSample {
    pub objects: Vec<ObjectGeom>,
    pub placement: Placement,
    /// Fraction of the canvas covered by the placed objects.
    pub placed_density: f64,
    /// Set when the attempt cap ran out before the density target.
    pub incomplete: bool,
}

/// Width and height for an object of area `length^2` and the given aspect
/// ratio, long side along a random axis.
fn object_dims(length: f64, aspect: f64, rng: &mut impl Rng) -> (f64, f64) {
    let r = aspect.sqrt();
    let (short, long) = (length * r, (length / r).min(2.0));
    if rng.random_bool(0.5) {
        (long, short)
    } else {
        (short, long)
    }
}

/// Draws objects and drops each at a random legal position until the drawn
/// area reaches `stop_density` of the canvas.
///
/// An object that finds no free spot within `placement_retry_limit` tries is
/// replaced once by a draw at half the size scale; if that also fails it is
/// skipped. Skipped area still counts toward the target, because random
/// rejection placement jams well below the densities the target asks for.
pub fn sample_objects(params: &SynthParams, stop_density: f64, rng: &mut impl Rng) -> ObjectSample {
    let target = stop_density * 4.0;
    let mut grid = OccupancyGrid::new(32);
    let mut objects = Vec::new();
    let mut coords = Vec::new();
    let mut drawn = 0.0;
    let mut placed = 0.0;
    let mut attempts = 0;
    let mut shrink = 1.0;
    let mut incomplete = false;
    while drawn < target {
        if attempts >= params.max_object_attempts {
            incomplete = true;
            break;
        }
        attempts += 1;
        let length = params.size_dist.sample(shrink, rng);
        let (w, h) = object_dims(length, params.aspect_ratio.sample(rng), rng);
        drawn += w * h;
        let mut ok = false;
        for _ in 0..params.placement_retry_limit {
            let cx = rng.random_range(-1.0 + w / 2.0..=1.0 - w / 2.0);
            let cy = rng.random_range(-1.0 + h / 2.0..=1.0 - h / 2.0);
            let r = [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0];
            if !grid.overlaps(&r) {
                grid.insert(r);
                objects.push(ObjectGeom::new(w, h));
                coords.push(Vec2::new(cx, cy));
                placed += w * h;
                ok = true;
                break;
            }
        }
        shrink = if ok || shrink < 1.0 { 1.0 } else { 0.5 };
    }
    ObjectSample {
        objects,
        placement: Placement::new(coords),
        placed_density: placed / 4.0,
        incomplete,
    }
}

/// Draws pin counts from a discrete power law and hands the largest counts
/// to the largest objects; offsets are uniform on each outline.
pub fn sample_pins(objects: &[ObjectGeom], params: &SynthParams, rng: &mut impl Rng) -> Vec<Pin> {
    if objects.is_empty() {
        return Vec::new();
    }
    let mut counts = power_law_counts(
        objects.len(),
        params.pin_min,
        params.pin_max,
        params.pin_powerlaw_exponent,
        rng,
    );
    counts.sort_unstable();
    let mut by_area: Vec<usize> = (0..objects.len()).collect();
    by_area.sort_by(|&a, &b| objects[a].area().total_cmp(&objects[b].area()).then(a.cmp(&b)));
    let mut per_object = vec![0; objects.len()];
    for (rank, &i) in by_area.iter().enumerate() {
        per_object[i] = counts[rank];
    }
    let mut pins = Vec::new();
    for (i, o) in objects.iter().enumerate() {
        for _ in 0..per_object[i] {
            pins.push(Pin::new(i, perimeter_point(o, rng.random_range(0.0..1.0))));
        }
    }
    pins
}

/// `n` independent draws from `P(k) ∝ k^-exponent` on `[min, max]`.
pub fn power_law_counts(n: usize, min: u32, max: u32, exponent: f64, rng: &mut impl Rng) -> Vec<u32> {
    let weights: Vec<f64> = (min..=max).map(|k| (k as f64).powf(-exponent)).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    (0..n).map(|_| min + dist.sample(rng) as u32).collect()
}

/// Point on the outline of `o` at fraction `u` of its perimeter.
fn perimeter_point(o: &ObjectGeom, u: f64) -> Vec2 {
    let (w, h) = (o.width, o.height);
    let mut d = u * 2.0 * (w + h);
    let (hw, hh) = (w / 2.0, h / 2.0);
    if d < w {
        return Vec2::new(-hw + d, -hh);
    }
    d -= w;
    if d < h {
        return Vec2::new(hw, -hh + d);
    }
    d -= h;
    if d < w {
        return Vec2::new(hw - d, hh);
    }
    d -= w;
    Vec2::new(-hw, (hh - d).max(-hh))
}

/// Bernoulli edge for every pin pair on different objects.
pub fn sample_edges(
    pins: &[Pin],
    placement: &Placement,
    kind: EdgeDistKind,
    s: f64,
    gamma: f64,
    p_max: f64,
    rng: &mut impl Rng,
) -> Vec<Edge> {
    let abs: Vec<Vec2> = pins.iter().map(|p| placement.coords[p.owner] + p.offset).collect();
    let mut edges = Vec::new();
    for a in 0..pins.len() {
        for b in a + 1..pins.len() {
            if pins[a].owner == pins[b].owner {
                continue;
            }
            let l = (abs[a].x - abs[b].x).abs() + (abs[a].y - abs[b].y).abs();
            let p = edge_probability(l, kind, s, gamma, p_max);
            if p > 0.0 && rng.random_bool(p) {
                edges.push(Edge::new(pins[a].owner, pins[b].owner, pins[a].offset, pins[b].offset));
            }
        }
    }
    edges
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitMeta {
    pub scale_s: f64,
    pub gamma: f64,
    pub stop_density: f64,
    pub placed_density: f64,
    pub objects: usize,
    pub pins: usize,
    pub edges: usize,
    pub incomplete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub netlist: Netlist,
    pub placement: Placement,
    pub pins: Vec<Pin>,
    pub meta: CircuitMeta,
}

/// One circuit; a pure function of `(params, seed)`.
pub fn generate_circuit(params: &SynthParams, seed: u64) -> Result<Circuit> {
    params.validate()?;
    let mut draws: ChaCha8Rng = rng::stream(seed, "gen/params", 0);
    let stop_density = params.stop_density.sample(&mut draws);
    let s = params.scale_s.sample(&mut draws);
    let gamma = params.gamma.at(s);
    let mut r = rng::stream(seed, "gen/objects", 0);
    let objs = sample_objects(params, stop_density, &mut r);
    if objs.incomplete {
        warn!(
            "circuit seed {}: stopped at {} objects before reaching density {:.3}",
            seed,
            objs.objects.len(),
            stop_density
        );
    }
    let mut r = rng::stream(seed, "gen/pins", 0);
    let pins = sample_pins(&objs.objects, params, &mut r);
    let mut r = rng::stream(seed, "gen/edges", 0);
    let edges = sample_edges(
        &pins,
        &objs.placement,
        params.edge_dist_kind,
        s,
        gamma,
        params.p_max,
        &mut r,
    );
    let meta = CircuitMeta {
        scale_s: s,
        gamma,
        stop_density,
        placed_density: objs.placed_density,
        objects: objs.objects.len(),
        pins: pins.len(),
        edges: edges.len(),
        incomplete: objs.incomplete,
    };
    let mut netlist = Netlist::new(objs.objects);
    netlist.edges = edges;
    Ok(Circuit {
        netlist,
        placement: objs.placement,
        pins,
        meta,
    })
}

pub fn circuit_record(params_version: &str, index: u64, seed: u64, c: Circuit) -> DatasetRecord {
    DatasetRecord {
        circuit_id: index,
        objects: c.netlist.objects,
        pins: c.pins,
        edges: c.netlist.edges,
        placement: c.placement.coords,
        metadata: RecordMeta {
            scale_s: Some(c.meta.scale_s),
            gamma: Some(c.meta.gamma),
            stop_density: Some(c.meta.stop_density),
            seed: Some(seed),
            generator: Some(params_version.to_string()),
            incomplete: c.meta.incomplete,
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub count: usize,
    pub objects: Summary,
    pub edges: Summary,
    pub pins: Summary,
    pub incomplete: usize,
    /// Edge L1 pin-to-pin lengths binned by `edge_length_bin`.
    pub edge_length_bin: f64,
    pub edge_length_histogram: Vec<u64>,
    pub elapsed_secs: f64,
    pub circuits_per_sec: f64,
}

const LENGTH_BIN: f64 = 0.05;
const LENGTH_BINS: usize = 80;

pub fn edge_lengths<'a>(netlist: &'a Netlist, placement: &'a Placement) -> impl Iterator<Item = f64> + 'a {
    let coords = &placement.coords;
    netlist.edges.iter().map(move |e| {
        let a = coords[e.src] + e.attr.src_offset;
        let b = coords[e.dst] + e.attr.dst_offset;
        (a.x - b.x).abs() + (a.y - b.y).abs()
    })
}

/// Generates `count` circuits with `workers` threads and streams them to
/// `sink` in index order. Circuit `k` uses seed `seed ^ k`.
pub fn generate_dataset(
    params: &SynthParams,
    label: &str,
    count: usize,
    seed: u64,
    workers: usize,
    sink: &mut DatasetWriter,
) -> Result<DatasetStats> {
    params.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut objects = Vec::with_capacity(count);
    let mut edges = Vec::with_capacity(count);
    let mut pins = Vec::with_capacity(count);
    let mut hist = vec![0u64; LENGTH_BINS];
    let mut incomplete = 0;
    let chunk = (workers.max(1) * 4).max(1);
    for lo in (0..count).step_by(chunk) {
        let hi = (lo + chunk).min(count);
        let batch: Vec<Result<Circuit>> = pool.install(|| {
            (lo..hi)
                .into_par_iter()
                .map(|k| generate_circuit(params, seed ^ k as u64))
                .collect()
        });
        for (k, c) in (lo..hi).zip(batch) {
            let c = c?;
            objects.push(c.meta.objects as f64);
            edges.push(c.meta.edges as f64);
            pins.push(c.meta.pins as f64);
            incomplete += c.meta.incomplete as usize;
            for l in edge_lengths(&c.netlist, &c.placement) {
                let b = ((l / LENGTH_BIN) as usize).min(LENGTH_BINS - 1);
                hist[b] += 1;
            }
            sink.write(&circuit_record(label, k as u64, seed ^ k as u64, c))?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(DatasetStats {
        count,
        objects: Summary::of(&objects),
        edges: Summary::of(&edges),
        pins: Summary::of(&pins),
        incomplete,
        edge_length_bin: LENGTH_BIN,
        edge_length_histogram: hist,
        elapsed_secs: elapsed,
        circuits_per_sec: if elapsed > 0.0 { count as f64 / elapsed } else { 0.0 },
    })
}
