// SPDX-License-Identifier: Apache-2.0

//! Wirelength, legality and congestion of a placement.
//!
//! Legality only considers movable objects. Fixed objects (pads, terminals)
//! are context for wirelength but are neither scored for overlap nor pushed
//! around by the legality potential.

use rayon::prelude::*;
use serde::Serialize;

use crate::netlist::{Netlist, Placement, Vec2};
use crate::{Error, Result};

/// Nets per call above which [`WireModel::hpwl`] evaluates nets in parallel.
const PAR_NETS: usize = 4096;

/// Axis-aligned region objects must stay inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Boundary {
    pub const CANVAS: Boundary = Boundary {
        lo: Vec2::new(-1.0, -1.0),
        hi: Vec2::new(1.0, 1.0),
    };
}

impl Default for Boundary {
    fn default() -> Self {
        Self::CANVAS
    }
}

/// Pins grouped by net, flattened for repeated wirelength evaluation.
///
/// Built from the netlist's multi-pin nets when present, otherwise from its
/// edges, each edge acting as a 2-pin net.
#[derive(Debug, Clone)]
pub struct WireModel {
    starts: Vec<usize>,
    owner: Vec<usize>,
    offset: Vec<Vec2>,
}

impl WireModel {
    pub fn new(netlist: &Netlist) -> Self {
        let mut starts = vec![0];
        let mut owner = Vec::new();
        let mut offset = Vec::new();
        match &netlist.nets {
            Some(nets) => {
                for net in nets {
                    for p in &net.pins {
                        owner.push(p.owner);
                        offset.push(p.offset);
                    }
                    starts.push(owner.len());
                }
            }
            None => {
                for e in &netlist.edges {
                    owner.extend([e.src, e.dst]);
                    offset.extend([e.attr.src_offset, e.attr.dst_offset]);
                    starts.push(owner.len());
                }
            }
        }
        Self { starts, owner, offset }
    }

    pub fn net_count(&self) -> usize {
        self.starts.len() - 1
    }

    fn pin_pos(&self, coords: &[Vec2], k: usize) -> Vec2 {
        coords[self.owner[k]] + self.offset[k]
    }

    /// Lower-left and upper-right corners of a net's pin bounding box.
    pub fn bbox(&self, coords: &[Vec2], net: usize) -> Option<(Vec2, Vec2)> {
        let (a, b) = (self.starts[net], self.starts[net + 1]);
        if a == b {
            return None;
        }
        let mut lo = self.pin_pos(coords, a);
        let mut hi = lo;
        for k in a + 1..b {
            let p = self.pin_pos(coords, k);
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        Some((lo, hi))
    }

    pub fn net_hpwl(&self, coords: &[Vec2], net: usize) -> f64 {
        match self.bbox(coords, net) {
            Some((lo, hi)) => (hi.x - lo.x) + (hi.y - lo.y),
            None => 0.0,
        }
    }

    /// Total half-perimeter wirelength. Per-net values may be computed in
    /// parallel but are always summed in net order.
    pub fn hpwl(&self, coords: &[Vec2]) -> f64 {
        let n = self.net_count();
        if n >= PAR_NETS {
            let per: Vec<f64> = (0..n).into_par_iter().map(|k| self.net_hpwl(coords, k)).collect();
            per.iter().sum()
        } else {
            (0..n).map(|k| self.net_hpwl(coords, k)).sum()
        }
    }

    /// Adds the wirelength subgradient with respect to object centers to
    /// `grad`. Ties go to the lowest-index pin of the net.
    pub fn add_subgradient(&self, coords: &[Vec2], grad: &mut [Vec2], weight: f64) {
        for net in 0..self.net_count() {
            let (a, b) = (self.starts[net], self.starts[net + 1]);
            if b - a < 2 {
                continue;
            }
            let (mut xmin, mut xmax, mut ymin, mut ymax) = (a, a, a, a);
            let first = self.pin_pos(coords, a);
            let (mut lx, mut hx, mut ly, mut hy) = (first.x, first.x, first.y, first.y);
            for k in a + 1..b {
                let p = self.pin_pos(coords, k);
                if p.x < lx {
                    lx = p.x;
                    xmin = k;
                }
                if p.x > hx {
                    hx = p.x;
                    xmax = k;
                }
                if p.y < ly {
                    ly = p.y;
                    ymin = k;
                }
                if p.y > hy {
                    hy = p.y;
                    ymax = k;
                }
            }
            // A zero-extent axis contributes nothing.
            if xmin != xmax {
                grad[self.owner[xmax]].x += weight;
                grad[self.owner[xmin]].x -= weight;
            }
            if ymin != ymax {
                grad[self.owner[ymax]].y += weight;
                grad[self.owner[ymin]].y -= weight;
            }
        }
    }
}

pub fn hpwl(placement: &Placement, netlist: &Netlist) -> f64 {
    WireModel::new(netlist).hpwl(&placement.coords)
}

pub fn hpwl_subgradient(placement: &Placement, netlist: &Netlist) -> Vec<Vec2> {
    let mut g = vec![Vec2::ZERO; netlist.len()];
    WireModel::new(netlist).add_subgradient(&placement.coords, &mut g, 1.0);
    g
}

fn axis_gaps(ci: Vec2, cj: Vec2, wi: f64, hi: f64, wj: f64, hj: f64) -> (f64, f64) {
    let gx = (ci.x - cj.x).abs() - (wi + wj) / 2.0;
    let gy = (ci.y - cj.y).abs() - (hi + hj) / 2.0;
    (gx, gy)
}

/// Largest per-axis gap between two objects: negative iff they overlap
/// with positive area, zero when touching.
pub fn signed_distance(i: usize, j: usize, placement: &Placement, netlist: &Netlist) -> f64 {
    let (a, b) = (netlist.objects[i], netlist.objects[j]);
    let (gx, gy) = axis_gaps(
        placement.coords[i],
        placement.coords[j],
        a.width,
        a.height,
        b.width,
        b.height,
    );
    gx.max(gy)
}

/// How the pairwise legality term finds candidate pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSearch {
    /// Every unordered pair.
    AllPairs,
    /// Sort by left edge and only visit pairs whose x-extents overlap.
    Sweep,
}

fn movable(netlist: &Netlist) -> Vec<usize> {
    (0..netlist.len()).filter(|&i| !netlist.is_fixed(i)).collect()
}

/// Unordered pairs `(i, j)`, `i < j`, among `active` whose x-extents
/// overlap strictly, in ascending order.
fn x_overlapping_pairs(coords: &[Vec2], netlist: &Netlist, active: &[usize]) -> Vec<(usize, usize)> {
    let span = |i: usize| {
        let w = netlist.objects[i].width / 2.0;
        (coords[i].x - w, coords[i].x + w)
    };
    let mut order: Vec<usize> = active.to_vec();
    order.sort_by(|&a, &b| span(a).0.total_cmp(&span(b).0).then(a.cmp(&b)));
    let mut pairs = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let right = span(i).1;
        for &j in &order[k + 1..] {
            if span(j).0 >= right {
                break;
            }
            pairs.push((i.min(j), i.max(j)));
        }
    }
    pairs.sort_unstable();
    pairs
}

fn candidate_pairs(coords: &[Vec2], netlist: &Netlist, active: &[usize], search: PairSearch) -> Vec<(usize, usize)> {
    match search {
        PairSearch::AllPairs => {
            let mut v = Vec::new();
            for (k, &i) in active.iter().enumerate() {
                for &j in &active[k + 1..] {
                    v.push((i, j));
                }
            }
            v
        }
        PairSearch::Sweep => x_overlapping_pairs(coords, netlist, active),
    }
}

/// Squared-overlap penalty over movable pairs plus one-sided wall penalties,
/// with its exact gradient. Fixed objects get zero gradient.
pub fn legality_potential(placement: &Placement, netlist: &Netlist, boundary: &Boundary) -> (f64, Vec<Vec2>) {
    let search = if netlist.len() > 64 {
        PairSearch::Sweep
    } else {
        PairSearch::AllPairs
    };
    legality_potential_with(placement, netlist, boundary, search)
}

pub fn legality_potential_with(
    placement: &Placement,
    netlist: &Netlist,
    boundary: &Boundary,
    search: PairSearch,
) -> (f64, Vec<Vec2>) {
    let coords = &placement.coords;
    let mut grad = vec![Vec2::ZERO; netlist.len()];
    let mut value = 0.0;
    let active = movable(netlist);
    for (i, j) in candidate_pairs(coords, netlist, &active, search) {
        let (a, b) = (netlist.objects[i], netlist.objects[j]);
        let (gx, gy) = axis_gaps(coords[i], coords[j], a.width, a.height, b.width, b.height);
        let d = gx.max(gy);
        if d >= 0.0 {
            continue;
        }
        value += d * d;
        let slope = 2.0 * d;
        if gx >= gy {
            let s = if coords[i].x >= coords[j].x { 1.0 } else { -1.0 };
            grad[i].x += slope * s;
            grad[j].x -= slope * s;
        } else {
            let s = if coords[i].y >= coords[j].y { 1.0 } else { -1.0 };
            grad[i].y += slope * s;
            grad[j].y -= slope * s;
        }
    }
    for &i in &active {
        let o = netlist.objects[i];
        let c = coords[i];
        let walls = [
            (c.x - o.width / 2.0 - boundary.lo.x, 1.0, true),
            (boundary.hi.x - c.x - o.width / 2.0, -1.0, true),
            (c.y - o.height / 2.0 - boundary.lo.y, 1.0, false),
            (boundary.hi.y - c.y - o.height / 2.0, -1.0, false),
        ];
        for (d, dd, is_x) in walls {
            if d < 0.0 {
                value += d * d;
                if is_x {
                    grad[i].x += 2.0 * d * dd;
                } else {
                    grad[i].y += 2.0 * d * dd;
                }
            }
        }
    }
    (value, grad)
}

/// Pairs of movable objects that overlap with positive area, ascending.
pub fn overlapping_pairs(placement: &Placement, netlist: &Netlist) -> Vec<(usize, usize)> {
    let coords = &placement.coords;
    let active = movable(netlist);
    x_overlapping_pairs(coords, netlist, &active)
        .into_iter()
        .filter(|&(i, j)| signed_distance(i, j, placement, netlist) < 0.0)
        .collect()
}

fn in_bounds(placement: &Placement, netlist: &Netlist, i: usize, b: &Boundary) -> bool {
    let o = netlist.objects[i];
    let c = placement.coords[i];
    c.x - o.width / 2.0 >= b.lo.x
        && c.x + o.width / 2.0 <= b.hi.x
        && c.y - o.height / 2.0 >= b.lo.y
        && c.y + o.height / 2.0 <= b.hi.y
}

/// Union area of movable objects clipped to the canvas, divided by the
/// sum of their areas.
pub fn legality_score(placement: &Placement, netlist: &Netlist) -> Result<f64> {
    let active = movable(netlist);
    let total: f64 = active.iter().map(|&i| netlist.objects[i].area()).sum();
    if !(total > 0.0) {
        return Err(Error::Metric("legality is undefined for zero total object area".into()));
    }
    let b = Boundary::CANVAS;
    // The sweep below sums many products; report disjoint, in-bounds
    // layouts as exactly legal rather than up to rounding.
    if active.iter().all(|&i| in_bounds(placement, netlist, i, &b)) && overlapping_pairs(placement, netlist).is_empty()
    {
        return Ok(1.0);
    }
    let rects: Vec<[f64; 4]> = active
        .iter()
        .filter_map(|&i| {
            let o = netlist.objects[i];
            let c = placement.coords[i];
            let x0 = (c.x - o.width / 2.0).max(b.lo.x);
            let x1 = (c.x + o.width / 2.0).min(b.hi.x);
            let y0 = (c.y - o.height / 2.0).max(b.lo.y);
            let y1 = (c.y + o.height / 2.0).min(b.hi.y);
            (x1 > x0 && y1 > y0).then_some([x0, y0, x1, y1])
        })
        .collect();
    Ok(union_area(&rects) / total)
}

/// Area of the union of rectangles `[x0, y0, x1, y1]`.
pub fn union_area(rects: &[[f64; 4]]) -> f64 {
    if rects.is_empty() {
        return 0.0;
    }
    let mut ys: Vec<f64> = rects.iter().flat_map(|r| [r[1], r[3]]).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let y_index = |y: f64| ys.binary_search_by(|v| v.total_cmp(&y)).unwrap();
    let mut events: Vec<(f64, i32, usize, usize)> = Vec::with_capacity(rects.len() * 2);
    for r in rects {
        let (a, b) = (y_index(r[1]), y_index(r[3]));
        events.push((r[0], 1, a, b));
        events.push((r[2], -1, a, b));
    }
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut tree = CoverTree::new(&ys);
    let mut area = 0.0;
    for k in 0..events.len() {
        let (x, delta, a, b) = events[k];
        tree.update(1, 0, ys.len() - 1, a, b, delta);
        if k + 1 < events.len() {
            area += tree.covered() * (events[k + 1].0 - x);
        }
    }
    area
}

/// Segment tree over elementary y-intervals tracking covered length.
struct CoverTree<'a> {
    ys: &'a [f64],
    count: Vec<i32>,
    len: Vec<f64>,
}

impl<'a> CoverTree<'a> {
    fn new(ys: &'a [f64]) -> Self {
        let n = ys.len().max(2);
        Self {
            ys,
            count: vec![0; 4 * n],
            len: vec![0.0; 4 * n],
        }
    }

    fn covered(&self) -> f64 {
        self.len[1]
    }

    // Node covers ys[lo]..ys[hi]; update range ys[a]..ys[b].
    fn update(&mut self, node: usize, lo: usize, hi: usize, a: usize, b: usize, delta: i32) {
        if b <= lo || hi <= a || hi <= lo {
            return;
        }
        if a <= lo && hi <= b {
            self.count[node] += delta;
        } else {
            let mid = (lo + hi) / 2;
            self.update(2 * node, lo, mid, a, b, delta);
            self.update(2 * node + 1, mid, hi, a, b, delta);
        }
        self.len[node] = if self.count[node] > 0 {
            self.ys[hi] - self.ys[lo]
        } else if hi - lo == 1 {
            0.0
        } else {
            self.len[2 * node] + self.len[2 * node + 1]
        };
    }
}

/// Routing-demand grid over the canvas, row-major from the bottom row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RudyMap {
    pub grid_n: usize,
    pub cells: Vec<f64>,
}

impl RudyMap {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.cells[iy * self.grid_n + ix]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// Mean of the densest 10% of cells (at least one cell).
    pub fn top_decile_mean(&self) -> f64 {
        let n = self.cells.len();
        let k = n.div_ceil(10).max(1);
        let mut sorted = self.cells.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted[..k].iter().sum::<f64>() / k as f64
    }
}

pub const DEFAULT_RUDY_GRID: usize = 256;

/// Net bounding box used for congestion, with degenerate extents widened to
/// one cell pitch around their center.
pub fn rudy_box(lo: Vec2, hi: Vec2, pitch: f64) -> (Vec2, Vec2) {
    let widen = |a: f64, b: f64| {
        if b - a < pitch {
            let c = (a + b) / 2.0;
            (c - pitch / 2.0, c + pitch / 2.0)
        } else {
            (a, b)
        }
    };
    let (x0, x1) = widen(lo.x, hi.x);
    let (y0, y1) = widen(lo.y, hi.y);
    (Vec2::new(x0, y0), Vec2::new(x1, y1))
}

/// RUDY congestion map and its scalar summary.
pub fn rudy(placement: &Placement, netlist: &Netlist, grid_n: usize) -> Result<(RudyMap, f64)> {
    if grid_n == 0 {
        return Err(Error::Config("RUDY grid must have at least one cell".into()));
    }
    let wires = WireModel::new(netlist);
    let pitch = 2.0 / grid_n as f64;
    let cell_area = pitch * pitch;
    let mut cells = vec![0.0; grid_n * grid_n];
    let edge = |i: usize| -1.0 + i as f64 * pitch;
    let cell_range = |a: f64, b: f64| {
        let lo = (((a + 1.0) / pitch).floor().max(0.0) as usize).min(grid_n);
        let hi = (((b + 1.0) / pitch).ceil().max(0.0) as usize).min(grid_n);
        lo..hi
    };
    for net in 0..wires.net_count() {
        let Some((lo, hi)) = wires.bbox(&placement.coords, net) else {
            continue;
        };
        let (lo, hi) = rudy_box(lo, hi, pitch);
        let (dx, dy) = (hi.x - lo.x, hi.y - lo.y);
        let density = (dx + dy) / (dx * dy);
        for iy in cell_range(lo.y, hi.y) {
            let oy = hi.y.min(edge(iy + 1)) - lo.y.max(edge(iy));
            if oy <= 0.0 {
                continue;
            }
            for ix in cell_range(lo.x, hi.x) {
                let ox = hi.x.min(edge(ix + 1)) - lo.x.max(edge(ix));
                if ox > 0.0 {
                    cells[iy * grid_n + ix] += density * ox * oy / cell_area;
                }
            }
        }
    }
    let map = RudyMap { grid_n, cells };
    let scalar = map.top_decile_mean();
    Ok((map, scalar))
}

pub fn hpwl_ratio(generated: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::Metric(format!(
            "reference wirelength must be positive, got {}",
            reference
        )));
    }
    Ok(generated / reference)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub hpwl: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hpwl_original_units: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hpwl_ratio: Option<f64>,
    pub legality: f64,
    pub rudy_scalar: f64,
    pub rudy_grid: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rudy_map: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions<'a> {
    pub grid_n: usize,
    /// Original length per normalized unit.
    pub unit_scale: Option<f64>,
    /// Reference placement for the wirelength ratio.
    pub reference: Option<&'a Placement>,
    pub include_map: bool,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        Self {
            grid_n: DEFAULT_RUDY_GRID,
            unit_scale: None,
            reference: None,
            include_map: false,
        }
    }
}

pub fn evaluate(placement: &Placement, netlist: &Netlist, opts: &EvalOptions) -> Result<MetricReport> {
    if placement.len() != netlist.len() {
        return Err(Error::InvalidNetlist(format!(
            "placement has {} coordinates for {} objects",
            placement.len(),
            netlist.len()
        )));
    }
    let wires = WireModel::new(netlist);
    let h = wires.hpwl(&placement.coords);
    let hpwl_ratio = match opts.reference {
        Some(r) => Some(hpwl_ratio(h, wires.hpwl(&r.coords))?),
        None => None,
    };
    let (map, rudy_scalar) = rudy(placement, netlist, opts.grid_n)?;
    Ok(MetricReport {
        hpwl: h,
        hpwl_original_units: opts.unit_scale.map(|s| h * s),
        hpwl_ratio,
        legality: legality_score(placement, netlist)?,
        rudy_scalar,
        rudy_grid: opts.grid_n,
        rudy_map: opts.include_map.then_some(map.cells),
    })
}
