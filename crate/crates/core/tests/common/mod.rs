// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use diffplace::{Edge, Net, Netlist, ObjectGeom, Pin, Placement, Vec2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random rectangles scattered over (and slightly past) the canvas.
pub fn random_layout(r: &mut impl Rng, n: usize, max_side: f64) -> (Netlist, Placement) {
    let objects = (0..n)
        .map(|_| ObjectGeom::new(r.random_range(0.02..max_side), r.random_range(0.02..max_side)))
        .collect();
    let coords = (0..n)
        .map(|_| Vec2::new(r.random_range(-1.1..1.1), r.random_range(-1.1..1.1)))
        .collect();
    (Netlist::new(objects), Placement::new(coords))
}

fn random_pin(r: &mut impl Rng, nl: &Netlist, owner: usize) -> Pin {
    let o = nl.objects[owner];
    Pin {
        owner,
        offset: Vec2::new(
            r.random_range(-0.5..0.5) * o.width,
            r.random_range(-0.5..0.5) * o.height,
        ),
    }
}

/// Adds `count` random multi-pin nets of degree 2..=max_degree.
pub fn add_nets(r: &mut impl Rng, nl: &mut Netlist, count: usize, max_degree: usize) {
    let n = nl.len();
    let nets = (0..count)
        .map(|_| {
            let d = r.random_range(2..=max_degree);
            Net {
                name: None,
                pins: (0..d)
                    .map(|_| {
                        let owner = r.random_range(0..n);
                        random_pin(r, nl, owner)
                    })
                    .collect(),
            }
        })
        .collect();
    nl.nets = Some(nets);
}

/// Adds `count` random pin-to-pin edges between distinct objects.
pub fn add_edges(r: &mut impl Rng, nl: &mut Netlist, count: usize) {
    let n = nl.len();
    for _ in 0..count {
        let a = r.random_range(0..n);
        let mut b = r.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let (pa, pb) = (random_pin(r, nl, a), random_pin(r, nl, b));
        nl.edges.push(Edge::new(a, b, pa.offset, pb.offset));
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub mod oracle {
    use super::*;

    /// Half-perimeter wirelength by an explicit loop over pins, using nets
    /// when present and edges otherwise.
    pub fn naive_hpwl(p: &Placement, nl: &Netlist) -> f64 {
        let mut groups: Vec<Vec<Vec2>> = Vec::new();
        match &nl.nets {
            Some(nets) => {
                for net in nets {
                    groups.push(net.pins.iter().map(|q| p.coords[q.owner] + q.offset).collect());
                }
            }
            None => {
                for e in &nl.edges {
                    groups.push(vec![
                        p.coords[e.src] + e.attr.src_offset,
                        p.coords[e.dst] + e.attr.dst_offset,
                    ]);
                }
            }
        }
        let mut total = 0.0;
        for g in groups {
            if g.is_empty() {
                continue;
            }
            let (mut x0, mut x1, mut y0, mut y1) = (g[0].x, g[0].x, g[0].y, g[0].y);
            for q in &g[1..] {
                x0 = x0.min(q.x);
                x1 = x1.max(q.x);
                y0 = y0.min(q.y);
                y1 = y1.max(q.y);
            }
            total += (x1 - x0) + (y1 - y0);
        }
        total
    }

    /// Legality by rasterizing the canvas: one jittered sample in each of
    /// `k x k` strata, counting samples inside at least one movable object.
    pub fn mc_legality(p: &Placement, nl: &Netlist, k: usize, r: &mut impl Rng) -> f64 {
        let movable: Vec<usize> = (0..nl.len()).filter(|&i| !nl.is_fixed(i)).collect();
        let total: f64 = movable.iter().map(|&i| nl.objects[i].area()).sum();
        let rects: Vec<[f64; 4]> = movable
            .iter()
            .map(|&i| {
                let (o, c) = (nl.objects[i], p.coords[i]);
                [
                    c.x - o.width / 2.0,
                    c.y - o.height / 2.0,
                    c.x + o.width / 2.0,
                    c.y + o.height / 2.0,
                ]
            })
            .collect();
        let cell = 2.0 / k as f64;
        let mut hits = 0usize;
        for iy in 0..k {
            // Rectangles touching this stratum row.
            let (ry0, ry1) = (-1.0 + iy as f64 * cell, -1.0 + (iy + 1) as f64 * cell);
            let row: Vec<&[f64; 4]> = rects.iter().filter(|q| q[1] < ry1 && q[3] > ry0).collect();
            for ix in 0..k {
                let x = -1.0 + (ix as f64 + r.random::<f64>()) * cell;
                let y = ry0 + r.random::<f64>() * cell;
                if row.iter().any(|q| x >= q[0] && x < q[2] && y >= q[1] && y < q[3]) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (k * k) as f64 * 4.0 / total
    }

    /// RUDY by visiting every cell for every net.
    pub fn brute_rudy(p: &Placement, nl: &Netlist, n: usize) -> Vec<f64> {
        let pitch = 2.0 / n as f64;
        let mut cells = vec![0.0; n * n];
        let mut boxes = Vec::new();
        let mut push = |pins: Vec<Vec2>| {
            let x0 = pins.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
            let x1 = pins.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
            let y0 = pins.iter().map(|q| q.y).fold(f64::INFINITY, f64::min);
            let y1 = pins.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max);
            boxes.push([x0, y0, x1, y1]);
        };
        match &nl.nets {
            Some(nets) => nets
                .iter()
                .filter(|n| !n.pins.is_empty())
                .for_each(|net| push(net.pins.iter().map(|q| p.coords[q.owner] + q.offset).collect())),
            None => nl.edges.iter().for_each(|e| {
                push(vec![
                    p.coords[e.src] + e.attr.src_offset,
                    p.coords[e.dst] + e.attr.dst_offset,
                ])
            }),
        }
        for b in boxes {
            // Extents thinner than a cell are widened to one cell pitch.
            let (mut x0, mut y0, mut x1, mut y1) = (b[0], b[1], b[2], b[3]);
            if x1 - x0 < pitch {
                let c = 0.5 * (x0 + x1);
                x0 = c - pitch / 2.0;
                x1 = c + pitch / 2.0;
            }
            if y1 - y0 < pitch {
                let c = 0.5 * (y0 + y1);
                y0 = c - pitch / 2.0;
                y1 = c + pitch / 2.0;
            }
            let density = ((x1 - x0) + (y1 - y0)) / ((x1 - x0) * (y1 - y0));
            for iy in 0..n {
                for ix in 0..n {
                    let (cx0, cy0) = (-1.0 + ix as f64 * pitch, -1.0 + iy as f64 * pitch);
                    let ox = (x1.min(cx0 + pitch) - x0.max(cx0)).max(0.0);
                    let oy = (y1.min(cy0 + pitch) - y0.max(cy0)).max(0.0);
                    cells[iy * n + ix] += density * ox * oy / (pitch * pitch);
                }
            }
        }
        cells
    }

    /// Central finite differences of `f` with respect to every coordinate.
    pub fn fd_gradient(p: &Placement, h: f64, f: impl Fn(&Placement) -> f64) -> Vec<Vec2> {
        let mut q = p.clone();
        let mut out = vec![Vec2::ZERO; p.len()];
        for i in 0..p.len() {
            for axis in 0..2 {
                let orig = if axis == 0 { q.coords[i].x } else { q.coords[i].y };
                let set = |q: &mut Placement, v: f64| {
                    if axis == 0 {
                        q.coords[i].x = v
                    } else {
                        q.coords[i].y = v
                    }
                };
                set(&mut q, orig + h);
                let up = f(&q);
                set(&mut q, orig - h);
                let down = f(&q);
                set(&mut q, orig);
                let d = (up - down) / (2.0 * h);
                if axis == 0 {
                    out[i].x = d
                } else {
                    out[i].y = d
                }
            }
        }
        out
    }

    /// True when every pairwise overlap and wall violation is at least
    /// `margin` away from a kink of the legality potential.
    pub fn legality_smooth(p: &Placement, nl: &Netlist, margin: f64) -> bool {
        for i in 0..nl.len() {
            let (a, ci) = (nl.objects[i], p.coords[i]);
            for d in [
                ci.x - a.width / 2.0 + 1.0,
                1.0 - ci.x - a.width / 2.0,
                ci.y - a.height / 2.0 + 1.0,
                1.0 - ci.y - a.height / 2.0,
            ] {
                if d.abs() < margin {
                    return false;
                }
            }
            for j in i + 1..nl.len() {
                let (b, cj) = (nl.objects[j], p.coords[j]);
                let gx = (ci.x - cj.x).abs() - (a.width + b.width) / 2.0;
                let gy = (ci.y - cj.y).abs() - (a.height + b.height) / 2.0;
                let d = gx.max(gy);
                if d.abs() < margin || (d < 0.0 && (gx - gy).abs() < margin) {
                    return false;
                }
                if (ci.x - cj.x).abs() < margin || (ci.y - cj.y).abs() < margin {
                    return false;
                }
            }
        }
        true
    }

    /// True when every net's extreme pins are unique by at least `margin`.
    pub fn hpwl_smooth(p: &Placement, nl: &Netlist, margin: f64) -> bool {
        let nets: Vec<Vec<Vec2>> = match &nl.nets {
            Some(nets) => nets
                .iter()
                .map(|n| n.pins.iter().map(|q| p.coords[q.owner] + q.offset).collect())
                .collect(),
            None => nl
                .edges
                .iter()
                .map(|e| vec![p.coords[e.src] + e.attr.src_offset, p.coords[e.dst] + e.attr.dst_offset])
                .collect(),
        };
        for pins in nets {
            for axis in 0..2 {
                let mut v: Vec<f64> = pins.iter().map(|q| if axis == 0 { q.x } else { q.y }).collect();
                v.sort_by(f64::total_cmp);
                let k = v.len();
                if k >= 2 && (v[1] - v[0] < margin || v[k - 1] - v[k - 2] < margin) {
                    return false;
                }
            }
        }
        true
    }
}

/// Acceptance-rate fit for distance-dependent edge sampling.
pub mod acceptance {
    use diffplace::{Edge, Pin, Placement};

    /// Per-bin counts of candidate pin pairs (on different objects) and of
    /// sampled edges, binned by L1 pin distance.
    #[derive(Debug, Clone)]
    pub struct Bins {
        pub width: f64,
        pub pairs: Vec<f64>,
        pub edges: Vec<f64>,
    }

    impl Bins {
        pub fn new(width: f64, count: usize) -> Self {
            Self {
                width,
                pairs: vec![0.0; count],
                edges: vec![0.0; count],
            }
        }

        fn bin(&self, l: f64) -> Option<usize> {
            let b = (l / self.width) as usize;
            (b < self.pairs.len()).then_some(b)
        }

        pub fn add(&mut self, pins: &[Pin], placement: &Placement, edges: &[Edge]) {
            let abs: Vec<_> = pins.iter().map(|p| placement.coords[p.owner] + p.offset).collect();
            for a in 0..pins.len() {
                for b in a + 1..pins.len() {
                    if pins[a].owner != pins[b].owner {
                        let l = (abs[a].x - abs[b].x).abs() + (abs[a].y - abs[b].y).abs();
                        if let Some(k) = self.bin(l) {
                            self.pairs[k] += 1.0;
                        }
                    }
                }
            }
            for e in edges {
                let a = placement.coords[e.src] + e.attr.src_offset;
                let b = placement.coords[e.dst] + e.attr.dst_offset;
                if let Some(k) = self.bin((a.x - b.x).abs() + (a.y - b.y).abs()) {
                    self.edges[k] += 1.0;
                }
            }
        }

        /// Slope of log(edges / pairs) against bin center, weighted least
        /// squares with the edge count as weight (the inverse variance of a
        /// log Poisson rate). Bins with fewer than `min_edges` are dropped.
        pub fn log_rate_slope(&self, min_edges: f64) -> f64 {
            let pts: Vec<(f64, f64, f64)> = (0..self.pairs.len())
                .filter(|&k| self.edges[k] >= min_edges)
                .map(|k| {
                    (
                        (k as f64 + 0.5) * self.width,
                        (self.edges[k] / self.pairs[k]).ln(),
                        self.edges[k],
                    )
                })
                .collect();
            let w: f64 = pts.iter().map(|p| p.2).sum();
            let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
            let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
            let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
            sxy / sxx
        }
    }
}
