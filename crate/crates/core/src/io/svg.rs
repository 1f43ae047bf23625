// SPDX-License-Identifier: Apache-2.0

//! SVG drawings of placements. Macros are yellow, clusters blue, standard
//! cells grey and terminals dark. Netlists without kinds draw everything as
//! macros. Output is byte-stable for fixed inputs.

use std::fmt::Write as _;

use crate::metrics::overlapping_pairs;
use crate::netlist::{Netlist, ObjectKind, Placement, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    /// Side of one panel in pixels.
    pub size: f64,
    pub edges: bool,
    /// Outline the overlap region of every overlapping pair.
    pub overlaps: bool,
    pub title: Option<String>,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            size: 512.0,
            edges: false,
            overlaps: true,
            title: None,
        }
    }
}

const GAP: f64 = 16.0;
const LABEL: f64 = 20.0;

fn fill(kind: Option<ObjectKind>) -> &'static str {
    match kind {
        None | Some(ObjectKind::Macro) => "#f4c430",
        Some(ObjectKind::Cluster) => "#3f7fd9",
        Some(ObjectKind::Cell) => "#a0a4a8",
        Some(ObjectKind::Terminal) => "#333333",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Panel {
    size: f64,
    dx: f64,
    dy: f64,
}

impl Panel {
    fn x(&self, v: f64) -> f64 {
        self.dx + (v + 1.0) * 0.5 * self.size
    }

    fn y(&self, v: f64) -> f64 {
        self.dy + (1.0 - v) * 0.5 * self.size
    }

    fn len(&self, v: f64) -> f64 {
        v * 0.5 * self.size
    }

    fn rect(&self, out: &mut String, lo: Vec2, hi: Vec2, attrs: &str) {
        let _ = writeln!(
            out,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" {}/>"#,
            self.x(lo.x),
            self.y(hi.y),
            self.len(hi.x - lo.x),
            self.len(hi.y - lo.y),
            attrs
        );
    }
}

fn draw(out: &mut String, panel: &Panel, placement: &Placement, netlist: &Netlist, opts: &SvgOptions) {
    panel.rect(
        out,
        Vec2::new(-1.0, -1.0),
        Vec2::new(1.0, 1.0),
        r##"fill="#ffffff" stroke="#000000" stroke-width="1""##,
    );
    let n = netlist.len().min(placement.len());
    for i in 0..n {
        let o = netlist.objects[i];
        let c = placement.coords[i];
        let lo = Vec2::new(c.x - o.width / 2.0, c.y - o.height / 2.0);
        let hi = Vec2::new(c.x + o.width / 2.0, c.y + o.height / 2.0);
        let attrs = format!(
            r##"class="object" fill="{}" fill-opacity="0.85" stroke="#000000" stroke-width="0.5""##,
            fill(netlist.kind(i))
        );
        panel.rect(out, lo, hi, &attrs);
    }
    if opts.edges {
        let pin = |owner: usize, off: Vec2| placement.coords[owner] + off;
        let mut line = |a: Vec2, b: Vec2| {
            let _ = writeln!(
                out,
                r##"<line class="edge" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#555555" stroke-opacity="0.5" stroke-width="0.5"/>"##,
                panel.x(a.x),
                panel.y(a.y),
                panel.x(b.x),
                panel.y(b.y)
            );
        };
        if !netlist.edges.is_empty() {
            for e in &netlist.edges {
                line(pin(e.src, e.attr.src_offset), pin(e.dst, e.attr.dst_offset));
            }
        } else {
            for net in netlist.nets.as_deref().unwrap_or(&[]) {
                if let Some((first, rest)) = net.pins.split_first() {
                    for p in rest {
                        line(pin(first.owner, first.offset), pin(p.owner, p.offset));
                    }
                }
            }
        }
    }
    if opts.overlaps && placement.len() == netlist.len() {
        for (i, j) in overlapping_pairs(placement, netlist) {
            let (a, b) = (netlist.objects[i], netlist.objects[j]);
            let (ci, cj) = (placement.coords[i], placement.coords[j]);
            let lo = Vec2::new(
                (ci.x - a.width / 2.0).max(cj.x - b.width / 2.0),
                (ci.y - a.height / 2.0).max(cj.y - b.height / 2.0),
            );
            let hi = Vec2::new(
                (ci.x + a.width / 2.0).min(cj.x + b.width / 2.0),
                (ci.y + a.height / 2.0).min(cj.y + b.height / 2.0),
            );
            panel.rect(
                out,
                lo,
                hi,
                r##"class="overlap" fill="none" stroke="#e0201b" stroke-width="1.5""##,
            );
        }
    }
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        width, height, width, height
    );
}

fn label(out: &mut String, x: f64, y: f64, text: &str) {
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        x,
        y,
        escape(text)
    );
}

pub fn render_svg(placement: &Placement, netlist: &Netlist, opts: &SvgOptions) -> String {
    let top = if opts.title.is_some() { LABEL } else { 0.0 };
    let mut out = String::new();
    header(&mut out, opts.size, opts.size + top);
    if let Some(t) = &opts.title {
        label(&mut out, opts.size / 2.0, 15.0, t);
    }
    let panel = Panel {
        size: opts.size,
        dx: 0.0,
        dy: top,
    };
    draw(&mut out, &panel, placement, netlist, opts);
    out.push_str("</svg>\n");
    out
}

/// Panels side by side, each with its caption above it.
pub fn render_filmstrip(frames: &[(String, &Placement)], netlist: &Netlist, opts: &SvgOptions) -> String {
    let n = frames.len() as f64;
    let width = if frames.is_empty() {
        0.0
    } else {
        n * opts.size + (n - 1.0) * GAP
    };
    let mut out = String::new();
    header(&mut out, width, opts.size + LABEL);
    for (k, (caption, placement)) in frames.iter().enumerate() {
        let dx = k as f64 * (opts.size + GAP);
        let _ = writeln!(out, r#"<g class="panel">"#);
        label(&mut out, dx + opts.size / 2.0, 15.0, caption);
        let panel = Panel {
            size: opts.size,
            dx,
            dy: LABEL,
        };
        draw(&mut out, &panel, placement, netlist, opts);
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
