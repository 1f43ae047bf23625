// SPDX-License-Identifier: Apache-2.0

//! Minimal SVG line charts for study output.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub values: Vec<f64>,
}

const W: f64 = 480.0;
const H: f64 = 300.0;
const PAD: f64 = 50.0;

fn nice_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// One panel per series group, points at evenly spaced categories.
pub fn line_chart(title: &str, x_label: &str, categories: &[String], panels: &[(&str, Vec<Series>)]) -> String {
    let total_h = panels.len() as f64 * H;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}" font-family="sans-serif">"#,
        W,
        total_h + 30.0,
        W,
        total_h + 30.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        title
    );
    let n = categories.len().max(1);
    let px = |i: usize| {
        if n == 1 {
            W / 2.0
        } else {
            PAD + i as f64 * (W - 2.0 * PAD) / (n - 1) as f64
        }
    };
    for (k, (y_label, series)) in panels.iter().enumerate() {
        let top = 30.0 + k as f64 * H;
        let (lo, hi) = nice_range(series.iter().flat_map(|s| s.values.iter().copied()));
        let py = |v: f64| top + H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#000000"/>"##,
            PAD,
            top + PAD,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        for v in [lo, hi] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{:.3}</text>"#,
                PAD - 4.0,
                py(v) + 3.0,
                v
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" font-size="12" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#,
            top + H / 2.0,
            top + H / 2.0,
            y_label
        );
        for (i, c) in categories.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                px(i),
                top + H - PAD + 14.0,
                c
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            W / 2.0,
            top + H - 12.0,
            x_label
        );
        for (j, s) in series.iter().enumerate() {
            let pts: Vec<String> = s
                .values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, v)| format!("{:.1},{:.1}", px(i), py(*v)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline class="series" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
                s.color,
                pts.join(" ")
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{}">{}</text>"#,
                PAD + 6.0,
                top + PAD + 14.0 + 13.0 * j as f64,
                s.color,
                s.name
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
