// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args;
use diffplace::metrics::{evaluate, EvalOptions, MetricReport, DEFAULT_RUDY_GRID};
use diffplace::Placement;
use serde::Serialize;

use crate::config::FileConfig;
use crate::inputs::{load_circuits, load_placements, write_json};
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Design file, dataset or Bookshelf benchmark.
    #[arg(long)]
    netlist: PathBuf,
    /// Placements to score (placement file, design or dataset). Without it
    /// the placement stored with the netlist is scored.
    #[arg(long)]
    placement: Option<PathBuf>,
    /// Score only this record of a dataset.
    #[arg(long)]
    index: Option<usize>,
    /// Congestion grid resolution.
    #[arg(long, default_value_t = DEFAULT_RUDY_GRID)]
    grid: usize,
    /// Include the full congestion map in the report.
    #[arg(long)]
    map: bool,
    /// Write the report here instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write one CSV row per circuit.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BatchReport {
    circuits: usize,
    legality_median: f64,
    legality_mean: f64,
    hpwl_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    hpwl_ratio_mean: Option<f64>,
    reports: Vec<MetricReport>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run(a: EvalArgs, _file: &FileConfig, argv: &[String]) -> Result<()> {
    let circuits = load_circuits(&a.netlist, a.index)?;
    ensure!(!circuits.is_empty(), "{} holds no circuits", a.netlist.display());
    let placements: Vec<Placement> = match &a.placement {
        Some(path) => {
            let mut p = load_placements(path)?;
            if let (Some(i), true) = (a.index, p.len() > 1) {
                ensure!(i < p.len(), "{} has no record {}", path.display(), i);
                p = vec![p.swap_remove(i)];
            }
            p
        }
        None => circuits
            .iter()
            .map(|c| {
                c.placement
                    .clone()
                    .context("the netlist carries no placement; pass --placement")
            })
            .collect::<Result<_>>()?,
    };
    ensure!(
        placements.len() == circuits.len(),
        "{} placements for {} circuits",
        placements.len(),
        circuits.len()
    );

    let mut reports = Vec::with_capacity(circuits.len());
    for (c, p) in circuits.iter().zip(&placements) {
        // A stored placement is the reference when another one is scored.
        let reference = a.placement.as_ref().and(c.placement.as_ref());
        let opts = EvalOptions {
            grid_n: a.grid,
            unit_scale: c.unit.map(|u| u.scale),
            reference,
            include_map: a.map,
        };
        reports.push(evaluate(p, &c.netlist, &opts)?);
    }

    let json = if reports.len() == 1 {
        serde_json::to_value(&reports[0])?
    } else {
        let n = reports.len() as f64;
        let ratios: Vec<f64> = reports.iter().filter_map(|r| r.hpwl_ratio).collect();
        serde_json::to_value(BatchReport {
            circuits: reports.len(),
            legality_median: median(reports.iter().map(|r| r.legality).collect()),
            legality_mean: reports.iter().map(|r| r.legality).sum::<f64>() / n,
            hpwl_mean: reports.iter().map(|r| r.hpwl).sum::<f64>() / n,
            hpwl_ratio_mean: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
            reports: reports.clone(),
        })?
    };
    if let Some(path) = &a.csv {
        let mut csv = String::from("circuit,legality,hpwl,hpwl_ratio,rudy\n");
        for (k, r) in reports.iter().enumerate() {
            let ratio = r.hpwl_ratio.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(csv, "{},{},{},{},{}", k, r.legality, r.hpwl, ratio, r.rudy_scalar);
        }
        std::fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?;
    }
    match &a.out {
        Some(path) => {
            write_json(path, &json)?;
            let mut m = Manifest::new("eval", argv);
            m.config = serde_json::json!({ "grid": a.grid, "map": a.map });
            m.inputs = std::iter::once(a.netlist.clone()).chain(a.placement.clone()).collect();
            m.outputs = std::iter::once(path.clone()).chain(a.csv.clone()).collect();
            m.write_beside(path)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&json)?),
    }
    Ok(())
}
