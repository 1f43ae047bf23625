// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use diffplace::io::svg::{render_filmstrip, render_svg, SvgOptions};
use diffplace::Placement;

use crate::inputs::{load_circuits, load_placements, read_trajectory};
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Design file, dataset or Bookshelf benchmark.
    #[arg(long)]
    netlist: PathBuf,
    /// Draw this record of a dataset [default: 0].
    #[arg(long)]
    index: Option<usize>,
    /// Placement to draw instead of the stored one.
    #[arg(long, conflicts_with = "trajectory")]
    placement: Option<PathBuf>,
    /// Trajectory saved by `sample --trajectory`; drawn as a filmstrip.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Draw edges (or nets as stars).
    #[arg(long)]
    edges: bool,
    /// Skip the overlap outlines.
    #[arg(long)]
    no_overlaps: bool,
    /// Panel size in pixels.
    #[arg(long, default_value_t = 512.0)]
    size: f64,
    #[arg(long)]
    title: Option<String>,
    /// Output SVG.
    #[arg(long, short)]
    out: PathBuf,
}

pub fn run(a: RenderArgs, argv: &[String]) -> Result<()> {
    ensure!(a.size > 0.0, "--size must be positive");
    let is_dataset = a.netlist.extension().is_some_and(|e| e == "jsonl");
    let index = if is_dataset {
        Some(a.index.unwrap_or(0))
    } else {
        a.index
    };
    let circuit = load_circuits(&a.netlist, index)?.remove(0);
    let opts = SvgOptions {
        size: a.size,
        edges: a.edges,
        overlaps: !a.no_overlaps,
        title: a.title.clone(),
    };
    let svg = if let Some(path) = &a.trajectory {
        let traj = read_trajectory(path)?;
        let placements: Vec<Placement> = traj
            .frames
            .iter()
            .map(|f| Placement::new(f.placement.clone()))
            .collect();
        for p in &placements {
            ensure!(
                p.len() == circuit.netlist.len(),
                "{} does not belong to this netlist ({} positions for {} objects)",
                path.display(),
                p.len(),
                circuit.netlist.len()
            );
        }
        let frames: Vec<(String, &Placement)> = traj
            .frames
            .iter()
            .zip(&placements)
            .map(|(f, p)| (f.label.clone(), p))
            .collect();
        render_filmstrip(&frames, &circuit.netlist, &opts)
    } else {
        let placement = match &a.placement {
            Some(path) => {
                let mut all = load_placements(path)?;
                let k = if all.len() > 1 { index.unwrap_or(0) } else { 0 };
                ensure!(k < all.len(), "{} has no record {}", path.display(), k);
                all.swap_remove(k)
            }
            None => circuit
                .placement
                .clone()
                .context("the netlist carries no placement; pass --placement")?,
        };
        if placement.len() != circuit.netlist.len() {
            bail!(
                "placement has {} positions for {} objects",
                placement.len(),
                circuit.netlist.len()
            );
        }
        render_svg(&placement, &circuit.netlist, &opts)
    };
    std::fs::write(&a.out, svg).with_context(|| format!("cannot write {}", a.out.display()))?;
    let mut m = Manifest::new("render", argv);
    m.config = serde_json::json!({ "size": a.size, "edges": a.edges, "overlaps": !a.no_overlaps });
    m.inputs = std::iter::once(a.netlist.clone())
        .chain(a.placement.clone())
        .chain(a.trajectory.clone())
        .collect();
    m.outputs = vec![a.out.clone()];
    m.write_beside(&a.out)?;
    Ok(())
}
