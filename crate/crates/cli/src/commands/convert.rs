// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use anyhow::{bail, ensure, Result};
use clap::Args;
use diffplace::io::bookshelf::{write_bookshelf, Design, UnitScale};
use diffplace::io::clusters::{apply_clusters, read_partition};
use log::info;

use crate::inputs::{load_circuits, load_placements, write_json, DesignFile};
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Bookshelf benchmark (`.aux` or its directory) or a design file.
    #[arg(long)]
    input: PathBuf,
    /// Partition file with one cluster id per movable standard cell.
    #[arg(long, requires = "clusters")]
    partition: Option<PathBuf>,
    /// Number of clusters in the partition.
    #[arg(long, requires = "partition")]
    clusters: Option<usize>,
    /// Replace the stored placement with this one before writing.
    #[arg(long)]
    placement: Option<PathBuf>,
    /// Write a design file here.
    #[arg(long, short, required_unless_present = "bookshelf_out")]
    out: Option<PathBuf>,
    /// Write a Bookshelf benchmark into this directory.
    #[arg(long)]
    bookshelf_out: Option<PathBuf>,
    /// Base file name for Bookshelf output.
    #[arg(long, default_value = "design")]
    name: String,
}

pub fn run(a: ConvertArgs, argv: &[String]) -> Result<()> {
    if a.input.extension().is_some_and(|e| e == "jsonl") {
        bail!("convert takes a Bookshelf benchmark or a design file, not a dataset");
    }
    let c = load_circuits(&a.input, None)?.remove(0);
    let mut netlist = c.netlist;
    let mut placement = c.placement;
    if let (Some(path), Some(k)) = (&a.partition, a.clusters) {
        let assignment = read_partition(path, k)?;
        let out = apply_clusters(&netlist, placement.as_ref(), &assignment, k)?;
        info!("clustered {} objects into {}", netlist.len(), out.netlist.len());
        netlist = out.netlist;
        placement = out.placement;
    }
    if let Some(path) = &a.placement {
        let p = load_placements(path)?.remove(0);
        ensure!(
            p.len() == netlist.len(),
            "{} has {} positions for {} objects",
            path.display(),
            p.len(),
            netlist.len()
        );
        placement = Some(p);
    }

    let mut outputs = Vec::new();
    if let Some(path) = &a.out {
        write_json(
            path,
            &DesignFile::new(netlist.clone(), placement.as_ref(), c.unit, c.rows.clone()),
        )?;
        outputs.push(path.clone());
    }
    if let Some(dir) = &a.bookshelf_out {
        ensure!(
            netlist.edges.is_empty() || netlist.nets.is_some(),
            "Bookshelf output needs multi-pin nets"
        );
        let design = Design {
            netlist: netlist.clone(),
            placement: placement.clone(),
            unit: c.unit.unwrap_or(UnitScale::IDENTITY),
            rows: c.rows.clone(),
            orientations: None,
        };
        outputs.push(write_bookshelf(&design, dir, &a.name)?);
    }
    let mut m = Manifest::new("convert", argv);
    m.config = serde_json::json!({ "clusters": a.clusters });
    m.inputs = std::iter::once(a.input.clone())
        .chain(a.partition.clone())
        .chain(a.placement.clone())
        .collect();
    m.summary = serde_json::json!({
        "objects": netlist.len(),
        "nets": netlist.nets.as_ref().map(|n| n.len()),
        "edges": netlist.edges.len(),
    });
    m.outputs = outputs.clone();
    m.write_beside(&outputs[0])?;
    Ok(())
}
