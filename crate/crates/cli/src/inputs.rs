// SPDX-License-Identifier: Apache-2.0

//! Netlist and placement files accepted on the command line.
//!
//! A netlist argument may be a design file (`.json`), a dataset (`.jsonl`,
//! one circuit per record) or a Bookshelf benchmark (`.aux` or a directory
//! holding one). Placement arguments are placement files, design files or
//! datasets.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use diffplace::io::bookshelf::{parse_bookshelf, Row, UnitScale};
use diffplace::io::dataset::{read_dataset, DatasetRecord};
use diffplace::{Netlist, Placement, Vec2};
use serde::{Deserialize, Serialize};

pub const DESIGN_FORMAT: &str = "diffplace-design";
pub const PLACEMENT_FORMAT: &str = "diffplace-placement";
pub const TRAJECTORY_FORMAT: &str = "diffplace-trajectory";
pub const FILE_VERSION: u32 = 1;

/// One circuit, with its normalized placement and unit map when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub format: String,
    pub version: u32,
    pub netlist: Netlist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<UnitScale>,
    /// Bookshelf placement rows in original units, kept for re-export.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<Row>,
}

impl DesignFile {
    pub fn new(netlist: Netlist, placement: Option<&Placement>, unit: Option<UnitScale>, rows: Vec<Row>) -> Self {
        Self {
            format: DESIGN_FORMAT.into(),
            version: FILE_VERSION,
            netlist,
            placement: placement.map(|p| p.coords.clone()),
            unit,
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementFile {
    pub format: String,
    pub version: u32,
    pub placement: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub label: String,
    /// Diffusion step of the frame; 0 for the final placement.
    pub t: usize,
    pub placement: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub format: String,
    pub version: u32,
    pub diffusion_steps: usize,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone)]
pub struct Circuit {
    pub netlist: Netlist,
    /// Placement stored with the netlist (the reference for datasets).
    pub placement: Option<Placement>,
    pub unit: Option<UnitScale>,
    pub rows: Vec<Row>,
    /// Source record when the circuit came from a dataset.
    pub record: Option<DatasetRecord>,
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

fn is_bookshelf(path: &Path) -> bool {
    path.is_dir() || path.extension().is_some_and(|e| e == "aux")
}

fn check_header(format: &str, version: u32, want: &str, path: &Path) -> Result<()> {
    ensure!(
        format == want,
        "{}: expected a {} file, found '{}'",
        path.display(),
        want,
        format
    );
    ensure!(
        version == FILE_VERSION,
        "{}: {} version {} is not supported",
        path.display(),
        want,
        version
    );
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_design(path: &Path) -> Result<DesignFile> {
    let d: DesignFile = read_json(path)?;
    check_header(&d.format, d.version, DESIGN_FORMAT, path)?;
    if let Some(p) = &d.placement {
        ensure!(
            p.len() == d.netlist.len(),
            "{}: placement has {} entries for {} objects",
            path.display(),
            p.len(),
            d.netlist.len()
        );
    }
    Ok(d)
}

/// Loads the circuits named by `path`. `index` picks one dataset record.
pub fn load_circuits(path: &Path, index: Option<usize>) -> Result<Vec<Circuit>> {
    if !path.exists() {
        bail!("{} does not exist", path.display());
    }
    if is_bookshelf(path) {
        ensure!(index.is_none(), "--index applies to datasets only");
        let d = parse_bookshelf(path)?;
        return Ok(vec![Circuit {
            netlist: d.netlist,
            placement: d.placement,
            unit: Some(d.unit),
            rows: d.rows,
            record: None,
        }]);
    }
    if is_jsonl(path) {
        let mut records = read_dataset(path)?;
        if let Some(i) = index {
            ensure!(
                i < records.len(),
                "{} has {} records, no index {}",
                path.display(),
                records.len(),
                i
            );
            records = vec![records.swap_remove(i)];
        }
        return Ok(records
            .into_iter()
            .map(|r| Circuit {
                netlist: r.netlist(),
                placement: Some(r.placement()),
                unit: None,
                rows: Vec::new(),
                record: Some(r),
            })
            .collect());
    }
    ensure!(index.is_none(), "--index applies to datasets only");
    let d = read_design(path)?;
    Ok(vec![Circuit {
        placement: d.placement.map(Placement::new),
        netlist: d.netlist,
        unit: d.unit,
        rows: d.rows,
        record: None,
    }])
}

/// Loads placements from a placement file, a design file or a dataset.
pub fn load_placements(path: &Path) -> Result<Vec<Placement>> {
    if is_jsonl(path) {
        return Ok(read_dataset(path)?.iter().map(|r| r.placement()).collect());
    }
    let value: serde_json::Value = read_json(path)?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(PLACEMENT_FORMAT) => {
            let p: PlacementFile = serde_json::from_value(value)?;
            check_header(&p.format, p.version, PLACEMENT_FORMAT, path)?;
            Ok(vec![Placement::new(p.placement)])
        }
        Some(DESIGN_FORMAT) => {
            let d = read_design(path)?;
            let p = d
                .placement
                .with_context(|| format!("{} has no placement", path.display()))?;
            Ok(vec![Placement::new(p)])
        }
        other => bail!("{}: unrecognized file format {:?}", path.display(), other),
    }
}

pub fn write_placement_file(path: &Path, placement: &Placement) -> Result<()> {
    write_json(
        path,
        &PlacementFile {
            format: PLACEMENT_FORMAT.into(),
            version: FILE_VERSION,
            placement: placement.coords.clone(),
        },
    )
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile> {
    let t: TrajectoryFile = read_json(path)?;
    check_header(&t.format, t.version, TRAJECTORY_FORMAT, path)?;
    Ok(t)
}
