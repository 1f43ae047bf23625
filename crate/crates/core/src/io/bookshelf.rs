// SPDX-License-Identifier: Apache-2.0

//! GSRC Bookshelf reader and writer (`.aux`, `.nodes`, `.nets`, `.pl`,
//! `.scl`), covering the subset used by the IBM and ISPD benchmark suites.
//!
//! Coordinates are normalized so the die's longer side spans `[-1, 1]` and
//! the shorter side is centered. [`UnitScale`] keeps the affine map so
//! results can be reported and exported in original units.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::netlist::{Net, Netlist, ObjectGeom, ObjectKind, Pin, Placement, Vec2};
use crate::{Error, Result};

/// Affine map between original units and the normalized canvas:
/// `normalized = (original - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScale {
    pub center: Vec2,
    /// Original units per normalized unit.
    pub scale: f64,
}

impl UnitScale {
    pub const IDENTITY: UnitScale = UnitScale {
        center: Vec2::ZERO,
        scale: 1.0,
    };

    /// Map for a die spanning `lo..hi` in original units.
    pub fn for_die(lo: Vec2, hi: Vec2) -> Result<Self> {
        let half = 0.5 * (hi.x - lo.x).max(hi.y - lo.y);
        if !(half > 0.0 && half.is_finite()) {
            return Err(Error::InvalidNetlist(format!(
                "die ({}, {})..({}, {}) has no extent",
                lo.x, lo.y, hi.x, hi.y
            )));
        }
        Ok(Self {
            center: Vec2::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y)),
            scale: half,
        })
    }

    pub fn normalize(&self, p: Vec2) -> Vec2 {
        Vec2::new((p.x - self.center.x) / self.scale, (p.y - self.center.y) / self.scale)
    }

    pub fn denormalize(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x * self.scale + self.center.x, p.y * self.scale + self.center.y)
    }
}

/// One `CoreRow` block of a `.scl` file, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coordinate: f64,
    pub height: f64,
    pub site_width: f64,
    pub site_spacing: f64,
    pub site_orient: String,
    pub site_symmetry: String,
    pub subrow_origin: f64,
    pub num_sites: usize,
}

impl Row {
    fn x_extent(&self) -> (f64, f64) {
        (
            self.subrow_origin,
            self.subrow_origin + self.num_sites as f64 * self.site_spacing,
        )
    }
}

/// A parsed benchmark in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    /// Carries nets, names, kinds and the fixed mask; `edges` is empty.
    pub netlist: Netlist,
    pub placement: Option<Placement>,
    pub unit: UnitScale,
    pub rows: Vec<Row>,
    /// Orientation token of each node in the `.pl` file.
    pub orientations: Option<Vec<String>>,
}

/// Line-oriented reader that knows where it is for error messages.
struct Lines<'a> {
    file: PathBuf,
    iter: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(file: &Path, text: &'a str) -> Self {
        Self {
            file: file.to_path_buf(),
            iter: text.lines().enumerate().peekable(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Next non-blank line with comments removed, split into tokens.
    fn next_tokens(&mut self) -> Option<Vec<&'a str>> {
        for (i, raw) in self.iter.by_ref() {
            self.line = i + 1;
            let text = raw.split('#').next().unwrap_or("");
            let toks: Vec<&str> = text.split_whitespace().collect();
            if !toks.is_empty() {
                return Some(toks);
            }
        }
        None
    }

    fn header(&mut self, kind: &str) -> Result<()> {
        match self.next_tokens() {
            Some(t) if t.len() >= 2 && t[0] == "UCLA" && t[1] == kind => Ok(()),
            Some(_) => Err(self.err(format!("expected 'UCLA {} 1.0' header", kind))),
            None => Err(self.err("file is empty")),
        }
    }

    fn num<T: std::str::FromStr>(&self, tok: &str, what: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(format!("bad {} '{}'", what, tok)))
    }

    /// Parses `Key : value`, also accepting `Key: value` and `Key :value`.
    fn key_value(&self, toks: &[&str], key: &str) -> Result<Option<usize>> {
        let joined = toks.join(" ");
        let Some(rest) = joined.strip_prefix(key) else {
            return Ok(None);
        };
        let rest = rest.trim_start();
        let Some(v) = rest.strip_prefix(':') else {
            return Err(self.err(format!("expected ':' after {}", key)));
        };
        self.num(v.trim(), key).map(Some)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse {
        file: path.to_path_buf(),
        line: 0,
        msg: format!("cannot read: {}", e),
    })
}

struct NodeEntry {
    name: String,
    width: f64,
    height: f64,
    terminal: bool,
}

fn parse_nodes(path: &Path) -> Result<Vec<NodeEntry>> {
    let text = read(path)?;
    let mut l = Lines::new(path, &text);
    l.header("nodes")?;
    let (mut num_nodes, mut num_terminals) = (None, None);
    let mut nodes = Vec::new();
    while let Some(t) = l.next_tokens() {
        if t[0].starts_with("NumNodes") {
            num_nodes = l.key_value(&t, "NumNodes")?;
            continue;
        }
        if t[0].starts_with("NumTerminals") {
            num_terminals = l.key_value(&t, "NumTerminals")?;
            continue;
        }
        let terminal = match t.len() {
            3 => false,
            4 if t[3] == "terminal" || t[3] == "terminal_NI" => true,
            _ => return Err(l.err(format!("unrecognized node line '{}'", t.join(" ")))),
        };
        let width: f64 = l.num(t[1], "width")?;
        let height: f64 = l.num(t[2], "height")?;
        if !(width >= 0.0 && height >= 0.0) {
            return Err(l.err("node sizes must be non-negative"));
        }
        nodes.push(NodeEntry {
            name: t[0].to_string(),
            width,
            height,
            terminal,
        });
    }
    if let Some(n) = num_nodes {
        if n != nodes.len() {
            return Err(l.err(format!("NumNodes says {}, found {}", n, nodes.len())));
        }
    }
    if let Some(n) = num_terminals {
        let found = nodes.iter().filter(|n| n.terminal).count();
        if n != found {
            return Err(l.err(format!("NumTerminals says {}, found {}", n, found)));
        }
    }
    Ok(nodes)
}

struct RawNet {
    name: Option<String>,
    pins: Vec<(usize, Vec2)>,
}

fn parse_nets(path: &Path, index: &HashMap<&str, usize>) -> Result<Vec<RawNet>> {
    let text = read(path)?;
    let mut l = Lines::new(path, &text);
    l.header("nets")?;
    let (mut num_nets, mut num_pins) = (None, None);
    let mut nets: Vec<RawNet> = Vec::new();
    let mut remaining = 0usize;
    while let Some(t) = l.next_tokens() {
        if remaining == 0 {
            if t[0].starts_with("NumNets") {
                num_nets = l.key_value(&t, "NumNets")?;
            } else if t[0].starts_with("NumPins") {
                num_pins = l.key_value(&t, "NumPins")?;
            } else if t[0].starts_with("NetDegree") {
                // NetDegree : k [name]
                let colon = t.iter().position(|s| s.contains(':'));
                let after: Vec<&str> = match colon {
                    Some(i) => {
                        let tail = t[i].split_once(':').map(|x| x.1).unwrap_or("");
                        std::iter::once(tail)
                            .chain(t[i + 1..].iter().copied())
                            .filter(|s| !s.is_empty())
                            .collect()
                    }
                    None => return Err(l.err("expected ':' after NetDegree")),
                };
                let Some(k) = after.first() else {
                    return Err(l.err("NetDegree without a count"));
                };
                remaining = l.num(k, "net degree")?;
                if after.len() > 2 {
                    return Err(l.err("unexpected tokens after net name"));
                }
                nets.push(RawNet {
                    name: after.get(1).map(|s| s.to_string()),
                    pins: Vec::with_capacity(remaining),
                });
            } else {
                return Err(l.err(format!("unrecognized directive '{}'", t[0])));
            }
            continue;
        }
        // node dir [: xoff yoff]
        let owner = *index
            .get(t[0])
            .ok_or_else(|| l.err(format!("net references unknown node '{}'", t[0])))?;
        if !matches!(t.get(1), Some(&"I") | Some(&"O") | Some(&"B")) {
            return Err(l.err(format!("pin of '{}' has no direction (I, O or B)", t[0])));
        }
        let offset = match t.len() {
            2 => Vec2::ZERO,
            5 if t[2] == ":" => Vec2::new(l.num(t[3], "pin offset")?, l.num(t[4], "pin offset")?),
            _ => return Err(l.err(format!("unrecognized pin line '{}'", t.join(" ")))),
        };
        nets.last_mut().expect("inside a net").pins.push((owner, offset));
        remaining -= 1;
    }
    if remaining != 0 {
        return Err(l.err(format!("file ends with {} pins of the last net missing", remaining)));
    }
    if let Some(n) = num_nets {
        if n != nets.len() {
            return Err(l.err(format!("NumNets says {}, found {}", n, nets.len())));
        }
    }
    if let Some(n) = num_pins {
        let found: usize = nets.iter().map(|n| n.pins.len()).sum();
        if n != found {
            return Err(l.err(format!("NumPins says {}, found {}", n, found)));
        }
    }
    Ok(nets)
}

struct PlEntry {
    lower_left: Vec2,
    orient: String,
    fixed: bool,
}

fn parse_pl(path: &Path, index: &HashMap<&str, usize>) -> Result<Vec<Option<PlEntry>>> {
    let text = read(path)?;
    let mut l = Lines::new(path, &text);
    l.header("pl")?;
    let mut out: Vec<Option<PlEntry>> = (0..index.len()).map(|_| None).collect();
    while let Some(t) = l.next_tokens() {
        let i = *index
            .get(t[0])
            .ok_or_else(|| l.err(format!("placement for unknown node '{}'", t[0])))?;
        if t.len() < 3 {
            return Err(l.err("expected 'name x y : orient'"));
        }
        let p = Vec2::new(l.num(t[1], "x")?, l.num(t[2], "y")?);
        let mut orient = "N".to_string();
        let mut fixed = false;
        let mut rest = &t[3..];
        if let Some((&":", tail)) = rest.split_first() {
            let Some((o, tail)) = tail.split_first() else {
                return Err(l.err("missing orientation after ':'"));
            };
            if !matches!(*o, "N" | "S" | "E" | "W" | "FN" | "FS" | "FE" | "FW") {
                return Err(l.err(format!("unknown orientation '{}'", o)));
            }
            orient = o.to_string();
            rest = tail;
        }
        match rest {
            [] => {}
            ["/FIXED"] | ["/FIXED_NI"] => fixed = true,
            _ => return Err(l.err(format!("unrecognized placement attribute '{}'", rest.join(" ")))),
        }
        if out[i].is_some() {
            return Err(l.err(format!("node '{}' placed twice", t[0])));
        }
        out[i] = Some(PlEntry {
            lower_left: p,
            orient,
            fixed,
        });
    }
    Ok(out)
}

fn parse_scl(path: &Path) -> Result<Vec<Row>> {
    let text = read(path)?;
    let mut l = Lines::new(path, &text);
    l.header("scl")?;
    let mut rows = Vec::new();
    let mut declared = None;
    let mut current: Option<Row> = None;
    while let Some(t) = l.next_tokens() {
        match (t[0], current.as_mut()) {
            (k, None) if k.starts_with("NumRows") => declared = l.key_value(&t, "NumRows")?,
            ("CoreRow", None) => {
                current = Some(Row {
                    coordinate: 0.0,
                    height: 0.0,
                    site_width: 1.0,
                    site_spacing: 1.0,
                    site_orient: "1".into(),
                    site_symmetry: "1".into(),
                    subrow_origin: 0.0,
                    num_sites: 0,
                })
            }
            ("End", Some(_)) => rows.push(current.take().expect("open row")),
            (_, Some(row)) => {
                // Key : value [Key : value]
                let joined = t.join(" ");
                let parts: Vec<&str> = joined.split(':').map(str::trim).collect();
                let mut key = parts[0].to_string();
                for part in &parts[1..] {
                    let mut words = part.split_whitespace();
                    let value = words.next().ok_or_else(|| l.err(format!("{} has no value", key)))?;
                    match key.as_str() {
                        "Coordinate" => row.coordinate = l.num(value, &key)?,
                        "Height" => row.height = l.num(value, &key)?,
                        "Sitewidth" => row.site_width = l.num(value, &key)?,
                        "Sitespacing" => row.site_spacing = l.num(value, &key)?,
                        "Siteorient" => row.site_orient = value.to_string(),
                        "Sitesymmetry" => row.site_symmetry = value.to_string(),
                        "SubrowOrigin" => row.subrow_origin = l.num(value, &key)?,
                        "NumSites" => row.num_sites = l.num(value, &key)?,
                        _ => return Err(l.err(format!("unrecognized row field '{}'", key))),
                    }
                    key = words.collect::<Vec<_>>().join(" ");
                }
                if !key.is_empty() {
                    return Err(l.err(format!("dangling '{}'", key)));
                }
            }
            (k, _) => return Err(l.err(format!("unrecognized directive '{}'", k))),
        }
    }
    if current.is_some() {
        return Err(l.err("row is missing its End"));
    }
    if let Some(n) = declared {
        if n != rows.len() {
            return Err(l.err(format!("NumRows says {}, found {}", n, rows.len())));
        }
    }
    Ok(rows)
}

/// Files named by an `.aux` file, or found by extension in a directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BookshelfFiles {
    pub nodes: Option<PathBuf>,
    pub nets: Option<PathBuf>,
    pub pl: Option<PathBuf>,
    pub scl: Option<PathBuf>,
}

impl BookshelfFiles {
    pub fn locate(path: &Path) -> Result<Self> {
        if path.is_dir() {
            let mut aux = Vec::new();
            for e in fs::read_dir(path)? {
                let p = e?.path();
                if p.extension().is_some_and(|x| x == "aux") {
                    aux.push(p);
                }
            }
            aux.sort();
            match aux.as_slice() {
                [one] => Self::from_aux(one),
                [] => Err(Error::Parse {
                    file: path.to_path_buf(),
                    line: 0,
                    msg: "directory has no .aux file".into(),
                }),
                _ => Err(Error::Parse {
                    file: path.to_path_buf(),
                    line: 0,
                    msg: "directory has several .aux files; name one".into(),
                }),
            }
        } else {
            Self::from_aux(path)
        }
    }

    fn from_aux(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut l = Lines::new(path, &text);
        let mut files = Self::default();
        let Some(t) = l.next_tokens() else {
            return Err(l.err("file is empty"));
        };
        if t.len() < 3 || t[1] != ":" {
            return Err(l.err("expected 'RowBasedPlacement : files...'"));
        }
        for name in &t[2..] {
            let p = dir.join(name);
            match Path::new(name).extension().and_then(|e| e.to_str()) {
                Some("nodes") => files.nodes = Some(p),
                Some("nets") => files.nets = Some(p),
                Some("pl") => files.pl = Some(p),
                Some("scl") => files.scl = Some(p),
                // Net weights and shapes do not affect placement geometry here.
                Some("wts") | Some("shapes") => {}
                _ => return Err(l.err(format!("unrecognized file '{}'", name))),
            }
        }
        if l.next_tokens().is_some() {
            return Err(l.err("unexpected second line"));
        }
        Ok(files)
    }
}

/// Parses a benchmark from an `.aux` file or a directory holding one.
///
/// The die comes from the `.scl` rows when present, else from the bounding
/// box of the `.pl` positions. Terminals and `/FIXED` nodes are fixed.
/// Non-terminal nodes taller than one row are macros, the rest are cells;
/// without rows, the most common node height stands in for the row height.
pub fn parse_bookshelf(path: &Path) -> Result<Design> {
    let files = BookshelfFiles::locate(path)?;
    let missing = |what: &str| Error::Parse {
        file: path.to_path_buf(),
        line: 0,
        msg: format!("no {} file", what),
    };
    let nodes = parse_nodes(files.nodes.as_deref().ok_or_else(|| missing(".nodes"))?)?;
    let mut index = HashMap::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.name.as_str(), i).is_some() {
            return Err(Error::InvalidNetlist(format!("node '{}' is declared twice", n.name)));
        }
    }
    let nets = parse_nets(files.nets.as_deref().ok_or_else(|| missing(".nets"))?, &index)?;
    let pl = files.pl.as_deref().map(|p| parse_pl(p, &index)).transpose()?;
    let rows = files.scl.as_deref().map(parse_scl).transpose()?.unwrap_or_default();

    let (lo, hi) = if !rows.is_empty() {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for r in &rows {
            let (x0, x1) = r.x_extent();
            lo = Vec2::new(lo.x.min(x0), lo.y.min(r.coordinate));
            hi = Vec2::new(hi.x.max(x1), hi.y.max(r.coordinate + r.height));
        }
        (lo, hi)
    } else if let Some(pl) = &pl {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (e, n) in pl.iter().zip(&nodes) {
            if let Some(e) = e {
                lo = Vec2::new(lo.x.min(e.lower_left.x), lo.y.min(e.lower_left.y));
                hi = Vec2::new(hi.x.max(e.lower_left.x + n.width), hi.y.max(e.lower_left.y + n.height));
            }
        }
        (lo, hi)
    } else {
        return Err(missing(".scl or .pl (needed for the die outline)"));
    };
    let unit = UnitScale::for_die(lo, hi)?;

    let row_height = rows.first().map(|r| r.height).unwrap_or_else(|| {
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for n in nodes.iter().filter(|n| !n.terminal) {
            *counts.entry(n.height.to_bits()).or_default() += 1;
        }
        counts
            .into_iter()
            .max_by_key(|&(h, c)| (c, std::cmp::Reverse(h)))
            .map(|(h, _)| f64::from_bits(h))
            .unwrap_or(0.0)
    });

    let s = unit.scale;
    let objects = nodes
        .iter()
        .map(|n| ObjectGeom::new(n.width / s, n.height / s))
        .collect();
    let kinds = nodes
        .iter()
        .map(|n| {
            if n.terminal {
                ObjectKind::Terminal
            } else if n.height > row_height {
                ObjectKind::Macro
            } else {
                ObjectKind::Cell
            }
        })
        .collect();
    let fixed = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| n.terminal || pl.as_ref().is_some_and(|pl| pl[i].as_ref().is_some_and(|e| e.fixed)))
        .collect();
    let nets = nets
        .into_iter()
        .map(|n| Net {
            name: n.name,
            pins: n
                .pins
                .into_iter()
                .map(|(owner, off)| Pin {
                    owner,
                    offset: Vec2::new(off.x / s, off.y / s),
                })
                .collect(),
        })
        .collect();
    let (placement, orientations) = match &pl {
        Some(pl) => {
            let coords = pl
                .iter()
                .zip(&nodes)
                .map(|(e, n)| match e {
                    Some(e) => unit.normalize(Vec2::new(
                        e.lower_left.x + n.width / 2.0,
                        e.lower_left.y + n.height / 2.0,
                    )),
                    None => Vec2::ZERO,
                })
                .collect();
            let orients = pl
                .iter()
                .map(|e| e.as_ref().map(|e| e.orient.clone()).unwrap_or_else(|| "N".into()))
                .collect();
            (Some(Placement::new(coords)), Some(orients))
        }
        None => (None, None),
    };
    let netlist = Netlist {
        objects,
        edges: Vec::new(),
        nets: Some(nets),
        fixed_mask: Some(fixed),
        names: Some(nodes.into_iter().map(|n| n.name).collect()),
        kinds: Some(kinds),
    };
    Ok(Design {
        netlist,
        placement,
        unit,
        rows,
        orientations,
    })
}

fn names(netlist: &Netlist) -> Result<&[String]> {
    netlist
        .names
        .as_deref()
        .filter(|n| n.len() == netlist.len())
        .ok_or_else(|| Error::InvalidNetlist("object names are required for Bookshelf output".into()))
}

/// Shortest decimal that parses back to the same `f64`.
fn num(v: f64) -> String {
    let s = format!("{}", v);
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn pl_text(
    placement: &Placement,
    netlist: &Netlist,
    unit: &UnitScale,
    orientations: Option<&[String]>,
    fixed: impl Fn(usize) -> bool,
) -> Result<String> {
    let names = names(netlist)?;
    if placement.len() != netlist.len() {
        return Err(Error::InvalidNetlist(format!(
            "placement has {} positions for {} objects",
            placement.len(),
            netlist.len()
        )));
    }
    let mut out = String::from("UCLA pl 1.0\n\n");
    for (i, c) in placement.coords.iter().enumerate() {
        let o = netlist.objects[i];
        let center = unit.denormalize(*c);
        let w = o.width * unit.scale;
        let h = o.height * unit.scale;
        let orient = orientations.and_then(|v| v.get(i)).map(String::as_str).unwrap_or("N");
        let _ = write!(
            out,
            "{} {} {} : {}",
            names[i],
            num(center.x - w / 2.0),
            num(center.y - h / 2.0),
            orient
        );
        if fixed(i) {
            out.push_str(" /FIXED");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes a `.pl` file in original units. Macros and already fixed objects
/// are marked `/FIXED` so downstream placers keep them in place.
pub fn write_placement(placement: &Placement, netlist: &Netlist, unit: &UnitScale, path: &Path) -> Result<()> {
    let text = pl_text(placement, netlist, unit, None, |i| {
        netlist.is_fixed(i) || netlist.kind(i) == Some(ObjectKind::Macro)
    })?;
    fs::write(path, text)?;
    Ok(())
}

/// Writes a complete benchmark as `<dir>/<base>.{aux,nodes,nets,pl,scl}`
/// and returns the `.aux` path.
pub fn write_bookshelf(design: &Design, dir: &Path, base: &str) -> Result<PathBuf> {
    let nl = &design.netlist;
    let names = names(nl)?;
    let s = design.unit.scale;
    fs::create_dir_all(dir)?;
    let mut listed = vec![format!("{}.nodes", base), format!("{}.nets", base)];

    let kinds: Vec<ObjectKind> = (0..nl.len()).map(|i| nl.kind(i).unwrap_or(ObjectKind::Macro)).collect();
    let terminals = kinds.iter().filter(|k| **k == ObjectKind::Terminal).count();
    let mut nodes = format!(
        "UCLA nodes 1.0\n\nNumNodes : {}\nNumTerminals : {}\n",
        nl.len(),
        terminals
    );
    for (i, o) in nl.objects.iter().enumerate() {
        let _ = write!(nodes, "{} {} {}", names[i], num(o.width * s), num(o.height * s));
        if kinds[i] == ObjectKind::Terminal {
            nodes.push_str(" terminal");
        }
        nodes.push('\n');
    }
    fs::write(dir.join(&listed[0]), nodes)?;

    let empty = Vec::new();
    let nets = nl.nets.as_ref().unwrap_or(&empty);
    let pins: usize = nets.iter().map(|n| n.pins.len()).sum();
    let mut text = format!("UCLA nets 1.0\n\nNumNets : {}\nNumPins : {}\n", nets.len(), pins);
    for net in nets {
        let _ = write!(text, "NetDegree : {}", net.pins.len());
        if let Some(n) = &net.name {
            let _ = write!(text, " {}", n);
        }
        text.push('\n');
        for p in &net.pins {
            let _ = writeln!(
                text,
                "  {} B : {} {}",
                names[p.owner],
                num(p.offset.x * s),
                num(p.offset.y * s)
            );
        }
    }
    fs::write(dir.join(&listed[1]), text)?;

    if let Some(p) = &design.placement {
        let name = format!("{}.pl", base);
        let text = pl_text(p, nl, &design.unit, design.orientations.as_deref(), |i| {
            nl.is_fixed(i) && kinds[i] != ObjectKind::Terminal
        })?;
        fs::write(dir.join(&name), text)?;
        listed.push(name);
    }
    if !design.rows.is_empty() {
        let name = format!("{}.scl", base);
        let mut text = format!("UCLA scl 1.0\n\nNumRows : {}\n\n", design.rows.len());
        for r in &design.rows {
            let _ = write!(
                text,
                "CoreRow Horizontal\n  Coordinate : {}\n  Height : {}\n  Sitewidth : {}\n  Sitespacing : {}\n  Siteorient : {}\n  Sitesymmetry : {}\n  SubrowOrigin : {} NumSites : {}\nEnd\n",
                num(r.coordinate),
                num(r.height),
                num(r.site_width),
                num(r.site_spacing),
                r.site_orient,
                r.site_symmetry,
                num(r.subrow_origin),
                r.num_sites
            );
        }
        fs::write(dir.join(&name), text)?;
        listed.push(name);
    }
    let aux = dir.join(format!("{}.aux", base));
    fs::write(&aux, format!("RowBasedPlacement : {}\n", listed.join(" ")))?;
    Ok(aux)
}
