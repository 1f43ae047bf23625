// SPDX-License-Identifier: Apache-2.0

//! In-memory netlists and placements.
//!
//! Coordinates live on the square canvas `[-1, 1] x [-1, 1]`; object sizes and
//! pin offsets use the same units, so a full-width object has width 2.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Self { x: v[0], y: v[1] }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

/// Normalized width and height of one object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct ObjectGeom {
    pub width: f64,
    pub height: f64,
}

impl ObjectGeom {
    pub const fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Whether `offset` lies on or inside the object outline.
    pub fn contains_offset(&self, offset: Vec2) -> bool {
        let tol = 1e-9 * self.width.max(self.height).max(1.0);
        offset.x.abs() <= self.width / 2.0 + tol && offset.y.abs() <= self.height / 2.0 + tol
    }
}

impl From<[f64; 2]> for ObjectGeom {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<ObjectGeom> for [f64; 2] {
    fn from(g: ObjectGeom) -> Self {
        [g.width, g.height]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pin {
    pub owner: usize,
    pub offset: Vec2,
}

impl Pin {
    pub const fn new(owner: usize, offset: Vec2) -> Self {
        Self { owner, offset }
    }
}

/// Pin offsets at both ends of an edge, each relative to its owner's center.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeAttr {
    pub src_offset: Vec2,
    pub dst_offset: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub attr: EdgeAttr,
}

impl Edge {
    pub fn new(src: usize, dst: usize, src_offset: Vec2, dst_offset: Vec2) -> Self {
        Self {
            src,
            dst,
            attr: EdgeAttr { src_offset, dst_offset },
        }
    }
}

/// A multi-pin net. The first pin drives the net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub pins: Vec<Pin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Macro,
    Cluster,
    Cell,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Netlist {
    pub objects: Vec<ObjectGeom>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nets: Option<Vec<Net>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_mask: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<ObjectKind>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Placement {
    pub coords: Vec<Vec2>,
}

impl Placement {
    pub fn new(coords: Vec<Vec2>) -> Self {
        Self { coords }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            coords: vec![Vec2::ZERO; n],
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    /// Flattened `[x0, y0, x1, y1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.coords.iter().flat_map(|c| [c.x, c.y]).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        Self {
            coords: flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect(),
        }
    }
}

/// Where a pin sits inside a netlist, for violation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinSite {
    EdgeSrc(usize),
    EdgeDst(usize),
    Net { net: usize, pin: usize },
}

impl fmt::Display for PinSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PinSite::EdgeSrc(e) => write!(f, "edge {} source pin", e),
            PinSite::EdgeDst(e) => write!(f, "edge {} destination pin", e),
            PinSite::Net { net, pin } => write!(f, "net {} pin {}", net, pin),
        }
    }
}

/// A broken invariant found by [`Netlist::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ObjectSize {
        object: usize,
        width: f64,
        height: f64,
    },
    EndpointOutOfRange {
        site: PinSite,
        owner: usize,
        len: usize,
    },
    SelfLoop {
        edge: usize,
        object: usize,
    },
    DuplicateEdge {
        edge: usize,
        first: usize,
    },
    PinOutsideObject {
        site: PinSite,
        owner: usize,
        offset: Vec2,
    },
    MaskLength {
        field: &'static str,
        len: usize,
        expected: usize,
    },
    PlacementLength {
        len: usize,
        expected: usize,
    },
    NonFiniteCoordinate {
        object: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ObjectSize { object, width, height } => {
                write!(f, "object {}: size {}x{} outside (0, 2]", object, width, height)
            }
            Violation::EndpointOutOfRange { site, owner, len } => {
                write!(f, "{}: object index {} out of range ({} objects)", site, owner, len)
            }
            Violation::SelfLoop { edge, object } => write!(f, "edge {}: both ends on object {}", edge, object),
            Violation::DuplicateEdge { edge, first } => {
                write!(f, "edge {}: duplicates edge {} with identical pins", edge, first)
            }
            Violation::PinOutsideObject { site, owner, offset } => write!(
                f,
                "{}: offset ({}, {}) lies outside object {}",
                site, offset.x, offset.y, owner
            ),
            Violation::MaskLength { field, len, expected } => {
                write!(f, "{} has {} entries, expected {}", field, len, expected)
            }
            Violation::PlacementLength { len, expected } => {
                write!(f, "placement has {} coordinates, expected {}", len, expected)
            }
            Violation::NonFiniteCoordinate { object } => write!(f, "object {}: coordinate is not finite", object),
        }
    }
}

fn edge_key(e: &Edge) -> (usize, usize, [u64; 4]) {
    let a = e.attr.src_offset;
    let b = e.attr.dst_offset;
    if e.src <= e.dst {
        (
            e.src,
            e.dst,
            [a.x.to_bits(), a.y.to_bits(), b.x.to_bits(), b.y.to_bits()],
        )
    } else {
        (
            e.dst,
            e.src,
            [b.x.to_bits(), b.y.to_bits(), a.x.to_bits(), a.y.to_bits()],
        )
    }
}

impl Netlist {
    pub fn new(objects: Vec<ObjectGeom>) -> Self {
        Self {
            objects,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed_mask.as_ref().is_some_and(|m| m[i])
    }

    pub fn movable_count(&self) -> usize {
        (0..self.len()).filter(|&i| !self.is_fixed(i)).count()
    }

    pub fn kind(&self, i: usize) -> Option<ObjectKind> {
        self.kinds.as_ref().map(|k| k[i])
    }

    pub fn name(&self, i: usize) -> Option<&str> {
        self.names.as_ref().map(|n| n[i].as_str())
    }

    pub fn total_area(&self) -> f64 {
        self.objects.iter().map(|o| o.area()).sum()
    }

    /// Checks every structural invariant, returning one entry per violation.
    pub fn validate(&self, placement: Option<&Placement>) -> Vec<Violation> {
        let n = self.objects.len();
        let mut out = Vec::new();
        for (i, o) in self.objects.iter().enumerate() {
            let ok = |v: f64| v > 0.0 && v <= 2.0;
            if !ok(o.width) || !ok(o.height) {
                out.push(Violation::ObjectSize {
                    object: i,
                    width: o.width,
                    height: o.height,
                });
            }
        }
        let check_pin = |site: PinSite, owner: usize, offset: Vec2, out: &mut Vec<Violation>| {
            if owner >= n {
                out.push(Violation::EndpointOutOfRange { site, owner, len: n });
                false
            } else {
                if !self.objects[owner].contains_offset(offset) {
                    out.push(Violation::PinOutsideObject { site, owner, offset });
                }
                true
            }
        };
        let mut seen: HashMap<(usize, usize, [u64; 4]), usize> = HashMap::new();
        for (ei, e) in self.edges.iter().enumerate() {
            let a = check_pin(PinSite::EdgeSrc(ei), e.src, e.attr.src_offset, &mut out);
            let b = check_pin(PinSite::EdgeDst(ei), e.dst, e.attr.dst_offset, &mut out);
            if e.src == e.dst {
                out.push(Violation::SelfLoop {
                    edge: ei,
                    object: e.src,
                });
            }
            if a && b {
                if let Some(&first) = seen.get(&edge_key(e)) {
                    out.push(Violation::DuplicateEdge { edge: ei, first });
                } else {
                    seen.insert(edge_key(e), ei);
                }
            }
        }
        if let Some(nets) = &self.nets {
            for (ni, net) in nets.iter().enumerate() {
                for (pi, p) in net.pins.iter().enumerate() {
                    check_pin(PinSite::Net { net: ni, pin: pi }, p.owner, p.offset, &mut out);
                }
            }
        }
        let masks: [(&'static str, Option<usize>); 3] = [
            ("fixed_mask", self.fixed_mask.as_ref().map(|m| m.len())),
            ("names", self.names.as_ref().map(|m| m.len())),
            ("kinds", self.kinds.as_ref().map(|m| m.len())),
        ];
        for (field, len) in masks {
            if let Some(len) = len {
                if len != n {
                    out.push(Violation::MaskLength {
                        field,
                        len,
                        expected: n,
                    });
                }
            }
        }
        if let Some(p) = placement {
            if p.len() != n {
                out.push(Violation::PlacementLength {
                    len: p.len(),
                    expected: n,
                });
            }
            for (i, c) in p.coords.iter().enumerate() {
                if !c.is_finite() {
                    out.push(Violation::NonFiniteCoordinate { object: i });
                }
            }
        }
        out
    }

    /// Expands multi-pin nets into undirected driver-to-sink edges.
    ///
    /// Each net's first pin is its driver. Sinks on the driver's own object
    /// emit nothing, and exact duplicates (same objects, same offsets) are
    /// emitted once. The nets themselves are kept for wirelength.
    pub fn hypergraph_to_edges(&self) -> Result<Netlist> {
        let nets = self.nets.as_deref().unwrap_or(&[]);
        let mut edges = Vec::new();
        let mut seen = HashMap::new();
        for (ni, net) in nets.iter().enumerate() {
            if net.pins.len() < 2 {
                return Err(Error::DegenerateNet {
                    net: ni,
                    name: net.name.clone(),
                    pins: net.pins.len(),
                });
            }
            let driver = net.pins[0];
            for sink in &net.pins[1..] {
                if sink.owner == driver.owner {
                    continue;
                }
                let e = Edge::new(driver.owner, sink.owner, driver.offset, sink.offset);
                if seen.insert(edge_key(&e), ()).is_none() {
                    edges.push(e);
                }
            }
        }
        Ok(Netlist { edges, ..self.clone() })
    }

    /// Drops nets with fewer than two pins; returns how many were removed.
    pub fn drop_degenerate_nets(&mut self) -> usize {
        match &mut self.nets {
            Some(nets) => {
                let before = nets.len();
                nets.retain(|n| n.pins.len() >= 2);
                before - nets.len()
            }
            None => 0,
        }
    }
}
