// SPDX-License-Identifier: Apache-2.0

//! Aggregation of standard cells into clusters from an external partition.
//!
//! Partition files hold one cluster id per line, one line per movable
//! standard cell in netlist order (the layout hMetis writes). Blank lines
//! and `#` comments are skipped.

use std::collections::BTreeSet;
use std::path::Path;

use crate::netlist::{Net, Netlist, ObjectGeom, ObjectKind, Pin, Placement, Vec2};
use crate::{Error, Result};

fn is_clusterable(netlist: &Netlist, i: usize) -> bool {
    netlist.kind(i) == Some(ObjectKind::Cell) && !netlist.is_fixed(i)
}

/// Reads a partition file into a cluster id per movable standard cell.
pub fn read_partition(path: &Path, k: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut ids = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            file: path.to_path_buf(),
            line: n + 1,
            msg,
        };
        let id: usize = line.parse().map_err(|_| err(format!("bad cluster id '{}'", line)))?;
        if id >= k {
            return Err(err(format!("cluster id {} is not below {}", id, k)));
        }
        ids.push(id);
    }
    Ok(ids)
}

/// Result of clustering: the new netlist, the placement carried over (each
/// cluster at the area-weighted centroid of its members) and, for every
/// original object, the object it became.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustered {
    pub netlist: Netlist,
    pub placement: Option<Placement>,
    pub object_map: Vec<usize>,
}

/// Replaces movable standard cells by one square object per non-empty
/// cluster with the members' total area. Other objects pass through in
/// their original order, followed by the clusters in id order. Cluster pins
/// sit at the cluster center; nets whose pins all fall in one cluster are
/// removed, and repeated pins on the same cluster are merged.
pub fn apply_clusters(
    netlist: &Netlist,
    placement: Option<&Placement>,
    assignment: &[usize],
    k: usize,
) -> Result<Clustered> {
    let cells: Vec<usize> = (0..netlist.len()).filter(|&i| is_clusterable(netlist, i)).collect();
    if assignment.len() != cells.len() {
        return Err(Error::InvalidNetlist(format!(
            "partition assigns {} cells but the netlist has {} movable standard cells",
            assignment.len(),
            cells.len()
        )));
    }
    if let Some(&bad) = assignment.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidNetlist(format!("cluster id {} is not below {}", bad, k)));
    }

    let mut area = vec![0.0; k];
    let mut moment = vec![Vec2::ZERO; k];
    for (&cell, &c) in cells.iter().zip(assignment) {
        let a = netlist.objects[cell].area();
        area[c] += a;
        if let Some(p) = placement {
            let q = p.coords[cell];
            moment[c] = moment[c] + Vec2::new(a * q.x, a * q.y);
        }
    }
    let mut count = vec![0usize; k];
    for &c in assignment {
        count[c] += 1;
    }

    let mut object_map = vec![usize::MAX; netlist.len()];
    let mut objects = Vec::new();
    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut fixed = Vec::new();
    let mut coords = Vec::new();
    for i in 0..netlist.len() {
        if is_clusterable(netlist, i) {
            continue;
        }
        object_map[i] = objects.len();
        objects.push(netlist.objects[i]);
        names.push(netlist.name(i).map(str::to_string).unwrap_or_else(|| format!("o{}", i)));
        kinds.push(netlist.kind(i).unwrap_or(ObjectKind::Macro));
        fixed.push(netlist.is_fixed(i));
        if let Some(p) = placement {
            coords.push(p.coords[i]);
        }
    }
    let mut cluster_object = vec![usize::MAX; k];
    for c in 0..k {
        if count[c] == 0 {
            continue;
        }
        cluster_object[c] = objects.len();
        let side = area[c].sqrt();
        objects.push(ObjectGeom::new(side, side));
        names.push(format!("cluster{}", c));
        kinds.push(ObjectKind::Cluster);
        fixed.push(false);
        if placement.is_some() {
            let centroid = if area[c] > 0.0 {
                Vec2::new(moment[c].x / area[c], moment[c].y / area[c])
            } else {
                Vec2::ZERO
            };
            coords.push(centroid);
        }
    }
    for (&cell, &c) in cells.iter().zip(assignment) {
        object_map[cell] = cluster_object[c];
    }

    let mut nets = Vec::new();
    for net in netlist.nets.as_deref().unwrap_or(&[]) {
        let mut pins = Vec::with_capacity(net.pins.len());
        let mut clusters_seen = BTreeSet::new();
        let mut only_clusters = true;
        for p in &net.pins {
            let owner = object_map[p.owner];
            if is_clusterable(netlist, p.owner) {
                if clusters_seen.insert(owner) {
                    pins.push(Pin {
                        owner,
                        offset: Vec2::ZERO,
                    });
                }
            } else {
                only_clusters = false;
                pins.push(Pin {
                    owner,
                    offset: p.offset,
                });
            }
        }
        if only_clusters && clusters_seen.len() <= 1 {
            continue;
        }
        nets.push(Net {
            name: net.name.clone(),
            pins,
        });
    }

    Ok(Clustered {
        netlist: Netlist {
            objects,
            edges: Vec::new(),
            nets: Some(nets),
            fixed_mask: Some(fixed),
            names: Some(names),
            kinds: Some(kinds),
        },
        placement: placement.map(|_| Placement::new(coords)),
        object_map,
    })
}
