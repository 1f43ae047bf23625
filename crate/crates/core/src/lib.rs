// SPDX-License-Identifier: Apache-2.0

//! Macro placement with a graph denoising diffusion model.
//!
//! The crate covers the whole pipeline: synthetic training data
//! ([`synthgen`]), exact placement metrics ([`metrics`]), the noise-prediction
//! network ([`denoiser`]), diffusion training and sampling ([`ddpm`]),
//! potential-based guidance ([`guidance`]) and file formats ([`io`]).
//!
//! All coordinates are normalized to the canvas `[-1, 1] x [-1, 1]`.

pub mod checkpoint;
pub mod ddpm;
pub mod denoiser;
pub mod guidance;
pub mod io;
pub mod metrics;
pub mod netlist;
pub mod rng;
pub mod synthgen;
pub mod train;

pub use netlist::{Edge, EdgeAttr, Net, Netlist, ObjectGeom, ObjectKind, Pin, Placement, Vec2, Violation};

use std::path::PathBuf;

use thiserror::Error;

fn net_label(index: &usize, name: &Option<String>) -> String {
    match name {
        Some(n) => format!("{} ({})", index, n),
        None => index.to_string(),
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("net {} has {pins} pin(s), at least 2 are required", net_label(.net, .name))]
    DegenerateNet {
        net: usize,
        name: Option<String>,
        pins: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Metric(String),
    #[error("{}:{line}: {msg}", .file.display())]
    Parse { file: PathBuf, line: usize, msg: String },
    #[error("dataset record {record}: {msg}")]
    Dataset { record: usize, msg: String },
    #[error("dataset version {found} is not supported (expected {expected})")]
    DatasetVersion { found: u32, expected: u32 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("netlist is invalid: {0}")]
    InvalidNetlist(String),
    #[error(transparent)]
    Grad(#[from] diffplace_grad::GradError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
