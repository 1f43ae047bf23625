// SPDX-License-Identifier: Apache-2.0

//! Model checkpoints.
//!
//! A checkpoint is one JSON header line followed by raw little-endian `f64`
//! data: every parameter tensor in header order, then (when optimizer state
//! is present) all first moments and all second moments in the same order.
//! Values round-trip bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use diffplace_grad::{AdamConfig, AdamState, Tensor};
use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserConfig, DenoiserParams};
use crate::{Error, Result};

pub const FORMAT: &str = "diffplace-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Position of the first value, counted in `f64`s from the start of the data.
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerHeader {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: DenoiserConfig,
    /// Training steps completed.
    step: u64,
    diffusion_steps: usize,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerHeader>,
}

/// Everything needed to resume training or to sample.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: DenoiserParams,
    pub step: u64,
    pub diffusion_steps: usize,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.partial");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::Checkpoint(format!("cannot open {}: {}", path.display(), e)))?;
        Self::read_from(BufReader::new(f))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut offset = 0;
        let tensors = self
            .params
            .names()
            .iter()
            .zip(self.params.tensors())
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            config: self.params.config,
            step: self.step,
            diffusion_steps: self.diffusion_steps,
            tensors,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                lr: o.config.lr,
                beta1: o.config.beta1,
                beta2: o.config.beta2,
                eps: o.config.eps,
                step: o.step_count(),
            }),
        };
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        for t in self.params.tensors() {
            write_f64s(w, t.data())?;
        }
        if let Some(o) = &self.optimizer {
            let n = self.params.tensors().len();
            for i in 0..n {
                write_f64s(w, o.moments(i).0)?;
            }
            for i in 0..n {
                write_f64s(w, o.moments(i).1)?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl BufRead) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: Header =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Checkpoint(format!("bad header: {}", e)))?;
        if header.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "not a checkpoint (format {:?})",
                header.format
            )));
        }
        if header.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} is not supported (expected {})",
                header.version, VERSION
            )));
        }
        let mut expected = 0;
        for e in &header.tensors {
            if e.offset != expected {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has offset {}, expected {}",
                    e.name, e.offset, expected
                )));
            }
            expected += e.shape.iter().product::<usize>();
        }
        let mut named = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            let data = read_f64s(&mut r, e.shape.iter().product(), &e.name)?;
            named.push((e.name.clone(), Tensor::from_vec(e.shape.clone(), data)?));
        }
        let lens: Vec<usize> = named.iter().map(|(_, t)| t.len()).collect();
        let params = DenoiserParams::from_named(header.config, named)?;
        let optimizer = match header.optimizer {
            None => None,
            Some(o) => {
                let mut read_all = |kind: &str| -> Result<Vec<Vec<f64>>> {
                    lens.iter().map(|&n| read_f64s(&mut r, n, kind)).collect()
                };
                let m = read_all("first moments")?;
                let v = read_all("second moments")?;
                let cfg = AdamConfig {
                    lr: o.lr,
                    beta1: o.beta1,
                    beta2: o.beta2,
                    eps: o.eps,
                };
                Some(AdamState::from_parts(cfg, o.step, m, v)?)
            }
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after data".into()));
        }
        Ok(Self {
            params,
            step: header.step,
            diffusion_steps: header.diffusion_steps,
            optimizer,
        })
    }
}

fn write_f64s(w: &mut impl Write, data: &[f64]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint(format!("data ends inside {}", what)))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}
