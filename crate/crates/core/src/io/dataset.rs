// SPDX-License-Identifier: Apache-2.0

//! Line-delimited JSON datasets.
//!
//! The first line is a header naming the format and version; every further
//! line is one [`DatasetRecord`]. Floats are written in shortest round-trip
//! form, so reading a file back yields bit-identical values.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::netlist::{Edge, Netlist, ObjectGeom, Pin, Placement, Vec2};
use crate::{Error, Result};

pub const FORMAT: &str = "diffplace-dataset";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Name of the parameter set that produced the record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub incomplete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub circuit_id: u64,
    pub objects: Vec<ObjectGeom>,
    #[serde(default)]
    pub pins: Vec<Pin>,
    pub edges: Vec<Edge>,
    pub placement: Vec<Vec2>,
    #[serde(default)]
    pub metadata: RecordMeta,
}

impl DatasetRecord {
    pub fn netlist(&self) -> Netlist {
        Netlist {
            objects: self.objects.clone(),
            edges: self.edges.clone(),
            ..Default::default()
        }
    }

    pub fn placement(&self) -> Placement {
        Placement::new(self.placement.clone())
    }
}

/// Streams records to a file or any writer.
///
/// File output goes to `<path>.partial` and is renamed into place by
/// [`DatasetWriter::finish`], so an interrupted run never leaves a file
/// that looks complete.
pub struct DatasetWriter {
    out: BufWriter<Box<dyn Write + Send>>,
    paths: Option<(PathBuf, PathBuf)>,
    written: usize,
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

impl DatasetWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let tmp = partial_path(path);
        let file = File::create(&tmp)?;
        let mut w = Self::from_writer(Box::new(file))?;
        w.paths = Some((tmp, path.to_path_buf()));
        Ok(w)
    }

    pub fn from_writer(inner: Box<dyn Write + Send>) -> Result<Self> {
        let mut out = BufWriter::new(inner);
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        Ok(Self {
            out,
            paths: None,
            written: 0,
        })
    }

    pub fn write(&mut self, record: &DatasetRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        if let Some((tmp, path)) = self.paths.take() {
            drop(self.out);
            fs::rename(tmp, path)?;
        }
        Ok(self.written)
    }
}

/// Reads records one line at a time.
pub struct DatasetReader<R> {
    lines: std::io::Lines<R>,
    next_record: usize,
}

impl DatasetReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: BufRead> DatasetReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let first = match lines.next() {
            Some(l) => l?,
            None => {
                return Err(Error::Dataset {
                    record: 0,
                    msg: "missing header line".into(),
                })
            }
        };
        let header: Header = serde_json::from_str(&first).map_err(|e| Error::Dataset {
            record: 0,
            msg: format!("bad header: {}", e),
        })?;
        if header.format != FORMAT {
            return Err(Error::Dataset {
                record: 0,
                msg: format!("not a dataset file (format '{}')", header.format),
            });
        }
        if header.version != VERSION {
            return Err(Error::DatasetVersion {
                found: header.version,
                expected: VERSION,
            });
        }
        Ok(Self { lines, next_record: 0 })
    }
}

impl<R: BufRead> Iterator for DatasetReader<R> {
    type Item = Result<DatasetRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.lines.next()? {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        let record = self.next_record;
        self.next_record += 1;
        if line.trim().is_empty() {
            return Some(Err(Error::Dataset {
                record,
                msg: "empty line".into(),
            }));
        }
        Some(serde_json::from_str(&line).map_err(|e| Error::Dataset {
            record,
            msg: e.to_string(),
        }))
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    DatasetReader::open(path)?.collect()
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut w = DatasetWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}
