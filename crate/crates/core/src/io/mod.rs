// SPDX-License-Identifier: Apache-2.0

//! File formats: Bookshelf benchmarks, cluster partitions, JSONL datasets,
//! placement exports and SVG drawings.

pub mod bookshelf;
pub mod clusters;
pub mod dataset;
pub mod svg;
