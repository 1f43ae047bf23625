// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use diffplace::io::dataset::DatasetWriter;
use diffplace::synthgen::generate_dataset;
use log::info;

use super::synth_params;
use crate::config::FileConfig;
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Preset name (toy, v0, v1, v2) or a TOML file of generator parameters
    /// [default: v0].
    #[arg(long)]
    params: Option<String>,
    /// Number of circuits [default: 100].
    #[arg(long)]
    count: Option<usize>,
    /// Circuit k is generated from seed `seed ^ k` [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Generator threads; the output does not depend on it [default: 1].
    #[arg(long)]
    workers: Option<usize>,
    /// Output dataset (`.jsonl`). Statistics go to `<out>.stats.json`.
    #[arg(long, short)]
    out: PathBuf,
}

pub fn run(a: GenArgs, file: &FileConfig, argv: &[String]) -> Result<()> {
    let spec = a.params.or(file.gen.params.clone()).unwrap_or_else(|| "v0".into());
    let params = synth_params(&spec, file)?;
    let count = a.count.or(file.gen.count).unwrap_or(100);
    let seed = a.seed.or(file.gen.seed).unwrap_or(0);
    let workers = a.workers.or(file.gen.workers).unwrap_or(1);

    let mut sink = DatasetWriter::create(&a.out)?;
    let stats = generate_dataset(&params, &spec, count, seed, workers, &mut sink)?;
    sink.finish()?;
    info!(
        "wrote {} circuits to {} ({:.1} objects, {:.0} edges on average, {:.1} circuits/s)",
        count,
        a.out.display(),
        stats.objects.mean,
        stats.edges.mean,
        stats.circuits_per_sec
    );
    let stats_path = {
        let mut name = a.out.file_name().unwrap_or_default().to_os_string();
        name.push(".stats.json");
        a.out.with_file_name(name)
    };
    crate::inputs::write_json(&stats_path, &stats)?;

    let mut m = Manifest::new("gen", argv);
    m.config = serde_json::json!({ "params": spec, "resolved": params, "count": count, "workers": workers });
    m.seed = Some(seed);
    m.outputs = vec![a.out.clone(), stats_path];
    m.summary = serde_json::json!({
        "objects_mean": stats.objects.mean,
        "edges_mean": stats.edges.mean,
        "incomplete": stats.incomplete,
    });
    m.write_beside(&a.out)?;
    Ok(())
}
