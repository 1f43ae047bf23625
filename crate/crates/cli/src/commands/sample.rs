// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use diffplace::checkpoint::Checkpoint;
use diffplace::ddpm::{sample_batch, NoiseSchedule, SampleOptions, SampleOutput};
use diffplace::io::bookshelf::write_placement;
use diffplace::io::dataset::{DatasetRecord, DatasetWriter};
use diffplace::metrics::{hpwl, legality_score};
use diffplace::Placement;
use log::{info, warn};

use super::GuidanceArgs;
use crate::config::FileConfig;
use crate::inputs::{
    load_circuits, write_json, write_placement_file, Circuit, Frame, TrajectoryFile, FILE_VERSION, TRAJECTORY_FORMAT,
};
use crate::manifest::Manifest;

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Design file, dataset or Bookshelf benchmark to place.
    #[arg(long)]
    netlist: PathBuf,
    /// Place only this record of a dataset.
    #[arg(long)]
    index: Option<usize>,
    #[command(flatten)]
    guidance: GuidanceArgs,
    /// Circuit k of a dataset uses seed `seed ^ k` [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Drop the fresh noise of each reverse step.
    #[arg(long)]
    deterministic: bool,
    /// Output: a placement file (`.json`), a dataset (`.jsonl`, required for
    /// several circuits) or a Bookshelf `.pl` for Bookshelf input.
    #[arg(long, short)]
    out: PathBuf,
    /// Also save the denoising trajectory of a single circuit (JSON; draw it
    /// with `render --trajectory`).
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Steps between trajectory frames [default: 200].
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Circuits sampled together [default: 64].
    #[arg(long, default_value_t = 64)]
    batch: usize,
}

enum OutKind {
    Placement,
    Dataset,
    Pl,
}

pub fn run(a: SampleArgs, file: &FileConfig, argv: &[String]) -> Result<()> {
    let guidance = a.guidance.resolve(file)?;
    let seed = a.seed.or(file.sample.seed).unwrap_or(0);
    let deterministic = a.deterministic || file.sample.deterministic.unwrap_or(false);
    let every = a.snapshot_every.or(file.sample.snapshot_every).unwrap_or(200);
    ensure!(every > 0, "--snapshot-every must be positive");
    ensure!(a.batch > 0, "--batch must be positive");
    let kind = match a.out.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => OutKind::Dataset,
        Some("pl") => OutKind::Pl,
        _ => OutKind::Placement,
    };

    let circuits = load_circuits(&a.netlist, a.index)?;
    ensure!(!circuits.is_empty(), "{} holds no circuits", a.netlist.display());
    if circuits.len() > 1 && !matches!(kind, OutKind::Dataset) {
        bail!(
            "{} circuits need a .jsonl output (or pick one with --index)",
            circuits.len()
        );
    }
    if a.trajectory.is_some() && circuits.len() > 1 {
        bail!("--trajectory needs a single circuit");
    }
    if matches!(kind, OutKind::Pl) && circuits[0].unit.is_none() {
        bail!(".pl output needs Bookshelf input (or a design file with a unit map)");
    }
    // The denoiser reads pin-to-pin edges; multi-pin nets become stars.
    let mut circuits = circuits;
    for c in &mut circuits {
        if c.netlist.edges.is_empty() && c.netlist.nets.is_some() {
            let dropped = c.netlist.drop_degenerate_nets();
            if dropped > 0 {
                warn!("ignoring {} nets with fewer than two pins", dropped);
            }
            c.netlist = c.netlist.hypergraph_to_edges()?;
        }
    }

    let ck = Checkpoint::load(&a.ckpt).with_context(|| format!("cannot load {}", a.ckpt.display()))?;
    let schedule = NoiseSchedule::cosine(ck.diffusion_steps)?;
    let opts = SampleOptions {
        guidance,
        deterministic,
        snapshot_every: a.trajectory.as_ref().map(|_| every),
    };

    let mut outputs: Vec<SampleOutput> = Vec::with_capacity(circuits.len());
    for (chunk_no, chunk) in circuits.chunks(a.batch).enumerate() {
        let base = chunk_no * a.batch;
        let netlists: Vec<_> = chunk.iter().map(|c| &c.netlist).collect();
        let context: Vec<Option<&Placement>> = chunk.iter().map(|c| c.placement.as_ref()).collect();
        let seeds: Vec<u64> = (0..chunk.len()).map(|k| seed ^ (base + k) as u64).collect();
        outputs.extend(sample_batch(&ck.params, &netlists, &context, &schedule, &opts, &seeds)?);
        info!("sampled {}/{} circuits", outputs.len(), circuits.len());
    }

    let scores = score(&circuits, &outputs)?;
    match kind {
        OutKind::Placement => write_placement_file(&a.out, &outputs[0].placement)?,
        OutKind::Pl => {
            let c = &circuits[0];
            write_placement(
                &outputs[0].placement,
                &c.netlist,
                c.unit.as_ref().expect("checked"),
                &a.out,
            )?
        }
        OutKind::Dataset => {
            let mut w = DatasetWriter::create(&a.out)?;
            for (k, (c, o)) in circuits.iter().zip(&outputs).enumerate() {
                let record = match &c.record {
                    Some(r) => DatasetRecord {
                        placement: o.placement.coords.clone(),
                        ..r.clone()
                    },
                    None => DatasetRecord {
                        circuit_id: k as u64,
                        objects: c.netlist.objects.clone(),
                        pins: Vec::new(),
                        edges: c.netlist.edges.clone(),
                        placement: o.placement.coords.clone(),
                        metadata: Default::default(),
                    },
                };
                w.write(&record)?;
            }
            w.finish()?;
        }
    }
    let mut written = vec![a.out.clone()];
    if let Some(path) = &a.trajectory {
        let o = &outputs[0];
        let mut frames = vec![Frame {
            label: format!("t={}", ck.diffusion_steps),
            t: ck.diffusion_steps,
            placement: o.initial.coords.clone(),
        }];
        frames.extend(o.trajectory.iter().map(|(t, p)| Frame {
            label: format!("x0 at t={}", t),
            t: *t,
            placement: p.coords.clone(),
        }));
        frames.push(Frame {
            label: "final".into(),
            t: 0,
            placement: o.placement.coords.clone(),
        });
        write_json(
            path,
            &TrajectoryFile {
                format: TRAJECTORY_FORMAT.into(),
                version: FILE_VERSION,
                diffusion_steps: ck.diffusion_steps,
                frames,
            },
        )?;
        written.push(path.clone());
    }

    let n = scores.len() as f64;
    let mean_legality = scores.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_hpwl = scores.iter().map(|s| s.1).sum::<f64>() / n;
    info!("mean legality {:.4}, mean HPWL {:.4}", mean_legality, mean_hpwl);
    let mut m = Manifest::new("sample", argv);
    m.config = serde_json::json!({
        "guidance": opts.guidance,
        "deterministic": deterministic,
        "snapshot_every": opts.snapshot_every,
        "diffusion_steps": ck.diffusion_steps,
        "model": ck.params.config,
    });
    m.seed = Some(seed);
    m.inputs = vec![a.ckpt.clone(), a.netlist.clone()];
    m.outputs = written;
    m.summary = serde_json::json!({
        "circuits": scores.len(),
        "mean_legality": mean_legality,
        "mean_hpwl": mean_hpwl,
        "guidance_failures": outputs.iter().map(|o| o.guidance_failures).sum::<usize>(),
    });
    m.write_beside(&a.out)?;
    Ok(())
}

fn score(circuits: &[Circuit], outputs: &[SampleOutput]) -> Result<Vec<(f64, f64)>> {
    circuits
        .iter()
        .zip(outputs)
        .map(|(c, o)| {
            Ok((
                legality_score(&o.placement, &c.netlist)?,
                hpwl(&o.placement, &c.netlist),
            ))
        })
        .collect()
}
