// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use diffplace::checkpoint::Checkpoint;
use diffplace::ddpm::{sample_batch, NoiseSchedule, SampleOptions};
use diffplace::metrics::{hpwl, legality_score};
use diffplace::synthgen::{generate_circuit, EdgeDistKind, GammaSpec, ScaleSpec, SynthParams};
use diffplace::Placement;
use log::info;

use super::{synth_params, GuidanceArgs};
use crate::chart::{line_chart, Series};
use crate::config::FileConfig;
use crate::manifest::Manifest;

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Edge-count multiplier gamma.
    Edges,
    /// Object size scale (smaller objects, more vertices).
    Vertices,
    /// Edge length scale s.
    Scale,
    /// Edge distribution family.
    EdgeDist,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Edges => "edges",
            Axis::Vertices => "vertices",
            Axis::Scale => "scale",
            Axis::EdgeDist => "edge-dist",
        }
    }

    fn default_grid(self) -> &'static str {
        match self {
            Axis::Edges => "0.25,0.5,1,2",
            Axis::Vertices => "0.35,0.25,0.18,0.13",
            Axis::Scale => "0.1,0.2,0.4,0.8",
            Axis::EdgeDist => "exponential,sigmoid,linear",
        }
    }

    fn apply(self, base: &SynthParams, value: &str) -> Result<SynthParams> {
        let mut p = base.clone();
        if self == Axis::EdgeDist {
            p.edge_dist_kind = value.parse::<EdgeDistKind>()?;
            return Ok(p);
        }
        let v: f64 = value
            .parse()
            .with_context(|| format!("grid value '{}' is not a number", value))?;
        ensure!(v > 0.0, "grid values must be positive, got {}", v);
        match self {
            Axis::Edges => p.gamma = GammaSpec::Fixed(v),
            Axis::Vertices => p.size_dist.scale = v,
            Axis::Scale => p.scale_s = ScaleSpec::Fixed(v),
            Axis::EdgeDist => unreachable!(),
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Generator parameter to sweep.
    #[arg(long, value_enum)]
    axis: Axis,
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Comma-separated sweep values (numbers, or distribution names for
    /// edge-dist). Defaults depend on the axis.
    #[arg(long)]
    grid: Option<String>,
    /// Generator preset or parameter file the sweep starts from [default: toy].
    #[arg(long)]
    base: Option<String>,
    /// Circuits per grid point.
    #[arg(long, default_value_t = 16)]
    count: usize,
    /// Sampling seeds per circuit.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Seed of the evaluation circuits.
    #[arg(long, default_value_t = 1_000_000)]
    data_seed: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    guidance: GuidanceArgs,
    /// Output CSV; the chart is written next to it with an `.svg` extension.
    #[arg(long, short)]
    out: PathBuf,
}

struct Row {
    value: String,
    objects: f64,
    edges: f64,
    legality_median: f64,
    legality_mean: f64,
    ratio_mean: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run(a: StudyArgs, file: &FileConfig, argv: &[String]) -> Result<()> {
    ensure!(a.count > 0 && a.seeds > 0, "--count and --seeds must be positive");
    let guidance = a.guidance.resolve(file)?;
    let base_name = a.base.clone().unwrap_or_else(|| "toy".into());
    let base = synth_params(&base_name, file)?;
    let grid_text = a.grid.clone().unwrap_or_else(|| a.axis.default_grid().into());
    let grid: Vec<String> = grid_text
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if grid.is_empty() {
        bail!("the sweep grid is empty");
    }
    let points: Vec<SynthParams> = grid.iter().map(|v| a.axis.apply(&base, v)).collect::<Result<_>>()?;
    let seed = a.seed.or(file.sample.seed).unwrap_or(0);

    let ck = Checkpoint::load(&a.ckpt).with_context(|| format!("cannot load {}", a.ckpt.display()))?;
    let schedule = NoiseSchedule::cosine(ck.diffusion_steps)?;
    let opts = SampleOptions {
        guidance,
        ..Default::default()
    };

    let mut rows = Vec::with_capacity(grid.len());
    for (value, params) in grid.iter().zip(&points) {
        let circuits = (0..a.count as u64)
            .map(|k| generate_circuit(params, a.data_seed ^ k))
            .collect::<diffplace::Result<Vec<_>>>()?;
        let netlists: Vec<_> = circuits.iter().map(|c| &c.netlist).collect();
        let context: Vec<Option<&Placement>> = vec![None; circuits.len()];
        let (mut legality, mut ratios) = (Vec::new(), Vec::new());
        for s in 0..a.seeds {
            let seeds: Vec<u64> = (0..circuits.len() as u64).map(|k| (seed + s) ^ k).collect();
            let out = sample_batch(&ck.params, &netlists, &context, &schedule, &opts, &seeds)?;
            for (c, o) in circuits.iter().zip(&out) {
                legality.push(legality_score(&o.placement, &c.netlist)?);
                let reference = hpwl(&c.placement, &c.netlist);
                if reference > 0.0 {
                    ratios.push(hpwl(&o.placement, &c.netlist) / reference);
                }
            }
        }
        let n = circuits.len() as f64;
        let row = Row {
            value: value.clone(),
            objects: circuits.iter().map(|c| c.meta.objects as f64).sum::<f64>() / n,
            edges: circuits.iter().map(|c| c.meta.edges as f64).sum::<f64>() / n,
            legality_mean: legality.iter().sum::<f64>() / legality.len() as f64,
            legality_median: median(legality),
            ratio_mean: if ratios.is_empty() {
                f64::NAN
            } else {
                ratios.iter().sum::<f64>() / ratios.len() as f64
            },
        };
        info!(
            "{} = {}: legality median {:.4}, HPWL ratio {:.3}",
            a.axis.name(),
            value,
            row.legality_median,
            row.ratio_mean
        );
        rows.push(row);
    }

    let mut csv = String::from(
        "axis,value,circuits,samples,objects_mean,edges_mean,legality_median,legality_mean,hpwl_ratio_mean\n",
    );
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            a.axis.name(),
            r.value,
            a.count,
            a.count as u64 * a.seeds,
            r.objects,
            r.edges,
            r.legality_median,
            r.legality_mean,
            r.ratio_mean
        );
    }
    std::fs::write(&a.out, csv).with_context(|| format!("cannot write {}", a.out.display()))?;
    let chart_path = a.out.with_extension("svg");
    let categories: Vec<String> = rows.iter().map(|r| r.value.clone()).collect();
    let chart = line_chart(
        &format!("{} sweep", a.axis.name()),
        a.axis.name(),
        &categories,
        &[
            (
                "legality",
                vec![
                    Series {
                        name: "median",
                        color: "#1f77b4",
                        values: rows.iter().map(|r| r.legality_median).collect(),
                    },
                    Series {
                        name: "mean",
                        color: "#ff7f0e",
                        values: rows.iter().map(|r| r.legality_mean).collect(),
                    },
                ],
            ),
            (
                "HPWL ratio",
                vec![Series {
                    name: "mean",
                    color: "#2ca02c",
                    values: rows.iter().map(|r| r.ratio_mean).collect(),
                }],
            ),
        ],
    );
    std::fs::write(&chart_path, chart).with_context(|| format!("cannot write {}", chart_path.display()))?;

    let mut m = Manifest::new("study", argv);
    m.config = serde_json::json!({
        "axis": a.axis.name(),
        "grid": grid,
        "base": base_name,
        "count": a.count,
        "seeds": a.seeds,
        "data_seed": a.data_seed,
        "guidance": opts.guidance,
    });
    m.seed = Some(seed);
    m.inputs = vec![a.ckpt.clone()];
    m.outputs = vec![a.out.clone(), chart_path];
    m.write_beside(&a.out)?;
    Ok(())
}
