// SPDX-License-Identifier: Apache-2.0

mod common;

use common::acceptance::Bins;
use common::rng;
use diffplace::io::dataset::{read_dataset, DatasetWriter};
use diffplace::metrics::legality_score;
use diffplace::synthgen::*;
use proptest::prelude::*;

#[test]
fn v0_sizes_near_targets_and_always_legal() {
    let params = SynthParams::v0();
    let n = 200;
    let (mut objects, mut edges) = (0.0, 0.0);
    for seed in 0..n {
        let c = generate_circuit(&params, seed).unwrap();
        assert_eq!(legality_score(&c.placement, &c.netlist).unwrap(), 1.0, "seed {}", seed);
        assert!(c.netlist.validate(Some(&c.placement)).is_empty());
        objects += c.meta.objects as f64;
        edges += c.meta.edges as f64;
    }
    let (objects, edges) = (objects / n as f64, edges / n as f64);
    assert!((objects / 230.0 - 1.0).abs() <= 0.15, "mean objects {}", objects);
    assert!((edges / 1740.0 - 1.0).abs() <= 0.15, "mean edges {}", edges);
}

#[test]
fn exponential_acceptance_slope_is_minus_one_over_scale() {
    let params = SynthParams::v0();
    let mut bins = Bins::new(0.05, 40);
    for seed in 0..60 {
        let c = generate_circuit(&params, 1000 + seed).unwrap();
        bins.add(&c.pins, &c.placement, &c.netlist.edges);
    }
    let slope = bins.log_rate_slope(20.0);
    assert!((slope / -5.0 - 1.0).abs() <= 0.10, "slope {}", slope);
    // The intercept is gamma: the first bin's rate sits just under it.
    let first = bins.edges[0] / bins.pairs[0];
    assert!(
        first < 0.21 && first > 0.21 * (-0.05f64 / 0.2).exp(),
        "first bin rate {}",
        first
    );
}

#[test]
fn linear_kind_has_hard_cutoff() {
    let params = SynthParams {
        edge_dist_kind: EdgeDistKind::Linear,
        scale_s: ScaleSpec::Fixed(0.3),
        gamma: GammaSpec::Fixed(0.5),
        ..SynthParams::toy()
    };
    for seed in 0..20 {
        let c = generate_circuit(&params, seed).unwrap();
        assert!(edge_lengths(&c.netlist, &c.placement).all(|l| l < 0.3));
    }
}

#[test]
fn pin_counts_follow_power_law() {
    let mut r = rng(3);
    let counts = power_law_counts(200_000, 1, 32, 1.85, &mut r);
    assert!(counts.iter().all(|&c| (1..=32).contains(&c)));
    let freq = |k: u32| counts.iter().filter(|&&c| c == k).count() as f64;
    let ratio = freq(1) / freq(2);
    assert!((ratio / 2f64.powf(1.85) - 1.0).abs() < 0.05, "ratio {}", ratio);
}

fn dataset_bytes(workers: usize) -> (Vec<u8>, DatasetStats) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let mut w = DatasetWriter::create(&path).unwrap();
    let stats = generate_dataset(&SynthParams::toy(), "toy", 23, 99, workers, &mut w).unwrap();
    w.finish().unwrap();
    (std::fs::read(&path).unwrap(), stats)
}

#[test]
fn dataset_independent_of_worker_count() {
    let (one, stats) = dataset_bytes(1);
    let (three, _) = dataset_bytes(3);
    assert_eq!(one, three);
    assert_eq!(stats.count, 23);
    let total: u64 = stats.edge_length_histogram.iter().sum();
    // The mean is a rounded quotient, so mean * count is only close.
    assert!((total as f64 - stats.edges.mean * 23.0).abs() <= 1e-9 * total as f64);
}

#[test]
fn dataset_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let mut w = DatasetWriter::create(&path).unwrap();
    generate_dataset(&SynthParams::toy(), "toy", 5, 7, 1, &mut w).unwrap();
    w.finish().unwrap();
    let records = read_dataset(&path).unwrap();
    assert_eq!(records.len(), 5);
    for (k, rec) in records.iter().enumerate() {
        let c = generate_circuit(&SynthParams::toy(), 7 ^ k as u64).unwrap();
        assert_eq!(rec.circuit_id, k as u64);
        assert_eq!(rec.netlist(), c.netlist);
        assert_eq!(rec.placement(), c.placement);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_circuits_are_consistent(seed in any::<u64>(), preset in 0usize..3) {
        let params = [SynthParams::toy(), SynthParams::v1(), SynthParams::v2()][preset].clone();
        // v1 and v2 are large; keep the case count modest by shrinking them.
        let params = SynthParams { stop_density: Uniform { low: 0.3, high: 0.4 }, ..params };
        let c = generate_circuit(&params, seed).unwrap();
        prop_assert_eq!(legality_score(&c.placement, &c.netlist).unwrap(), 1.0);
        prop_assert!(c.netlist.validate(Some(&c.placement)).is_empty());
        for e in &c.netlist.edges {
            prop_assert!(e.src != e.dst);
        }
        for p in &c.pins {
            prop_assert!(c.netlist.objects[p.owner].contains_offset(p.offset));
        }
        prop_assert_eq!(c.meta.edges, c.netlist.edges.len());
    }
}
