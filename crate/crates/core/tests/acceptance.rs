// SPDX-License-Identifier: Apache-2.0

//! Acceptance checks, one verdict line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the verdicts always reach
//! the terminal. The toy end-to-end run takes about forty minutes on one
//! core and only runs when asked:
//!
//! ```text
//! cargo test -p diffplace --test acceptance -- --include-ignored
//! ```
//!
//! `DIFFPLACE_ACCEPTANCE_TOY=1` does the same.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use common::acceptance::Bins;
use common::oracle::*;
use common::*;
use diffplace::ddpm::*;
use diffplace::denoiser::*;
use diffplace::guidance::*;
use diffplace::io::bookshelf::*;
use diffplace::io::dataset::{read_dataset, write_dataset};
use diffplace::io::svg::{render_filmstrip, render_svg, SvgOptions};
use diffplace::metrics::*;
use diffplace::synthgen::*;
use diffplace::train::{TrainConfig, Trainer};
use diffplace::{Edge, Netlist, ObjectGeom, ObjectKind, Placement, Vec2};
use diffplace_grad::{AdamConfig, AdamState, Tape};
use rand::seq::SliceRandom;
use rand::Rng;

// Metric oracles.
const HPWL_REL_TOL: f64 = 1e-12;
const LEGALITY_MC_TOL: f64 = 2e-3;
/// Strata per side of the Monte Carlo raster: 1000^2 = 10^6 samples.
const LEGALITY_MC_STRATA: usize = 1000;
const RUDY_TOL: f64 = 1e-9;

// Gradients.
const FD_STEP: f64 = 1e-6;
const POTENTIAL_GRAD_TOL: f64 = 1e-5;
/// Gradient components below this are compared in absolute terms: central
/// differences of an O(1) potential carry about 1e-10 of roundoff.
const POTENTIAL_GRAD_FLOOR: f64 = 1e-3;
const KINK_MARGIN: f64 = 1e-3;
const PARAM_GRAD_TOL: f64 = 1e-4;
/// Softmax shift invariance makes some parameter gradients exactly zero;
/// those are held to the same roundoff-sized floor.
const PARAM_GRAD_FLOOR: f64 = 1e-4;

// Diffusion identities, in units of machine epsilon times the amplification
// of the formula (1/sqrt(alphabar)).
const INVERSE_ULPS: f64 = 8.0;
const SHIFT_ULPS: f64 = 16.0;

// Generator.
const V0_OBJECTS: f64 = 230.0;
const V0_EDGES: f64 = 1740.0;
const V0_SIZE_TOL: f64 = 0.15;
const SLOPE_TOL: f64 = 0.10;
const SLOPE_BIN: f64 = 0.05;
const SLOPE_BINS: usize = 40;
const SLOPE_MIN_EDGES: f64 = 20.0;

// Architecture.
const EQUIVARIANCE_TOL: f64 = 1e-10;
const MEDIUM_PARAMS: f64 = 1.23e6;
const PARAM_COUNT_TOL: f64 = 0.10;
const INITIAL_LOSS: f64 = 2.0;
const INITIAL_LOSS_TOL: f64 = 0.1;

// Toy end-to-end.
const TOY_TRAIN: usize = 2000;
const TOY_TEST: usize = 64;
const TOY_STEPS: u64 = 20_000;
const TOY_SEEDS: u64 = 5;
const UNGUIDED_MIN: f64 = 0.7;
const GUIDED_MIN: f64 = 0.95;

// Constrained descent.
const DESCENT_CASES: usize = 50;
const DESCENT_ROUNDS: usize = 200;
const DESCENT_SLACK_FACTOR: f64 = 10.0;
const DESCENT_MIN_PASSING: usize = 45;

// Formats.
const PL_TOL_UNITS: f64 = 1e-6;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
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

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn worst_grad_err(a: &[Vec2], b: &[Vec2], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| rel_err(p.x, q.x, floor).max(rel_err(p.y, q.y, floor)))
        .fold(0.0, f64::max)
}

fn metric_oracles() -> Verdict {
    let mut r = rng(101);
    let mut hpwl_err = 0.0f64;
    for case in 0..200 {
        let n = r.random_range(2..40);
        let (mut nl, p) = random_layout(&mut r, n, 0.3);
        let k = r.random_range(1..60);
        if case % 2 == 0 {
            add_nets(&mut r, &mut nl, k, 6);
        } else {
            add_edges(&mut r, &mut nl, k);
        }
        hpwl_err = hpwl_err.max(rel_err(hpwl(&p, &nl), naive_hpwl(&p, &nl), 1e-300));
    }
    let mut legality_err = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(2..12);
        let (nl, p) = random_layout(&mut r, n, 0.7);
        let exact = legality_score(&p, &nl).unwrap();
        let mc = mc_legality(&p, &nl, LEGALITY_MC_STRATA, &mut r);
        legality_err = legality_err.max((exact - mc).abs());
    }
    let mut rudy_err = 0.0f64;
    for case in 0..30 {
        let n = r.random_range(2..20);
        let (mut nl, p) = random_layout(&mut r, n, 0.3);
        if case % 2 == 0 {
            add_nets(&mut r, &mut nl, 30, 5);
        } else {
            add_edges(&mut r, &mut nl, 30);
        }
        let grid = [8, 16, 33][case % 3];
        let (map, _) = rudy(&p, &nl, grid).unwrap();
        for (a, b) in map.cells.iter().zip(brute_rudy(&p, &nl, grid)) {
            rudy_err = rudy_err.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    verdict(
        hpwl_err <= HPWL_REL_TOL && legality_err <= LEGALITY_MC_TOL && rudy_err <= RUDY_TOL,
        format!(
            "hpwl rel err {:.1e} (tol {:.0e}), legality vs 1e6-sample raster {:.1e} (tol {:.0e}), rudy {:.1e} (tol {:.0e})",
            hpwl_err, HPWL_REL_TOL, legality_err, LEGALITY_MC_TOL, rudy_err, RUDY_TOL
        ),
    )
}

/// Width-8 network small enough for exhaustive finite differences.
fn tiny_config() -> DenoiserConfig {
    DenoiserConfig {
        model_size: 8,
        blocks: 1,
        layers_per_block: 2,
        attgnn_size: 4,
        resgnn_size: 8,
        mlp_factor: 2,
        mlp_layers: 2,
        heads: 2,
        t_enc_dim: 8,
        xy_enc_dim: 8,
        attention: true,
    }
}

fn clamped_circuit(r: &mut impl Rng, n: usize, edges: usize) -> (Netlist, Placement) {
    let (mut nl, p) = random_layout(r, n, 0.4);
    add_edges(r, &mut nl, edges);
    let coords = p
        .coords
        .iter()
        .map(|c| Vec2::new(c.x.clamp(-1.0, 1.0), c.y.clamp(-1.0, 1.0)))
        .collect();
    (nl, Placement::new(coords))
}

fn masked_loss(params: &DenoiserParams, g: &GraphBatch, x: &[f64], t: &[usize], target: &[f64], mask: &[bool]) -> f64 {
    let mut tape = Tape::new();
    let b = BoundParams::bind(&mut tape, params, false).unwrap();
    let out = forward(&mut tape, &b, &params.config, g, x, t).unwrap();
    let l = tape.masked_mse(out, target, Some(mask)).unwrap();
    tape.value(l)[0]
}

fn parameter_grad_error() -> f64 {
    let mut r = rng(202);
    let mut params = DenoiserParams::init(tiny_config(), 202).unwrap();
    randomize(&mut params, 0.5, &mut r);
    let (mut nl, p) = clamped_circuit(&mut r, 6, 8);
    nl.fixed_mask = Some(vec![false, false, true, false, false, false]);
    let g = GraphBatch::new(&[&nl]);
    let x = p.to_flat();
    let t = [r.random_range(1..1000)];
    let target: Vec<f64> = (0..x.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let mask: Vec<bool> = g.fixed.iter().map(|f| !f).collect();

    let mut tape = Tape::new();
    let b = BoundParams::bind(&mut tape, &params, true).unwrap();
    let out = forward(&mut tape, &b, &params.config, &g, &x, &t).unwrap();
    let l = tape.masked_mse(out, &target, Some(&mask)).unwrap();
    let grads = tape.backward(l).unwrap();
    let analytic: Vec<Vec<f64>> = b
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(v, t)| grads.get_or_zeros(*v, t.len()))
        .collect();

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let ti = r.random_range(0..params.tensors().len());
        let k = r.random_range(0..params.tensors()[ti].len());
        let orig = params.tensors()[ti].data()[k];
        params.tensors_mut()[ti].data_mut()[k] = orig + FD_STEP;
        let up = masked_loss(&params, &g, &x, &t, &target, &mask);
        params.tensors_mut()[ti].data_mut()[k] = orig - FD_STEP;
        let down = masked_loss(&params, &g, &x, &t, &target, &mask);
        params.tensors_mut()[ti].data_mut()[k] = orig;
        let fd = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[ti][k], fd, PARAM_GRAD_FLOOR));
    }
    worst
}

fn gradient_correctness() -> Verdict {
    let mut r = rng(201);
    let (mut leg, mut wire, mut combined) = (0.0f64, 0.0f64, 0.0f64);
    let mut checked = 0;
    while checked < 100 {
        let n = r.random_range(2..10);
        let (mut nl, p) = random_layout(&mut r, n, 0.6);
        if checked % 2 == 0 {
            add_nets(&mut r, &mut nl, 2 * n, 4);
        } else {
            add_edges(&mut r, &mut nl, 2 * n);
        }
        if !legality_smooth(&p, &nl, KINK_MARGIN) || !hpwl_smooth(&p, &nl, KINK_MARGIN) {
            continue;
        }
        checked += 1;
        let b = Boundary::CANVAS;
        let (_, g) = legality_potential(&p, &nl, &b);
        let fd = fd_gradient(&p, FD_STEP, |q| legality_potential(q, &nl, &b).0);
        leg = leg.max(worst_grad_err(&g, &fd, POTENTIAL_GRAD_FLOOR));

        let g = hpwl_subgradient(&p, &nl);
        let fd = fd_gradient(&p, FD_STEP, |q| hpwl(q, &nl));
        wire = wire.max(worst_grad_err(&g, &fd, POTENTIAL_GRAD_FLOOR));

        let guide = Guide::new(&nl, GuidanceConfig::default());
        let (wh, wl) = (r.random_range(0.0..2.0), r.random_range(0.0..5.0));
        let (_, g) = guide.combined_potential(&p, wh, wl);
        let fd = fd_gradient(&p, FD_STEP, |q| guide.combined_potential(q, wh, wl).0);
        combined = combined.max(worst_grad_err(&g, &fd, POTENTIAL_GRAD_FLOOR));
    }
    let params = parameter_grad_error();
    verdict(
        leg.max(wire).max(combined) <= POTENTIAL_GRAD_TOL && params <= PARAM_GRAD_TOL,
        format!(
            "legality {:.1e}, wirelength {:.1e}, combined {:.1e} (tol {:.0e}); denoiser parameters {:.1e} (tol {:.0e})",
            leg, wire, combined, POTENTIAL_GRAD_TOL, params, PARAM_GRAD_TOL
        ),
    )
}

fn diffusion_identities() -> Verdict {
    let s = NoiseSchedule::cosine(1000).unwrap();
    let monotone = (1..=1000).all(|t| s.alphabar(t) < s.alphabar(t - 1));
    let ends = s.alphabar(0) > 0.999 && s.alphabar(1000) < 1e-3;
    let mut r = rng(301);
    let (mut inverse, mut shift) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let t = r.random_range(1..=1000);
        let (x, e, d) = (
            r.random_range(-1.0..1.0),
            r.random_range(-4.0..4.0),
            r.random_range(-0.5..0.5),
        );
        let amp = 1.0 / s.alphabar(t).sqrt();
        let xt = q_sample(&[x], t, &[e], &s);
        let back = predict_x0_raw(&xt, t, &[e], &s)[0];
        inverse = inverse.max((back - x).abs() / (f64::EPSILON * (1.0 + amp * e.abs() + x.abs())));
        let before = predict_x0_raw(&[x], t, &[e], &s)[0];
        let eps = guided_score(&[e], &[d], t, &s, 1.0);
        let after = predict_x0_raw(&[x], t, &eps, &s)[0];
        shift = shift.max((after - before - d).abs() / (f64::EPSILON * amp * (1.0 + x.abs() + e.abs())));
    }
    verdict(
        monotone && ends && inverse <= INVERSE_ULPS && shift <= SHIFT_ULPS,
        format!(
            "alphabar decreasing {}, alphabar_0 {:.6}, alphabar_T {:.1e}; inverse {:.1} ulps (tol {}), guided shift {:.1} ulps (tol {})",
            monotone,
            s.alphabar(0),
            s.alphabar(1000),
            inverse,
            INVERSE_ULPS,
            shift,
            SHIFT_ULPS
        ),
    )
}

fn generator_fidelity() -> Verdict {
    let params = SynthParams::v0();
    let n = 1000;
    let (mut objects, mut edges, mut illegal) = (0.0, 0.0, 0);
    let mut bins = Bins::new(SLOPE_BIN, SLOPE_BINS);
    for seed in 0..n {
        let c = generate_circuit(&params, seed).unwrap();
        if legality_score(&c.placement, &c.netlist).unwrap() != 1.0 {
            illegal += 1;
        }
        objects += c.meta.objects as f64;
        edges += c.meta.edges as f64;
        bins.add(&c.pins, &c.placement, &c.netlist.edges);
    }
    let (objects, edges) = (objects / n as f64, edges / n as f64);
    let slope = bins.log_rate_slope(SLOPE_MIN_EDGES);
    let expect = -1.0 / 0.2;
    let pass = (objects / V0_OBJECTS - 1.0).abs() <= V0_SIZE_TOL
        && (edges / V0_EDGES - 1.0).abs() <= V0_SIZE_TOL
        && illegal == 0
        && (slope / expect - 1.0).abs() <= SLOPE_TOL;
    verdict(
        pass,
        format!(
            "{} circuits: mean objects {:.1} (target {}), mean edges {:.1} (target {}), {} not fully legal, rate slope {:.3} (target {})",
            n, objects, V0_OBJECTS, edges, V0_EDGES, illegal, slope, expect
        ),
    )
}

fn equivariance_error(attention: bool) -> f64 {
    let mut r = rng(501);
    let mut params = DenoiserParams::init(
        DenoiserConfig {
            attention,
            ..DenoiserConfig::toy()
        },
        5,
    )
    .unwrap();
    randomize(&mut params, 0.3, &mut r);
    let (nl, p) = clamped_circuit(&mut r, 9, 14);
    let mut perm: Vec<usize> = (0..nl.len()).collect();
    perm.shuffle(&mut r);
    let mut inv = vec![0; perm.len()];
    for (k, &i) in perm.iter().enumerate() {
        inv[i] = k;
    }
    let mut pn = Netlist::new(perm.iter().map(|&i| nl.objects[i]).collect());
    pn.edges = nl
        .edges
        .iter()
        .map(|e| Edge::new(inv[e.src], inv[e.dst], e.attr.src_offset, e.attr.dst_offset))
        .collect();
    let pp = Placement::new(perm.iter().map(|&i| p.coords[i]).collect());
    let a = predict(&params, &GraphBatch::new(&[&nl]), &p.to_flat(), &[321]).unwrap();
    let b = predict(&params, &GraphBatch::new(&[&pn]), &pp.to_flat(), &[321]).unwrap();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for (k, &i) in perm.iter().enumerate() {
        for d in 0..2 {
            worst = worst.max((b[2 * k + d] - a[2 * i + d]).abs() / scale);
        }
    }
    worst
}

fn architecture() -> Verdict {
    let equi = equivariance_error(true).max(equivariance_error(false));
    let medium = parameter_count(&DenoiserConfig::medium()) as f64;
    let data: Vec<_> = (0..8)
        .map(|k| generate_circuit(&SynthParams::v0(), 50 + k).unwrap())
        .collect();
    let batch: Vec<(&Netlist, &Placement)> = data.iter().map(|c| (&c.netlist, &c.placement)).collect();
    let s = NoiseSchedule::cosine(1000).unwrap();
    let mut params = DenoiserParams::init(DenoiserConfig::toy(), 0).unwrap();
    let mut opt = AdamState::new(AdamConfig::default(), params.tensors());
    let mut rs = diffplace::rng::stream(0, "acceptance", 0);
    let loss = training_step(&mut params, &mut opt, &batch, &s, &mut rs, 1e-3, None).unwrap();
    verdict(
        equi <= EQUIVARIANCE_TOL
            && (medium / MEDIUM_PARAMS - 1.0).abs() <= PARAM_COUNT_TOL
            && (loss - INITIAL_LOSS).abs() <= INITIAL_LOSS_TOL,
        format!(
            "permutation rel err {:.1e} (tol {:.0e}), medium parameters {} (target {}), initial loss {:.4} (target {} +- {})",
            equi, EQUIVARIANCE_TOL, medium, MEDIUM_PARAMS, loss, INITIAL_LOSS, INITIAL_LOSS_TOL
        ),
    )
}

/// Circuits of 16 to 32 objects from the toy generator, in seed order.
fn toy_circuits(count: usize) -> Vec<(Netlist, Placement)> {
    let params = SynthParams::toy();
    let mut out = Vec::with_capacity(count);
    let mut seed = 1000;
    while out.len() < count {
        let c = generate_circuit(&params, seed).unwrap();
        seed += 1;
        if (16..=32).contains(&c.netlist.len()) {
            out.push((c.netlist, c.placement));
        }
    }
    out
}

fn train_toy(data: &[(Netlist, Placement)], attention: bool) -> DenoiserParams {
    let cfg = TrainConfig {
        steps: TOY_STEPS,
        batch_size: 16,
        lr: 1e-3,
        lr_min: 1e-5,
        ..Default::default()
    };
    let params = DenoiserParams::init(
        DenoiserConfig {
            attention,
            ..DenoiserConfig::toy()
        },
        0,
    )
    .unwrap();
    let mut trainer = Trainer::new(cfg, params).unwrap();
    trainer.run(data).unwrap();
    let tail = &trainer.losses[trainer.losses.len() - 1000..];
    println!(
        "  trained attention={} to mean loss {:.4} over the last 1000 steps",
        attention,
        mean(tail)
    );
    trainer.params
}

/// Median legality and mean wirelength over the test circuits.
fn sample_scores(model: &DenoiserParams, test: &[(Netlist, Placement)], guided: bool, seed: u64) -> (f64, f64) {
    let s = NoiseSchedule::cosine(1000).unwrap();
    let netlists: Vec<&Netlist> = test.iter().map(|c| &c.0).collect();
    let context: Vec<Option<&Placement>> = vec![None; test.len()];
    let opts = SampleOptions {
        guidance: guided.then(GuidanceConfig::default),
        ..Default::default()
    };
    let seeds: Vec<u64> = (0..test.len() as u64).map(|k| (seed << 32) ^ k).collect();
    let out = sample_batch(model, &netlists, &context, &s, &opts, &seeds).unwrap();
    let legality: Vec<f64> = out
        .iter()
        .zip(test)
        .map(|(o, c)| legality_score(&o.placement, &c.0).unwrap())
        .collect();
    let wires: Vec<f64> = out.iter().zip(test).map(|(o, c)| hpwl(&o.placement, &c.0)).collect();
    (median(legality), mean(&wires))
}

fn toy_end_to_end() -> Verdict {
    let start = Instant::now();
    let mut data = toy_circuits(TOY_TRAIN + TOY_TEST);
    let test = data.split_off(TOY_TRAIN);
    let full = train_toy(&data, true);
    let ablation = train_toy(&data, false);
    let reference = mean(&test.iter().map(|c| hpwl(&c.1, &c.0)).collect::<Vec<_>>());

    let (mut unguided, mut guided, mut ablated) = (Vec::new(), Vec::new(), Vec::new());
    let (mut hpwl_unguided, mut hpwl_guided) = (Vec::new(), Vec::new());
    let mut seed_passes = 0;
    for seed in 0..TOY_SEEDS {
        let (lu, hu) = sample_scores(&full, &test, false, seed);
        let (lg, hg) = sample_scores(&full, &test, true, seed);
        let (la, _) = sample_scores(&ablation, &test, false, seed);
        let ok = lu >= UNGUIDED_MIN && lg >= GUIDED_MIN && hg <= hu && la < lu;
        seed_passes += ok as usize;
        println!(
            "  seed {}: unguided legality {:.4} hpwl {:.3} | guided legality {:.4} hpwl {:.3} | no-attention legality {:.4} | {}",
            seed,
            lu,
            hu,
            lg,
            hg,
            la,
            if ok { "ok" } else { "miss" }
        );
        unguided.push(lu);
        guided.push(lg);
        ablated.push(la);
        hpwl_unguided.push(hu);
        hpwl_guided.push(hg);
    }
    let (lu, lg, la) = (median(unguided), median(guided), median(ablated));
    let (hu, hg) = (median(hpwl_unguided), median(hpwl_guided));
    let a = lu >= UNGUIDED_MIN;
    let b = lg >= GUIDED_MIN && hg <= hu;
    let c = la < lu;
    verdict(
        a && b && c,
        format!(
            "(a) unguided median legality {:.4} {}; (b) guided {:.4}, hpwl guided {:.3} vs unguided {:.3} {}; (c) no-attention {:.4} {}; reference hpwl {:.3}; {}/{} seeds pass all; {:.0} s",
            lu,
            if a { "ok" } else { "FAIL" },
            lg,
            hg,
            hu,
            if b { "ok" } else { "FAIL" },
            la,
            if c { "ok" } else { "FAIL" },
            reference,
            seed_passes,
            TOY_SEEDS,
            start.elapsed().as_secs_f64()
        ),
    )
}

/// Objects dropped uniformly inside the canvas, redrawn until at least one
/// pair overlaps.
fn overlapping_layout(r: &mut impl Rng) -> (Netlist, Placement) {
    loop {
        let n = r.random_range(6..16);
        let objects = (0..n)
            .map(|_| ObjectGeom::new(r.random_range(0.1..0.4), r.random_range(0.1..0.4)))
            .collect();
        let mut nl = Netlist::new(objects);
        add_edges(r, &mut nl, 2 * n);
        let p = Placement::new(
            nl.objects
                .iter()
                .map(|o| {
                    let (hx, hy) = (1.0 - o.width / 2.0, 1.0 - o.height / 2.0);
                    Vec2::new(r.random_range(-hx..hx), r.random_range(-hy..hy))
                })
                .collect(),
        );
        if !overlapping_pairs(&p, &nl).is_empty() {
            return (nl, p);
        }
    }
}

fn constrained_descent() -> Verdict {
    let mut r = rng(701);
    let cfg = GuidanceConfig::default();
    let target = DESCENT_SLACK_FACTOR * cfg.slack;
    let (mut passing, mut negative) = (0, 0);
    let mut finals = Vec::new();
    for _ in 0..DESCENT_CASES {
        let (nl, mut p) = overlapping_layout(&mut r);
        let mut guide = Guide::new(&nl, cfg);
        for _ in 0..DESCENT_ROUNDS {
            let step = guide.backward_guidance(&p);
            for (c, d) in p.coords.iter_mut().zip(&step.delta) {
                *c = *c + *d;
            }
            if guide.weight.value < 0.0 {
                negative += 1;
            }
        }
        let leg = legality_potential(&p, &nl, &Boundary::CANVAS).0;
        passing += (leg <= target) as usize;
        finals.push(leg);
    }
    verdict(
        passing >= DESCENT_MIN_PASSING && negative == 0,
        format!(
            "{}/{} reach legality potential <= {:.0e} after {} guidance calls (need {}); median final {:.1e}; negative weights {}",
            passing,
            DESCENT_CASES,
            target,
            DESCENT_ROUNDS,
            DESCENT_MIN_PASSING,
            median(finals),
            negative
        ),
    )
}

fn formats() -> Verdict {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests");
    let fixture = root.join("fixtures/mini");
    let mut notes = Vec::new();

    let d = parse_bookshelf(&fixture).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let aux = write_bookshelf(&d, &dir.path().join("a"), "copy").unwrap();
    let again = parse_bookshelf(&aux).unwrap();
    write_bookshelf(&again, &dir.path().join("b"), "copy").unwrap();
    let same_bytes = ["aux", "nodes", "nets", "pl", "scl"].iter().all(|ext| {
        let name = format!("copy.{}", ext);
        std::fs::read(dir.path().join("a").join(&name)).unwrap()
            == std::fs::read(dir.path().join("b").join(&name)).unwrap()
    });
    let bookshelf_ok = again == d && same_bytes;
    notes.push(format!(
        "bookshelf round trip {}",
        if bookshelf_ok { "identical" } else { "DIFFERS" }
    ));

    let records: Vec<_> = (0..100)
        .map(|k| circuit_record("toy", k, k, generate_circuit(&SynthParams::toy(), k).unwrap()))
        .collect();
    let path = dir.path().join("d.jsonl");
    write_dataset(&path, &records).unwrap();
    let back = read_dataset(&path).unwrap();
    let bits = back.len() == records.len()
        && back.iter().zip(&records).all(|(a, b)| {
            a == b
                && a.placement
                    .iter()
                    .zip(&b.placement)
                    .all(|(p, q)| p.x.to_bits() == q.x.to_bits() && p.y.to_bits() == q.y.to_bits())
        });
    let path2 = dir.path().join("e.jsonl");
    write_dataset(&path2, &back).unwrap();
    let jsonl_ok = bits && std::fs::read(&path).unwrap() == std::fs::read(&path2).unwrap();
    notes.push(format!(
        "jsonl round trip {}",
        if jsonl_ok { "bit-identical" } else { "DIFFERS" }
    ));

    let mut r = rng(801);
    let moved = Placement::new(
        d.placement
            .as_ref()
            .unwrap()
            .coords
            .iter()
            .map(|c| Vec2::new(c.x + r.random_range(-0.1..0.1), c.y + r.random_range(-0.1..0.1)))
            .collect(),
    );
    let out = dir.path().join("c");
    write_bookshelf(&d, &out, "out").unwrap();
    write_placement(&moved, &d.netlist, &d.unit, &out.join("out.pl")).unwrap();
    let reparsed = parse_bookshelf(&out).unwrap().placement.unwrap();
    let pl_err = reparsed
        .coords
        .iter()
        .zip(&moved.coords)
        .map(|(a, b)| {
            let (a, b) = (d.unit.denormalize(*a), d.unit.denormalize(*b));
            (a.x - b.x).abs().max((a.y - b.y).abs())
        })
        .fold(0.0, f64::max);
    notes.push(format!(".pl error {:.1e} units (tol {:.0e})", pl_err, PL_TOL_UNITS));

    let mut nl = Netlist::new(vec![ObjectGeom::new(0.6, 0.4), ObjectGeom::new(0.3, 0.3)]);
    nl.kinds = Some(vec![ObjectKind::Macro, ObjectKind::Cluster]);
    nl.edges.push(Edge::new(0, 1, Vec2::new(0.3, 0.0), Vec2::ZERO));
    let p = Placement::new(vec![Vec2::new(-0.2, 0.1), Vec2::new(0.1, 0.2)]);
    let apart = Placement::new(vec![Vec2::new(-0.5, 0.0), Vec2::new(0.5, 0.0)]);
    let frames = vec![("start".to_string(), &p), ("end".to_string(), &apart)];
    let rendered = [
        (
            "empty.svg",
            render_svg(&Placement::new(vec![]), &Netlist::new(vec![]), &SvgOptions::default()),
        ),
        (
            "two.svg",
            render_svg(
                &p,
                &nl,
                &SvgOptions {
                    edges: true,
                    title: Some("two <objects>".into()),
                    ..SvgOptions::default()
                },
            ),
        ),
        (
            "filmstrip.svg",
            render_filmstrip(
                &frames,
                &nl,
                &SvgOptions {
                    size: 128.0,
                    ..SvgOptions::default()
                },
            ),
        ),
    ];
    let changed: Vec<&str> = rendered
        .iter()
        .filter(|(name, svg)| {
            std::fs::read_to_string(root.join("golden").join(name)).ok().as_deref() != Some(svg.as_str())
        })
        .map(|(name, _)| *name)
        .collect();
    notes.push(if changed.is_empty() {
        "svg goldens stable".to_string()
    } else {
        format!("svg goldens changed: {}", changed.join(", "))
    });

    verdict(
        bookshelf_ok && jsonl_ok && pl_err <= PL_TOL_UNITS && changed.is_empty(),
        notes.join(", "),
    )
}

type Check = fn() -> Verdict;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        // Nothing for test runners to enumerate.
        return;
    }
    let toy = args.iter().any(|a| a == "--include-ignored" || a == "--ignored")
        || std::env::var("DIFFPLACE_ACCEPTANCE_TOY").is_ok_and(|v| v == "1");

    let checks: [(u32, &str, Check); 8] = [
        (1, "metric oracles", metric_oracles),
        (2, "gradient correctness", gradient_correctness),
        (3, "schedule and diffusion identities", diffusion_identities),
        (4, "generator fidelity", generator_fidelity),
        (5, "architecture properties", architecture),
        (6, "toy end-to-end", toy_end_to_end),
        (7, "constrained descent", constrained_descent),
        (8, "formats", formats),
    ];
    let mut failed = Vec::new();
    for (n, name, check) in checks {
        if n == 6 && !toy {
            println!(
                "criterion {} {}: SKIPPED (about 40 minutes; pass --include-ignored or set DIFFPLACE_ACCEPTANCE_TOY=1)",
                n, name
            );
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {}", msg))
        });
        println!(
            "criterion {} {}: {} [{:.1} s] {}",
            n,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {:?}", failed);
        std::process::exit(1);
    }
}
