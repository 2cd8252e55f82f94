//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. The training criteria run full 500-epoch
//! trainings and take most of the time.

use euv_ilt::autodiff::{check_gradients, sample_indices, GradProbe, Tape, Tensor};
use euv_ilt::field::{diffraction_kernel, gaussian_kernel, EUV_WAVELENGTH_NM};
use euv_ilt::metrology::{epe, epe_for_kind, EpeConfig, ScanAxes};
use euv_ilt::objective::{
    physics_reg, total_loss, total_loss_on_tape, EdgeLossMode, LossBreakdown, LossWeights,
};
use euv_ilt::optimizer::{train_kind, Adam, TrainConfig, TrainResult};
use euv_ilt::patterns::{render, stats, PatternKind, PatternSpec};
use euv_ilt::physics::{activate, ForwardModel, PhysicsParams, StageFlags, ThetaNodes};
use euv_ilt::Field2D;
use euv_ilt_harness::commands;
use euv_ilt_harness::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::time::Instant;

const PX: f64 = 6.328;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trained runs keyed by kind and number of cumulative stages.
#[derive(Default)]
struct Runs {
    cache: HashMap<(PatternKind, usize), TrainResult>,
}

impl Runs {
    fn get(&mut self, kind: PatternKind, stages: usize) -> &TrainResult {
        self.cache.entry((kind, stages)).or_insert_with(|| {
            let t = Instant::now();
            let cfg = TrainConfig {
                stages: StageFlags::cumulative(stages),
                ..TrainConfig::default()
            };
            let res = train_kind(kind, &cfg).expect("training");
            eprintln!(
                "  trained {kind} with {stages} stages: final {:.4} nm in {:.0} s",
                res.final_epe_nm(),
                t.elapsed().as_secs_f64()
            );
            res
        })
    }
}

fn gradient_correctness() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 16;
    let logits: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let target = Field2D::from_fn(n, n, PX, |_, _| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    let theta = loop {
        let t: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let sigma_b = 0.5 + 3.0 * sig(t[2]);
        if (sigma_b - 0.6).abs() >= 1e-3 {
            break t;
        }
    };
    let model = ForwardModel::new(PX).unwrap();
    let weights = LossWeights::default();

    // Independent plain evaluation for the finite differences.
    let loss = |x: &[f64]| {
        let p = PhysicsParams::from_array([x[0], x[1], x[2], x[3], x[4]]);
        let mask = Field2D::new(n, n, PX, x[5..].iter().map(|&l| sig(l)).collect())?;
        let img = model.forward(&mask, &p, StageFlags::ALL)?;
        Ok(total_loss(&img, &target, &p, &weights)?.total)
    };

    let mut tape = Tape::new();
    let l = tape
        .leaf(Tensor::new(1, n, n, logits.clone()).unwrap())
        .unwrap();
    let m = tape.sigmoid(l).unwrap();
    let t = tape.leaf(Tensor::from_field(&target)).unwrap();
    let nodes = ThetaNodes::record(&mut tape, &PhysicsParams::from_array(theta)).unwrap();
    let img = model
        .forward_on_tape(&mut tape, m, nodes, StageFlags::ALL)
        .unwrap();
    let total =
        total_loss_on_tape(&mut tape, img, t, nodes, &weights, EdgeLossMode::MagDiff).unwrap();
    tape.backward(total.total).unwrap();

    let mut point = theta.to_vec();
    point.extend_from_slice(&logits);
    let mut analytic: Vec<f64> = nodes
        .0
        .iter()
        .map(|&k| tape.grad(k).unwrap().item())
        .collect();
    analytic.extend_from_slice(tape.grad(l).unwrap().data());
    let mut probes: Vec<GradProbe> = PhysicsParams::NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| GradProbe::new(*name, i))
        .collect();
    probes.extend(
        sample_indices(n * n, 64, 5)
            .into_iter()
            .map(|i| GradProbe::new(format!("logit[{i}]"), 5 + i)),
    );
    let reports = check_gradients(loss, &point, &analytic, &probes, 1e-4).unwrap();
    let worst = &reports[0];
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst.rel_err < 1e-3 && secs < 60.0,
        format!(
            "{} probes, max rel err {:.2e} at {}, {:.1} s",
            reports.len(),
            worst.rel_err,
            worst.param,
            secs
        ),
    )
}

fn kernel_conservation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let sigma = rng.gen_range(0.5..3.5);
        let g: f64 = gaussian_kernel(sigma).unwrap().weights().iter().sum();
        let px = rng.gen_range(2.0..12.0);
        let lambda = rng.gen_range(10.0..16.0);
        let d: f64 = diffraction_kernel(7, px, lambda)
            .unwrap()
            .weights()
            .iter()
            .sum();
        worst = worst.max((g - 1.0).abs()).max((d - 1.0).abs());
    }
    let d: f64 = diffraction_kernel(7, PX, EUV_WAVELENGTH_NM)
        .unwrap()
        .weights()
        .iter()
        .sum();
    worst = worst.max((d - 1.0).abs());
    verdict(
        worst < 1e-9,
        format!("max |sum - 1| = {worst:.1e} over 20 draws of each kernel"),
    )
}

fn bound_preservation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut adam = Adam::new(5, 1e-2);
    let mut raw = [0.0; 5];
    let mut violations = 0;
    for _ in 0..10_000 {
        let scale = 10f64.powi(rng.gen_range(-3..4));
        let g: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        adam.step(&mut raw, &g).unwrap();
        let e = activate(&PhysicsParams::from_array(raw), PX).unwrap();
        let inside = e.d > 0.0
            && e.d < 0.5
            && e.a > 0.0
            && e.a < 0.3
            && e.sigma_b_px > 0.5
            && e.sigma_b_px < 3.5
            && e.phase_rad > -0.5
            && e.phase_rad < 0.5
            && e.c > 0.0
            && e.c < 2.0;
        if !inside {
            violations += 1;
        }
    }
    verdict(
        violations == 0,
        format!("{violations} of 10000 updates left a range"),
    )
}

/// Binary vertical bars of width 4 at pitch 12, clear of the borders.
fn bars(offset: isize) -> Field2D {
    Field2D::from_fn(64, 32, PX, |_, c| {
        let c = c as isize - offset;
        if (10..54).contains(&c) && (c - 10) % 12 < 4 {
            1.0
        } else {
            0.0
        }
    })
}

fn epe_oracle() -> Verdict {
    let cols = EpeConfig {
        scan_axes: ScanAxes::Columns,
        ..EpeConfig::default()
    };
    let target = bars(0);
    let shifted = epe(&bars(1), &target, &cols).unwrap().epe_nm;

    // Ramps of slope 0.25 whose 0.5 crossings sit half a pixel right of the
    // target's.
    let ramp = Field2D::from_fn(64, 32, PX, |_, c| {
        let x = c as f64;
        let mut v: f64 = 0.0;
        for k in 0..4 {
            let rise = 10.0 + 12.0 * k as f64;
            let up = ((x - rise) * 0.25 + 0.5).clamp(0.0, 1.0);
            let down = ((rise + 4.0 - x) * 0.25 + 0.5).clamp(0.0, 1.0);
            v = v.max(up.min(down));
        }
        v
    });
    let half = epe(&ramp, &target, &cols).unwrap().epe_nm;

    let mut nonzero = Vec::new();
    for kind in PatternKind::ALL {
        let t = render(&PatternSpec::canonical(kind)).unwrap();
        let r = epe_for_kind(&t, &t, kind).unwrap();
        if r.epe_nm != 0.0 {
            nonzero.push(kind.to_string());
        }
    }
    verdict(
        (shifted - 6.328).abs() <= 1e-6 && (half - 3.164).abs() <= 0.01 && nonzero.is_empty(),
        format!(
            "1 px shift {shifted:.9} nm, half-pixel ramp {half:.4} nm, self-EPE nonzero on {nonzero:?}"
        ),
    )
}

fn dataset_fidelity() -> Verdict {
    // Standard dataset table: min feature nm, fill %.
    let table = [
        (PatternKind::LogicGates, 31.6, 9.9),
        (PatternKind::EuvContacts, 38.0, 56.2),
        (PatternKind::StiPattern, 120.2, 74.2),
        (PatternKind::DramArrays, 31.6, 71.8),
        (PatternKind::ContactCuts, 50.6, 27.3),
        (PatternKind::HighNaContacts, 25.3, 43.1),
        (PatternKind::EuvLineSpace, 19.0, 58.6),
        (PatternKind::EuvMetal, 19.0, 68.1),
        (PatternKind::Finfet3nm, 12.7, 52.3),
        (PatternKind::SramCells, 12.7, 52.4),
        (PatternKind::HighNaLines, 12.7, 50.0),
        (PatternKind::Curvilinear, 6.3, 8.7),
    ];
    let mut misses = Vec::new();
    let mut worst_fill: f64 = 0.0;
    let mut worst_feat: f64 = 0.0;
    for (kind, feat, fill) in table {
        let s = stats(&render(&PatternSpec::canonical(kind)).unwrap()).unwrap();
        let df = (100.0 * s.fill_ratio - fill).abs();
        let dm = s.min_feature_nm.map_or(f64::INFINITY, |m| (m - feat).abs());
        worst_fill = worst_fill.max(df);
        worst_feat = worst_feat.max(dm);
        if df > 2.0 || dm > PX {
            misses.push(kind.to_string());
        }
    }
    verdict(
        misses.is_empty(),
        format!(
            "12 kinds, worst fill dev {worst_fill:.2} pp, worst feature dev {:.2} px, misses {misses:?}",
            worst_feat / PX
        ),
    )
}

const EASY: [PatternKind; 6] = [
    PatternKind::LogicGates,
    PatternKind::EuvContacts,
    PatternKind::StiPattern,
    PatternKind::DramArrays,
    PatternKind::ContactCuts,
    PatternKind::HighNaContacts,
];

fn training_improvement(runs: &mut Runs) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in EASY {
        let r = runs.get(kind, 5);
        let f = r.final_epe_nm();
        let limit = match kind {
            PatternKind::DramArrays => 3.92,
            // Reported sub-nanometre for EUV contacts; 2x of 1 nm.
            PatternKind::EuvContacts => 2.0,
            _ => 4.5,
        };
        let secs = r.epoch_seconds.iter().sum::<f64>();
        pass &= f < limit && r.abort.is_none() && secs < 1800.0;
        parts.push(format!("{kind} {f:.3}<{limit}"));
    }
    verdict(pass, parts.join(", "))
}

fn ablation_shape(runs: &mut Runs) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [PatternKind::DramArrays, PatternKind::EuvContacts] {
        let rows: Vec<f64> = (0..6).map(|s| runs.get(kind, s).final_epe_nm()).collect();
        let drops: Vec<f64> = rows.windows(2).map(|w| w[0] - w[1]).collect();
        let blur = drops[2];
        let blur_largest = drops.iter().all(|&d| d <= blur);
        let halved = rows[5] <= 0.5 * rows[0];
        pass &= blur_largest && halved;
        parts.push(format!(
            "{kind} rows [{}] blur drop largest: {blur_largest}, full <= half of no_physics: {halved}",
            rows.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        ));
    }
    verdict(pass, parts.join("; "))
}

fn hard_pattern_boundary(runs: &mut Runs) -> Verdict {
    let kind = PatternKind::Finfet3nm;
    let base = runs.get(kind, 0);
    let (b, b_abort) = (base.final_epe_nm(), base.abort.clone());
    let full = runs.get(kind, 5);
    let (f, f_abort) = (full.final_epe_nm(), full.abort.clone());
    let improvement = if b > 0.0 { 100.0 * (b - f) / b } else { 0.0 };
    verdict(
        improvement < 35.0 && b_abort.is_none() && f_abort.is_none(),
        format!("no_physics {b:.4} nm, full_physics {f:.4} nm, improvement {improvement:.1}%"),
    )
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut histories = Vec::new();
    for name in ["a", "b"] {
        let cfg = RunConfig {
            kinds: Some(vec![PatternKind::LogicGates]),
            out: Some(tmp.path().join(name)),
            ..RunConfig::default()
        };
        let out = commands::train(&cfg).unwrap();
        histories.push(std::fs::read(out.dir.join("history.csv")).unwrap());
    }
    let rows = histories[0].iter().filter(|&&b| b == b'\n').count();
    verdict(
        histories[0] == histories[1] && rows == 501,
        format!(
            "two logic_gates runs, {} bytes each, {rows} lines, identical: {}",
            histories[0].len(),
            histories[0] == histories[1]
        ),
    )
}

fn loss_arithmetic() -> Verdict {
    let total = LossBreakdown::compose(0.04, 0.2, 0.045, &LossWeights::default()).total;
    let reg = physics_reg(&PhysicsParams::from_array([1.0, -1.0, 2.0, 0.0, 0.5]));
    verdict(
        total == 0.08025 && reg == 0.045,
        format!("total {total}, physics_reg {reg}"),
    )
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut runs = Runs::default();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failed += 1;
        }
        println!("[{tag}] {n:>2} {name}: {}", v.detail);
    };
    report(1, "gradient correctness", gradient_correctness());
    report(2, "kernel conservation", kernel_conservation());
    report(3, "bound preservation", bound_preservation());
    report(4, "EPE oracle", epe_oracle());
    report(5, "dataset fidelity", dataset_fidelity());
    report(6, "training improvement", training_improvement(&mut runs));
    report(7, "ablation shape", ablation_shape(&mut runs));
    report(8, "hard-pattern boundary", hard_pattern_boundary(&mut runs));
    report(9, "determinism", determinism());
    report(10, "loss arithmetic", loss_arithmetic());
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
