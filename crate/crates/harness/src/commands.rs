use crate::config::{RunConfig, BASELINE_EPE_NM, TARGET_EPE_NM};
use crate::error::HarnessError;
use crate::manifest::{RunDir, Timing};
use crate::plot::{self, Rect};
use anyhow::{Context, Result};
use euv_ilt::field::{read_pgm, write_csv, write_pgm, PgmFormat};
use euv_ilt::optimizer::{
    ablate, improvement_pct, train_kind, train_shared, write_history_csv, TrainResult,
};
use euv_ilt::patterns::{
    catalog_entry, render as render_pattern, sample_dataset, stats, PatternKind, PatternSpec,
};
use euv_ilt::physics::{EffectiveParams, PhysicsParams, A_MAX, C_MAX, D_MAX, PHASE_MAX_RAD};
use euv_ilt::physics::{SIGMA_B_MIN_PX, SIGMA_B_SPAN_PX};
use euv_ilt::Field2D;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const HISTOGRAM_BINS: usize = 64;

/// What a command produced: lines for standard output, and the abort
/// diagnostic when training stopped early.
#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub lines: Vec<String>,
    pub abort: Option<String>,
}

impl Outcome {
    /// Turns a recorded abort into the error that sets the exit code.
    pub fn into_result(self) -> Result<Self> {
        match &self.abort {
            Some(m) => Err(HarnessError::Aborted(m.clone()).into()),
            None => Ok(self),
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct PatternRecord {
    spec: PatternSpec,
    stats: euv_ilt::patterns::PatternStats,
    catalog: euv_ilt::patterns::CatalogEntry,
}

/// Canonical templates as PGM and JSON, plus a catalog table comparing
/// measured statistics with the listed ones.
pub fn generate_patterns(cfg: &RunConfig) -> Result<Outcome> {
    let kinds = cfg.kinds_or(&PatternKind::ALL)?;
    let mut dir = RunDir::create(&cfg.out_or("runs/patterns"), "generate-patterns", cfg)?;
    let mut table = csv_writer(&dir.file("catalog.csv")?)?;
    table.write_record([
        "kind",
        "category",
        "fill_pct",
        "fill_pct_measured",
        "min_feature_nm",
        "min_feature_nm_measured",
        "euv_ready",
    ])?;
    let mut lines = Vec::new();
    for kind in kinds {
        let spec = PatternSpec::canonical(kind);
        let field = render_pattern(&spec)?;
        let st = stats(&field)?;
        let entry = *catalog_entry(kind);
        write_pgm(dir.file(&format!("{kind}.pgm"))?, &field, PgmFormat::Raw)?;
        table.write_record([
            kind.to_string(),
            format!("{:?}", entry.category),
            entry.fill_pct.to_string(),
            (100.0 * st.fill_ratio).to_string(),
            entry.min_feature_nm.to_string(),
            opt(st.min_feature_nm),
            entry.euv_ready.to_string(),
        ])?;
        lines.push(format!(
            "{kind} fill {:.1}% min_feature {} nm",
            100.0 * st.fill_ratio,
            st.min_feature_nm.map_or("-".into(), |v| format!("{v:.1}"))
        ));
        let record = PatternRecord {
            spec,
            stats: st,
            catalog: entry,
        };
        write_json(&dir.file(&format!("{kind}.json"))?, &record)?;
    }
    table.flush()?;
    let root = dir.root().to_path_buf();
    dir.finish("ok")?;
    Ok(Outcome {
        dir: root,
        lines,
        abort: None,
    })
}

/// Contents of `params.json` for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub kind: PatternKind,
    pub pixel_size_nm: f64,
    pub epochs_run: usize,
    pub initial_epe_nm: f64,
    pub final_epe_nm: f64,
    pub best_epe_nm: f64,
    pub best_epoch: Option<usize>,
    pub improvement_pct: f64,
    pub abort: Option<String>,
    pub raw: PhysicsParams,
    pub effective: EffectiveParams,
    pub best_effective: EffectiveParams,
}

impl TrainSummary {
    pub fn new(res: &TrainResult, baseline: f64) -> Self {
        Self {
            kind: res.kind,
            pixel_size_nm: res.target.pixel_size_nm(),
            epochs_run: res.history.len(),
            initial_epe_nm: res.initial.epe_nm,
            final_epe_nm: res.final_epe_nm(),
            best_epe_nm: res.best_epe_nm(),
            best_epoch: res.best.epoch,
            improvement_pct: improvement_pct(baseline, res.final_epe_nm()),
            abort: res.abort.clone(),
            raw: res.last.params,
            effective: res.last.effective,
            best_effective: res.best.effective,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:.4} {:.4} {:.2}",
            self.kind, self.final_epe_nm, self.best_epe_nm, self.improvement_pct
        )
    }
}

/// Writes the artifacts of one training run under `prefix` inside `dir`.
pub fn write_train_artifacts(
    dir: &mut RunDir,
    prefix: &str,
    res: &TrainResult,
    baseline: f64,
) -> Result<TrainSummary> {
    let summary = TrainSummary::new(res, baseline);
    write_history_csv(dir.file(&format!("{prefix}history.csv"))?, &res.history)?;
    write_json(&dir.file(&format!("{prefix}params.json"))?, &summary)?;
    let last = &res.last;
    let diff = last.aerial.zip_map(&res.target, |a, t| (a - t).abs())?;
    for (name, f) in [
        ("target.pgm", &res.target),
        ("mask_final.pgm", &last.mask),
        ("aerial_final.pgm", &last.aerial),
        ("diff.pgm", &diff),
    ] {
        write_pgm(dir.file(&format!("{prefix}{name}"))?, f, PgmFormat::Raw)?;
    }
    for cp in &res.checkpoints {
        let e = cp.epoch.unwrap_or(0);
        write_pgm(
            dir.file(&format!("{prefix}checkpoints/epoch_{e:04}_mask.pgm"))?,
            &cp.mask,
            PgmFormat::Raw,
        )?;
        if let Some(l) = &cp.logits {
            write_csv(
                dir.file(&format!("{prefix}checkpoints/epoch_{e:04}_logits.csv"))?,
                l,
            )?;
        }
    }
    dir.add_timing(Timing::new(res.kind.name(), &res.epoch_seconds));
    Ok(summary)
}

pub fn train(cfg: &RunConfig) -> Result<Outcome> {
    let kind = cfg.single_kind()?;
    let mut dir = RunDir::create(&cfg.out_or(format!("runs/train_{kind}")), "train", cfg)?;
    let res = train_kind(kind, &cfg.train)?;
    let summary = write_train_artifacts(&mut dir, "", &res, cfg.baseline_epe_nm)?;
    let root = dir.root().to_path_buf();
    dir.finish(if res.abort.is_some() { "aborted" } else { "ok" })?;
    Ok(Outcome {
        dir: root,
        lines: vec![summary.line()],
        abort: res.abort,
    })
}

/// `+blur` becomes `blur` in file names.
fn stage_slug(label: &str) -> String {
    label.trim_start_matches('+').to_string()
}

pub fn ablate_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let kind = cfg.single_kind()?;
    if cfg.ablation_rows.is_empty() || cfg.ablation_rows.iter().any(|&r| r >= 6) {
        return Err(HarnessError::Usage(format!(
            "ablation rows {:?} must be a non-empty subset of 0..6",
            cfg.ablation_rows
        ))
        .into());
    }
    let mut dir = RunDir::create(&cfg.out_or(format!("runs/ablate_{kind}")), "ablate", cfg)?;
    let samples = sample_dataset(kind, cfg.train.resolved_dataset_size(), cfg.train.seed)?;
    let rows = ablate(&samples, &cfg.train, &cfg.ablation_rows)?;
    let baseline = rows
        .iter()
        .find(|r| r.stages.enabled_count() == 0)
        .map(|r| r.final_epe_nm);

    let mut table = csv_writer(&dir.file("ablation.csv")?)?;
    table.write_record(["stage", "epe_nm", "improvement_pct_vs_no_physics"])?;
    let mut params = csv_writer(&dir.file("ablation_params.csv")?)?;
    params.write_record(["stage", "d", "a", "blur_nm", "phase", "c"])?;
    let mut lines = Vec::new();
    let mut abort = None;
    for (&idx, row) in cfg.ablation_rows.iter().zip(&rows) {
        let imp = baseline.map(|b| improvement_pct(b, row.final_epe_nm));
        table.write_record([
            row.label.to_string(),
            row.final_epe_nm.to_string(),
            opt(imp),
        ])?;
        let e = &row.effective;
        params.write_record([
            row.label.to_string(),
            e.d.to_string(),
            e.a.to_string(),
            e.blur_nm.to_string(),
            e.phase_rad.to_string(),
            e.c.to_string(),
        ])?;
        let name = format!("aerial_{idx}_{}.pgm", stage_slug(row.label));
        write_pgm(dir.file(&name)?, &row.aerial, PgmFormat::Raw)?;
        dir.add_timing(Timing::new(
            format!("{kind}/{}", row.label),
            &row.epoch_seconds,
        ));
        lines.push(format!(
            "{kind} {} {:.4} {}",
            row.label,
            row.final_epe_nm,
            imp.map_or("-".into(), |v| format!("{v:.2}"))
        ));
        if let (None, Some(m)) = (&abort, &row.abort) {
            abort = Some(format!("{}: {m}", row.label));
        }
    }
    table.flush()?;
    params.flush()?;
    let root = dir.root().to_path_buf();
    dir.finish(if abort.is_some() { "aborted" } else { "ok" })?;
    Ok(Outcome {
        dir: root,
        lines,
        abort,
    })
}

/// Trains every requested kind into its own subdirectory. Failures are
/// recorded in the summary and the sweep moves on.
fn summary_record(s: &TrainSummary, status: &str) -> [String; 10] {
    let e = &s.effective;
    [
        s.kind.to_string(),
        s.final_epe_nm.to_string(),
        s.best_epe_nm.to_string(),
        s.improvement_pct.to_string(),
        e.d.to_string(),
        e.a.to_string(),
        e.blur_nm.to_string(),
        e.phase_rad.to_string(),
        e.c.to_string(),
        status.to_string(),
    ]
}

pub fn sweep(cfg: &RunConfig) -> Result<Outcome> {
    let mut kinds = cfg.kinds_or(PatternKind::standard())?;
    kinds.sort_by_key(|k| k.name());
    let mut dir = RunDir::create(&cfg.out_or("runs/sweep"), "sweep", cfg)?;
    let mut table = csv_writer(&dir.file("summary.csv")?)?;
    table.write_record([
        "kind",
        "final_epe_nm",
        "best_epe_nm",
        "improvement_pct",
        "d",
        "a",
        "blur_nm",
        "phase",
        "c",
        "status",
    ])?;
    let mut lines = Vec::new();
    let mut finals = Vec::new();
    if cfg.shared_generator {
        let res = train_shared(&kinds, &cfg.train)?;
        write_train_artifacts(&mut dir, "shared/", &res.run, cfg.baseline_epe_nm)?;
        let status = match &res.run.abort {
            Some(m) => format!("aborted: {m}"),
            None => "ok".into(),
        };
        for k in &res.kinds {
            let mut row = TrainSummary::new(&res.run, cfg.baseline_epe_nm);
            row.kind = k.kind;
            row.final_epe_nm = k.last.epe_nm;
            row.best_epe_nm = k.best_epe_nm;
            row.best_epoch = k.best_epoch;
            row.improvement_pct = improvement_pct(cfg.baseline_epe_nm, k.last.epe_nm);
            row.effective = k.last.effective;
            write_pgm(
                dir.file(&format!("{}/mask_final.pgm", k.kind))?,
                &k.last.mask,
                PgmFormat::Raw,
            )?;
            write_pgm(
                dir.file(&format!("{}/aerial_final.pgm", k.kind))?,
                &k.last.aerial,
                PgmFormat::Raw,
            )?;
            table.write_record(summary_record(&row, &status))?;
            finals.push(row.final_epe_nm);
            lines.push(row.line());
        }
    } else {
        for kind in &kinds {
            match train_kind(*kind, &cfg.train) {
                Ok(res) => {
                    let s = write_train_artifacts(
                        &mut dir,
                        &format!("{kind}/"),
                        &res,
                        cfg.baseline_epe_nm,
                    )?;
                    let status = match &s.abort {
                        Some(m) => format!("aborted: {m}"),
                        None => "ok".into(),
                    };
                    table.write_record(summary_record(&s, &status))?;
                    finals.push(s.final_epe_nm);
                    lines.push(s.line());
                }
                Err(err) => {
                    let mut rec = vec![kind.to_string()];
                    rec.extend(std::iter::repeat_n(String::new(), 8));
                    rec.push(format!("error: {err}"));
                    table.write_record(&rec)?;
                    finals.push(f64::NAN);
                    lines.push(format!("{kind} failed: {err}"));
                }
            }
        }
    }
    table.flush()?;

    let top = finals
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(cfg.baseline_epe_nm, f64::max)
        * 1.1;
    let mut img = plot::canvas(40 * finals.len() as u32 + 20, 300);
    let area = Rect {
        x: 10,
        y: 10,
        w: 40 * finals.len() as u32,
        h: 280,
    };
    plot::bars(
        &mut img,
        area,
        &finals,
        plot::BLUE,
        top,
        &[
            (TARGET_EPE_NM, plot::GREEN),
            (cfg.baseline_epe_nm, plot::RED),
        ],
    );
    img.save(dir.file("final_epe.png")?)?;

    let root = dir.root().to_path_buf();
    dir.finish("ok")?;
    Ok(Outcome {
        dir: root,
        lines,
        abort: None,
    })
}

fn theta_rows(e: &EffectiveParams) -> [(&'static str, f64, f64, f64); 5] {
    [
        ("d", e.d, 0.0, D_MAX),
        ("a", e.a, 0.0, A_MAX),
        (
            "sigma_b_px",
            e.sigma_b_px,
            SIGMA_B_MIN_PX,
            SIGMA_B_MIN_PX + SIGMA_B_SPAN_PX,
        ),
        ("phase_rad", e.phase_rad, -PHASE_MAX_RAD, PHASE_MAX_RAD),
        ("c", e.c, 0.0, C_MAX),
    ]
}

/// Counts of values in `[0, 1]`; values outside are clamped into the end bins.
pub fn histogram(f: &Field2D) -> [u64; HISTOGRAM_BINS] {
    let mut h = [0u64; HISTOGRAM_BINS];
    for &v in f.values() {
        let i = (v.clamp(0.0, 1.0) * HISTOGRAM_BINS as f64) as usize;
        h[i.min(HISTOGRAM_BINS - 1)] += 1;
    }
    h
}

/// Figure panels for a finished training run, read back from its artifacts.
pub fn render(cfg: &RunConfig) -> Result<Outcome> {
    let run = cfg
        .run_dir
        .clone()
        .ok_or_else(|| HarnessError::Usage("render needs a run directory".into()))?;
    let params_path = run.join("params.json");
    let text = fs::read_to_string(&params_path)
        .with_context(|| format!("reading {}", params_path.display()))?;
    let s: TrainSummary = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", params_path.display()))?;
    let px = s.pixel_size_nm;
    let load = |name: &str| {
        let p = run.join(name);
        read_pgm(&p, px).with_context(|| format!("reading {}", p.display()))
    };
    let target = load("target.pgm")?;
    let mask = load("mask_final.pgm")?;
    let aerial = load("aerial_final.pgm")?;
    let diff = load("diff.pgm")?;

    let mut dir = RunDir::create(&cfg.out_or(run.join("render")), "render", cfg)?;

    let mid = target.height() / 2;
    let mut w = csv_writer(&dir.file("cross_section.csv")?)?;
    w.write_record(["col", "target", "mask", "aerial"])?;
    for c in 0..target.width() {
        w.write_record([
            c.to_string(),
            target.get(mid, c).to_string(),
            mask.get(mid, c).to_string(),
            aerial.get(mid, c).to_string(),
        ])?;
    }
    w.flush()?;

    let theta = theta_rows(&s.effective);
    let mut w = csv_writer(&dir.file("theta.csv")?)?;
    w.write_record(["name", "value", "min", "max", "normalized"])?;
    let mut theta_norm = Vec::new();
    for (name, v, lo, hi) in theta {
        let n = (v - lo) / (hi - lo);
        theta_norm.push(n);
        w.write_record([
            name.to_string(),
            v.to_string(),
            lo.to_string(),
            hi.to_string(),
            n.to_string(),
        ])?;
    }
    w.flush()?;

    let epes = [
        ("initial", s.initial_epe_nm),
        ("best", s.best_epe_nm),
        ("final", s.final_epe_nm),
        ("baseline", BASELINE_EPE_NM),
        ("target", TARGET_EPE_NM),
    ];
    let mut w = csv_writer(&dir.file("epe_comparison.csv")?)?;
    w.write_record(["label", "epe_nm"])?;
    for (label, v) in epes {
        w.write_record([label.to_string(), v.to_string()])?;
    }
    w.flush()?;

    let (hm, ha) = (histogram(&mask), histogram(&aerial));
    let mut w = csv_writer(&dir.file("histogram.csv")?)?;
    w.write_record(["bin", "lo", "hi", "mask", "aerial"])?;
    for i in 0..HISTOGRAM_BINS {
        let lo = i as f64 / HISTOGRAM_BINS as f64;
        let hi = (i + 1) as f64 / HISTOGRAM_BINS as f64;
        w.write_record([
            i.to_string(),
            lo.to_string(),
            hi.to_string(),
            hm[i].to_string(),
            ha[i].to_string(),
        ])?;
    }
    w.flush()?;

    // Two rows of four 256 px tiles.
    let tile = 256u32;
    let gap = 8u32;
    let at = |i: u32| Rect {
        x: gap + (i % 4) * (tile + gap),
        y: gap + (i / 4) * (tile + gap),
        w: tile,
        h: tile,
    };
    let mut img = plot::canvas(4 * tile + 5 * gap, 2 * tile + 3 * gap);
    for (i, f) in [&target, &mask, &aerial, &diff].into_iter().enumerate() {
        plot::field(&mut img, at(i as u32), f);
    }
    let row = |f: &Field2D| f.row(mid).to_vec();
    let (rt, rm, ra) = (row(&target), row(&mask), row(&aerial));
    plot::lines(
        &mut img,
        at(4),
        &[(&rt, plot::BLACK), (&rm, plot::BLUE), (&ra, plot::RED)],
        1.05,
    );
    plot::bars(&mut img, at(5), &theta_norm, plot::BLUE, 1.0, &[]);
    let epe_vals: Vec<f64> = epes[..3].iter().map(|e| e.1).collect();
    let top = epe_vals.iter().copied().fold(BASELINE_EPE_NM, f64::max) * 1.1;
    plot::bars(
        &mut img,
        at(6),
        &epe_vals,
        plot::BLUE,
        top,
        &[(TARGET_EPE_NM, plot::GREEN), (BASELINE_EPE_NM, plot::RED)],
    );
    let peak = hm.iter().chain(&ha).copied().max().unwrap_or(1).max(1) as f64;
    let hist = |h: &[u64]| h.iter().map(|&c| c as f64).collect::<Vec<_>>();
    let inner = at(7);
    plot::bars(&mut img, inner, &hist(&hm), plot::BLUE, peak, &[]);
    plot::lines(&mut img, inner, &[(&hist(&ha), plot::RED)], peak);
    img.save(dir.file("panels.png")?)?;

    let root = dir.root().to_path_buf();
    dir.finish("ok")?;
    Ok(Outcome {
        dir: root,
        lines: vec![format!("{} rendered to {}", s.kind, run.display())],
        abort: None,
    })
}
