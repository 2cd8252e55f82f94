use super::Adam;
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::generator::{generate, Generator, GeneratorMode, PixelMaskParams};
use crate::metrology::{epe, EpeConfig};
use crate::objective::{total_loss_on_tape, EdgeLossMode, LossBreakdown, LossWeights};
use crate::patterns::{default_dataset_size, sample_dataset, PatternKind, Sample};
use crate::physics::{
    ablation_stages, activate, EffectiveParams, ForwardModel, PhysicsParams, StageFlags, ThetaNodes,
};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_generator: f64,
    pub lr_physics: f64,
    pub seed: u64,
    pub stages: StageFlags,
    pub weights: LossWeights,
    pub edge_loss_mode: EdgeLossMode,
    /// Samples per epoch; drawn from 48..=52 by `seed` when absent.
    pub dataset_size: Option<usize>,
    /// Keep a checkpoint every this many epochs; 0 keeps none.
    pub checkpoint_every: usize,
    pub mode: GeneratorMode,
    pub init_params: PhysicsParams,
    /// Overrides the pattern family's registered EPE configuration.
    pub epe: Option<EpeConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr_generator: 1e-4,
            lr_physics: 1e-2,
            seed: 7,
            stages: StageFlags::ALL,
            weights: LossWeights::default(),
            edge_loss_mode: EdgeLossMode::MagDiff,
            dataset_size: None,
            checkpoint_every: 0,
            mode: GeneratorMode::PixelDirect,
            init_params: PhysicsParams::default(),
            epe: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        for (name, lr) in [
            ("lr_generator", self.lr_generator),
            ("lr_physics", self.lr_physics),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("{name} = {lr}")));
            }
        }
        if let Some(n) = self.dataset_size {
            if !(1..=1000).contains(&n) {
                return Err(Error::Config(format!("dataset size {n} outside 1..=1000")));
            }
        }
        if self.init_params.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "initial physics parameters must be finite".into(),
            ));
        }
        self.weights.validate()
    }

    pub fn resolved_dataset_size(&self) -> usize {
        self.dataset_size
            .unwrap_or_else(|| default_dataset_size(self.seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub epe_nm: f64,
    pub effective: EffectiveParams,
}

/// Model state on the canonical sample at one point of training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// `None` for the state before the first update.
    pub epoch: Option<usize>,
    pub epe_nm: f64,
    pub params: PhysicsParams,
    pub effective: EffectiveParams,
    pub mask: Field2D,
    pub aerial: Field2D,
    /// Pixel logits of the canonical sample; absent for the CNN.
    pub logits: Option<Field2D>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub kind: PatternKind,
    pub target: Field2D,
    pub history: Vec<EpochRecord>,
    pub initial: Checkpoint,
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub checkpoints: Vec<Checkpoint>,
    /// Diagnostic when training stopped on a non-finite value; `last` is
    /// then the final good state.
    pub abort: Option<String>,
    pub epoch_seconds: Vec<f64>,
}

impl TrainResult {
    pub fn final_epe_nm(&self) -> f64 {
        self.last.epe_nm
    }

    pub fn best_epe_nm(&self) -> f64 {
        self.best.epe_nm
    }
}

/// `100 * (baseline - value) / baseline`.
pub fn improvement_pct(baseline: f64, value: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        100.0 * (baseline - value) / baseline
    }
}

enum Masks {
    /// One set of logits and one optimizer per sample.
    Pixel(Vec<(PixelMaskParams, Adam)>),
    Cnn(Generator, Adam),
}

impl Masks {
    fn generator_for(&self, i: usize) -> Generator {
        match self {
            Masks::Pixel(v) => Generator::PixelDirect(v[i].0.clone()),
            Masks::Cnn(g, _) => g.clone(),
        }
    }

    fn logits(&self, i: usize) -> Option<Field2D> {
        match self {
            Masks::Pixel(v) => Some(v[i].0.logits.clone()),
            Masks::Cnn(..) => None,
        }
    }
}

struct Trainer<'a> {
    samples: &'a [Sample],
    cfg: &'a TrainConfig,
    model: ForwardModel,
    epe_cfg: EpeConfig,
    theta: PhysicsParams,
    adam_theta: Adam,
    masks: Masks,
    tape: Tape,
}

impl<'a> Trainer<'a> {
    fn new(samples: &'a [Sample], cfg: &'a TrainConfig) -> Result<Self> {
        let first = &samples[0];
        let px = first.field.pixel_size_nm();
        let masks = match cfg.mode {
            GeneratorMode::PixelDirect => Masks::Pixel(
                samples
                    .iter()
                    .map(|s| {
                        let p = PixelMaskParams::from_target(&s.field);
                        let n = p.logits.len();
                        (p, Adam::new(n, cfg.lr_generator))
                    })
                    .collect(),
            ),
            GeneratorMode::MiniCnn => {
                let g = Generator::init(GeneratorMode::MiniCnn, &first.field, cfg.seed);
                let n = match &g {
                    Generator::MiniCnn(p) => p.num_params(),
                    Generator::PixelDirect(_) => unreachable!(),
                };
                Masks::Cnn(g, Adam::new(n, cfg.lr_generator))
            }
        };
        Ok(Self {
            samples,
            cfg,
            model: ForwardModel::new(px)?,
            epe_cfg: cfg
                .epe
                .clone()
                .unwrap_or_else(|| EpeConfig::for_kind(first.spec.kind)),
            theta: cfg.init_params,
            adam_theta: Adam::new(5, cfg.lr_physics),
            masks,
            tape: Tape::new(),
        })
    }

    /// Loss, backward pass and updates for one sample.
    fn step(&mut self, i: usize) -> Result<LossBreakdown> {
        let sample = &self.samples[i];
        let tape = &mut self.tape;
        tape.reset();
        let target = tape.leaf(Tensor::from_field(&sample.field))?;
        let (mask, leaves): (NodeId, Vec<NodeId>) = match &self.masks {
            Masks::Pixel(v) => {
                let l = tape.leaf(Tensor::from_field(&v[i].0.logits))?;
                (tape.sigmoid(l)?, vec![l])
            }
            Masks::Cnn(Generator::MiniCnn(p), _) => {
                let nodes = p.record(tape)?;
                (nodes.forward(tape, target)?, nodes.leaves())
            }
            Masks::Cnn(Generator::PixelDirect(_), _) => unreachable!(),
        };
        let theta = ThetaNodes::record(tape, &self.theta)?;
        let image = self
            .model
            .forward_on_tape(tape, mask, theta, self.cfg.stages)?;
        let loss = total_loss_on_tape(
            tape,
            image,
            target,
            theta,
            &self.cfg.weights,
            self.cfg.edge_loss_mode,
        )?;
        let breakdown = loss.breakdown(tape);
        if !breakdown.total.is_finite() {
            return Err(Error::Numerical(format!(
                "loss {} on sample {i}",
                breakdown.total
            )));
        }
        tape.backward(loss.total)?;

        let mut g_theta = [0.0; 5];
        for (g, &n) in g_theta.iter_mut().zip(&theta.0) {
            *g = tape.grad(n)?.item();
        }
        let mut g_gen = Vec::new();
        for &l in &leaves {
            g_gen.extend_from_slice(tape.grad(l)?.data());
        }

        match &mut self.masks {
            Masks::Pixel(v) => {
                let (p, adam) = &mut v[i];
                adam.step(p.logits.values_mut(), &g_gen)
                    .map_err(|e| context(e, &format!("mask logits of sample {i}")))?;
            }
            Masks::Cnn(Generator::MiniCnn(p), adam) => {
                let mut flat: Vec<f64> = Vec::with_capacity(g_gen.len());
                for t in p.tensors() {
                    flat.extend_from_slice(t.data());
                }
                adam.step(&mut flat, &g_gen)
                    .map_err(|e| context(e, "generator weights"))?;
                let mut off = 0;
                for t in p.tensors_mut() {
                    let n = t.len();
                    t.data_mut().copy_from_slice(&flat[off..off + n]);
                    off += n;
                }
            }
            Masks::Cnn(Generator::PixelDirect(_), _) => unreachable!(),
        }
        let mut raw = self.theta.to_array();
        self.adam_theta
            .step(&mut raw, &g_theta)
            .map_err(|e| context(e, "physics parameters"))?;
        self.theta = PhysicsParams::from_array(raw);
        Ok(breakdown)
    }

    fn checkpoint(&self, epoch: Option<usize>) -> Result<Checkpoint> {
        self.checkpoint_at(0, &self.epe_cfg, epoch)
    }

    /// State on sample `i`, scored with `epe_cfg`.
    fn checkpoint_at(
        &self,
        i: usize,
        epe_cfg: &EpeConfig,
        epoch: Option<usize>,
    ) -> Result<Checkpoint> {
        let target = &self.samples[i].field;
        let mask = generate(target, &self.masks.generator_for(i))?;
        let aerial = self.model.forward(&mask, &self.theta, self.cfg.stages)?;
        if !aerial.all_finite() {
            return Err(Error::Numerical(
                "aerial image has non-finite values".into(),
            ));
        }
        let report = epe(&aerial, target, epe_cfg)?;
        Ok(Checkpoint {
            epoch,
            epe_nm: report.epe_nm,
            params: self.theta,
            effective: activate(&self.theta, self.model.pixel_size_nm())?,
            mask,
            aerial,
            logits: self.masks.logits(i),
        })
    }
}

fn context(e: Error, what: &str) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{what}: {m}")),
        other => other,
    }
}

/// Trains on `samples` (sample 0 is the canonical template that EPE is
/// measured on). Samples are visited in order with one update per sample;
/// epoch losses are sample means taken before each update.
pub fn train(samples: &[Sample], cfg: &TrainConfig) -> Result<TrainResult> {
    fit(samples, cfg, |_, _| Ok(()))
}

/// The training loop. `after_epoch` sees the trainer once per completed
/// epoch; a numerical error from it aborts like one from an update.
fn fit<F>(samples: &[Sample], cfg: &TrainConfig, mut after_epoch: F) -> Result<TrainResult>
where
    F: FnMut(&Trainer, usize) -> Result<()>,
{
    cfg.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("empty training set".into()))?;
    for s in samples {
        first.field.check_same_shape(&s.field, "training samples")?;
    }
    let mut tr = Trainer::new(samples, cfg)?;
    let initial = tr.checkpoint(None)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Checkpoint> = None;
    let mut last = initial.clone();
    let mut checkpoints = Vec::new();
    let mut epoch_seconds = Vec::with_capacity(cfg.epochs);
    let mut abort = None;
    let n = samples.len() as f64;

    'epochs: for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut sum = [0.0; 4];
        for i in 0..samples.len() {
            match tr.step(i) {
                Ok(b) => {
                    sum[0] += b.total;
                    sum[1] += b.recon;
                    sum[2] += b.edge;
                    sum[3] += b.physics_reg;
                }
                Err(Error::Numerical(m)) => {
                    abort = Some(format!("epoch {epoch}: {m}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let cp = match tr.checkpoint(Some(epoch)) {
            Ok(cp) => cp,
            Err(Error::Numerical(m)) => {
                abort = Some(format!("epoch {epoch}: {m}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if let Err(e) = after_epoch(&tr, epoch) {
            match e {
                Error::Numerical(m) => {
                    abort = Some(format!("epoch {epoch}: {m}"));
                    break;
                }
                e => return Err(e),
            }
        }
        history.push(EpochRecord {
            epoch,
            loss: LossBreakdown {
                total: sum[0] / n,
                recon: sum[1] / n,
                edge: sum[2] / n,
                physics_reg: sum[3] / n,
            },
            epe_nm: cp.epe_nm,
            effective: cp.effective,
        });
        epoch_seconds.push(start.elapsed().as_secs_f64());
        if best.as_ref().is_none_or(|b| cp.epe_nm < b.epe_nm) {
            best = Some(cp.clone());
        }
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            checkpoints.push(cp.clone());
        }
        last = cp;
    }

    Ok(TrainResult {
        kind: first.spec.kind,
        target: first.field.clone(),
        history,
        best: best.unwrap_or_else(|| initial.clone()),
        initial,
        last,
        checkpoints,
        abort,
        epoch_seconds,
    })
}

/// Builds the jittered dataset for `kind` from the config's seed and trains.
pub fn train_kind(kind: PatternKind, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let samples = sample_dataset(kind, cfg.resolved_dataset_size(), cfg.seed)?;
    train(&samples, cfg)
}

/// Per-pattern outcome of a shared training.
#[derive(Debug, Clone)]
pub struct SharedKind {
    pub kind: PatternKind,
    pub last: Checkpoint,
    pub best_epe_nm: f64,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SharedResult {
    /// The run as seen from the first kind's canonical template.
    pub run: TrainResult,
    pub kinds: Vec<SharedKind>,
}

/// One training over the datasets of all `kinds` with a single set of
/// physics parameters (and a single network in CNN mode). Samples are
/// interleaved across kinds; every kind's canonical template is scored
/// with its own EPE configuration after each epoch.
pub fn train_shared(kinds: &[PatternKind], cfg: &TrainConfig) -> Result<SharedResult> {
    cfg.validate()?;
    if kinds.is_empty() {
        return Err(Error::Config(
            "shared training needs at least one kind".into(),
        ));
    }
    let n = cfg.resolved_dataset_size();
    let sets = kinds
        .iter()
        .map(|&k| sample_dataset(k, n, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(n * kinds.len());
    for i in 0..n {
        for set in &sets {
            samples.push(set[i].clone());
        }
    }
    let evals: Vec<EpeConfig> = kinds
        .iter()
        .map(|&k| cfg.epe.clone().unwrap_or_else(|| EpeConfig::for_kind(k)))
        .collect();

    let mut out: Vec<Option<SharedKind>> = vec![None; kinds.len()];
    let run = fit(&samples, cfg, |tr, epoch| {
        for (j, (kind, ecfg)) in kinds.iter().zip(&evals).enumerate() {
            let cp = tr.checkpoint_at(j, ecfg, Some(epoch))?;
            let slot = &mut out[j];
            let (best_epe_nm, best_epoch) = match slot {
                Some(s) if s.best_epe_nm <= cp.epe_nm => (s.best_epe_nm, s.best_epoch),
                _ => (cp.epe_nm, Some(epoch)),
            };
            *slot = Some(SharedKind {
                kind: *kind,
                last: cp,
                best_epe_nm,
                best_epoch,
            });
        }
        Ok(())
    })?;

    let mut shared = Vec::with_capacity(kinds.len());
    for (j, slot) in out.into_iter().enumerate() {
        match slot {
            Some(s) => shared.push(s),
            // Aborted before the first epoch finished: report the start.
            None => {
                let tr = Trainer::new(&samples, cfg)?;
                let cp = tr.checkpoint_at(j, &evals[j], None)?;
                shared.push(SharedKind {
                    kind: kinds[j],
                    best_epe_nm: cp.epe_nm,
                    best_epoch: None,
                    last: cp,
                });
            }
        }
    }
    Ok(SharedResult { run, kinds: shared })
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub label: &'static str,
    pub stages: StageFlags,
    pub final_epe_nm: f64,
    pub best_epe_nm: f64,
    pub effective: EffectiveParams,
    pub aerial: Field2D,
    pub abort: Option<String>,
    pub epoch_seconds: Vec<f64>,
}

/// Independent trainings over the cumulative stage sets selected by
/// `rows` (indices into the six-step progression, 0 = no physics).
pub fn ablate(samples: &[Sample], cfg: &TrainConfig, rows: &[usize]) -> Result<Vec<AblationRow>> {
    let stages = ablation_stages();
    let mut out = Vec::with_capacity(rows.len());
    for &r in rows {
        let (label, flags) = *stages
            .get(r)
            .ok_or_else(|| Error::Config(format!("ablation row {r} outside 0..6")))?;
        let run_cfg = TrainConfig {
            stages: flags,
            ..cfg.clone()
        };
        let res = train(samples, &run_cfg)?;
        out.push(AblationRow {
            label,
            stages: flags,
            final_epe_nm: res.final_epe_nm(),
            best_epe_nm: res.best_epe_nm(),
            effective: res.last.effective,
            aerial: res.last.aerial,
            abort: res.abort,
            epoch_seconds: res.epoch_seconds,
        });
    }
    Ok(out)
}

pub const HISTORY_HEADER: [&str; 11] = [
    "epoch", "total", "recon", "edge", "reg", "epe_nm", "d", "a", "blur_nm", "phase", "c",
];

/// Writes the per-epoch history as CSV with LF line endings.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for r in history {
        let e = &r.effective;
        let l = &r.loss;
        w.write_record([
            r.epoch.to_string(),
            l.total.to_string(),
            l.recon.to_string(),
            l.edge.to_string(),
            l.physics_reg.to_string(),
            r.epe_nm.to_string(),
            e.d.to_string(),
            e.a.to_string(),
            e.blur_nm.to_string(),
            e.phase_rad.to_string(),
            e.c.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
