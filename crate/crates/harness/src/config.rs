use crate::error::HarnessError;
use anyhow::{Context, Result};
use euv_ilt::generator::GeneratorMode;
use euv_ilt::optimizer::TrainConfig;
use euv_ilt::patterns::PatternKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Reference EPE that improvements are quoted against, nm.
pub const BASELINE_EPE_NM: f64 = 4.5;
/// Target EPE drawn next to the baseline in charts, nm.
pub const TARGET_EPE_NM: f64 = 1.0;

/// Everything a command needs. Loaded from JSON, then CLI flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Pattern kinds; each command has its own default when absent.
    pub kinds: Option<Vec<PatternKind>>,
    /// Output directory; each command has its own default when absent.
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
    /// Rows of the progressive ablation to run (0 = no physics).
    pub ablation_rows: Vec<usize>,
    /// Run directory read by `render`.
    pub run_dir: Option<PathBuf>,
    pub baseline_epe_nm: f64,
    /// Sweep trains one model over all kinds instead of one per kind.
    pub shared_generator: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kinds: None,
            out: None,
            train: TrainConfig::default(),
            ablation_rows: (0..6).collect(),
            run_dir: None,
            baseline_epe_nm: BASELINE_EPE_NM,
            shared_generator: false,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub kinds: Vec<String>,
    pub out: Option<PathBuf>,
    pub mode: Option<GeneratorMode>,
    pub run_dir: Option<PathBuf>,
    pub shared: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Usage(format!("config {}: {e}", path.display())).into())
    }

    pub fn resolve(path: Option<&Path>, over: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = over.seed {
            cfg.train.seed = s;
        }
        if let Some(e) = over.epochs {
            cfg.train.epochs = e;
        }
        if !over.kinds.is_empty() {
            cfg.kinds = Some(parse_kinds(&over.kinds)?);
        }
        if let Some(o) = &over.out {
            cfg.out = Some(o.clone());
        }
        if let Some(m) = over.mode {
            cfg.train.mode = m;
        }
        if let Some(d) = &over.run_dir {
            cfg.run_dir = Some(d.clone());
        }
        cfg.shared_generator |= over.shared;
        cfg.train
            .validate()
            .map_err(|e| HarnessError::Usage(e.to_string()))?;
        if !(cfg.baseline_epe_nm.is_finite() && cfg.baseline_epe_nm > 0.0) {
            return Err(HarnessError::Usage(format!("baseline {} nm", cfg.baseline_epe_nm)).into());
        }
        Ok(cfg)
    }

    /// Requested kinds, or `default` when none were given. An explicitly
    /// empty list is a usage error.
    pub fn kinds_or(&self, default: &[PatternKind]) -> Result<Vec<PatternKind>> {
        match &self.kinds {
            None => Ok(default.to_vec()),
            Some(k) if k.is_empty() => Err(HarnessError::Usage("empty kind list".into()).into()),
            Some(k) => Ok(k.clone()),
        }
    }

    /// The single kind a per-pattern command works on.
    pub fn single_kind(&self) -> Result<PatternKind> {
        match self.kinds.as_deref() {
            Some([k]) => Ok(*k),
            Some([]) | None => Err(HarnessError::Usage("--kind is required".into()).into()),
            Some(_) => Err(HarnessError::Usage("expected exactly one kind".into()).into()),
        }
    }

    pub fn out_or(&self, default: impl Into<PathBuf>) -> PathBuf {
        self.out.clone().unwrap_or_else(|| default.into())
    }
}

/// Kind names, comma lists, and the groups `all`, `standard`, `advanced`.
pub fn parse_kinds(items: &[String]) -> Result<Vec<PatternKind>> {
    let mut out = Vec::new();
    for item in items {
        for name in item.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "all" => out.extend_from_slice(&PatternKind::ALL),
                "standard" => out.extend_from_slice(PatternKind::standard()),
                "advanced" => out.extend_from_slice(PatternKind::advanced()),
                _ => out.push(
                    name.parse::<PatternKind>()
                        .map_err(|e| HarnessError::Usage(e.to_string()))?,
                ),
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|k| seen.insert(*k));
    Ok(out)
}
