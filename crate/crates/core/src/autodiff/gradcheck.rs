use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::Path;

/// One coordinate of the parameter vector to probe.
#[derive(Debug, Clone, PartialEq)]
pub struct GradProbe {
    pub name: String,
    pub index: usize,
}

impl GradProbe {
    pub fn new(name: impl Into<String>, index: usize) -> Self {
        Self {
            name: name.into(),
            index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub param: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

impl GradReport {
    pub fn new(param: impl Into<String>, analytic: f64, numeric: f64) -> Self {
        let denom = 1e-8f64.max(analytic.abs()).max(numeric.abs());
        Self {
            param: param.into(),
            analytic,
            numeric,
            rel_err: (analytic - numeric).abs() / denom,
        }
    }
}

/// Compares `analytic[probe.index]` with the central difference
/// `(f(p + h e_i) - f(p - h e_i)) / 2h` for every probe. Reports come back
/// sorted by relative error, worst first.
pub fn check_gradients<F>(
    mut loss: F,
    point: &[f64],
    analytic: &[f64],
    probes: &[GradProbe],
    h: f64,
) -> Result<Vec<GradReport>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::param(format!("finite-difference step {h}")));
    }
    if analytic.len() != point.len() {
        return Err(Error::dim(format!(
            "{} analytic entries for {} parameters",
            analytic.len(),
            point.len()
        )));
    }
    let mut x = point.to_vec();
    let mut reports = Vec::with_capacity(probes.len());
    for probe in probes {
        let i = probe.index;
        if i >= x.len() {
            return Err(Error::dim(format!(
                "probe {} index {i} out of range",
                probe.name
            )));
        }
        let orig = x[i];
        x[i] = orig + h;
        let fp = loss(&x)?;
        x[i] = orig - h;
        let fm = loss(&x)?;
        x[i] = orig;
        reports.push(GradReport::new(
            &probe.name,
            analytic[i],
            (fp - fm) / (2.0 * h),
        ));
    }
    reports.sort_by(|a, b| b.rel_err.total_cmp(&a.rel_err));
    Ok(reports)
}

/// `k` distinct indices from `0..n`, ascending, reproducible from `seed`.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

pub fn write_grad_csv(path: impl AsRef<Path>, reports: &[GradReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_path(path)?;
    w.write_record(["param", "analytic", "numeric", "rel_err"])?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
