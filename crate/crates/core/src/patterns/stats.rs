use crate::error::{Error, Result};
use crate::field::Field2D;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternStats {
    pub fill_ratio: f64,
    /// Shortest interior run of 1-pixels along rows or columns, nm. `None`
    /// when the field has no such run.
    pub min_feature_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Lengths of runs of ones. Runs cut off by the field border are skipped
/// (their true extent is unknown) unless they cover the whole line.
fn interior_runs(line: impl Iterator<Item = f64>, out: &mut Vec<usize>) {
    let line: Vec<bool> = line.map(|v| v == 1.0).collect();
    let n = line.len();
    let mut i = 0;
    while i < n {
        if !line[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && line[i] {
            i += 1;
        }
        let touches = start == 0 || i == n;
        if !touches || (start == 0 && i == n) {
            out.push(i - start);
        }
    }
}

pub fn stats(field: &Field2D) -> Result<PatternStats> {
    if !field.is_binary() {
        return Err(Error::Contract("pattern stats need a binary field".into()));
    }
    let ones = field.values().iter().filter(|&&v| v == 1.0).count();
    let mut runs = Vec::new();
    for r in 0..field.height() {
        interior_runs(field.row(r).iter().copied(), &mut runs);
    }
    for c in 0..field.width() {
        interior_runs(field.column(c).into_iter(), &mut runs);
    }
    Ok(PatternStats {
        fill_ratio: ones as f64 / field.len() as f64,
        min_feature_nm: runs
            .into_iter()
            .min()
            .map(|r| r as f64 * field.pixel_size_nm()),
        warnings: Vec::new(),
    })
}
