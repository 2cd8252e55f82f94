//! Edge placement error on scanlines: threshold crossings located by linear
//! interpolation, matched against the target edge by edge.

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::patterns::PatternKind;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_MATCH_PX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Absolute level 0.5.
    FixedHalf,
    /// Half of the field maximum.
    HalfMax,
    /// Half-max when the field exceeds 1 (unclamped intensities), else 0.5.
    Adaptive,
}

impl ThresholdMode {
    pub fn level(self, field: &Field2D) -> f64 {
        match self {
            ThresholdMode::FixedHalf => 0.5,
            ThresholdMode::HalfMax => 0.5 * field.max(),
            ThresholdMode::Adaptive => {
                let m = field.max();
                if m > 1.0 {
                    0.5 * m
                } else {
                    0.5
                }
            }
        }
    }
}

/// Which edge coordinates are measured. `Columns` finds the column position of
/// edges by scanning every row (the right choice for vertical lines); `Rows`
/// finds row positions by scanning every column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxes {
    Rows,
    Columns,
    Both,
}

impl ScanAxes {
    fn includes(self, axis: Axis) -> bool {
        matches!(
            (self, axis),
            (ScanAxes::Both, _) | (ScanAxes::Columns, Axis::X) | (ScanAxes::Rows, Axis::Y)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpeConfig {
    pub family: String,
    pub threshold_mode: ThresholdMode,
    pub scan_axes: ScanAxes,
    pub max_match_distance_px: f64,
}

impl Default for EpeConfig {
    fn default() -> Self {
        Self {
            family: "generic".into(),
            threshold_mode: ThresholdMode::Adaptive,
            scan_axes: ScanAxes::Both,
            max_match_distance_px: DEFAULT_MAX_MATCH_PX,
        }
    }
}

impl EpeConfig {
    /// Registered configuration for a pattern family.
    pub fn for_kind(kind: PatternKind) -> Self {
        use PatternKind::*;
        let (family, scan_axes) = match kind {
            k if k.is_line_space() => ("line_space", ScanAxes::Columns),
            EuvContacts | HighNaContacts | ContactCuts | StiPattern => ("contact", ScanAxes::Both),
            DramArrays | SramCells => ("memory", ScanAxes::Both),
            _ => ("generic", ScanAxes::Both),
        };
        Self {
            family: family.into(),
            scan_axes,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_match_distance_px.is_finite() && self.max_match_distance_px > 0.0) {
            return Err(Error::Config(format!(
                "max match distance {} px",
                self.max_match_distance_px
            )));
        }
        Ok(())
    }
}

/// Coordinate an edge position is measured along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Column coordinate, found on a row.
    X,
    /// Row coordinate, found on a column.
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub axis: Axis,
    /// Row index for `Axis::X`, column index for `Axis::Y`.
    pub line: usize,
    /// Fractional pixel coordinate of the crossing.
    pub position: f64,
    /// True for a low-to-high crossing in the scan direction.
    pub rising: bool,
}

fn crossings(line: impl Iterator<Item = f64>, level: f64, mut emit: impl FnMut(f64, bool)) {
    let mut prev: Option<f64> = None;
    for (i, v) in line.enumerate() {
        if let Some(p) = prev {
            let rising = p < level && v >= level;
            let falling = p >= level && v < level;
            if rising || falling {
                emit((i - 1) as f64 + (level - p) / (v - p), rising);
            }
        }
        prev = Some(v);
    }
}

fn edges_at(field: &Field2D, level: f64, axes: ScanAxes) -> Vec<Edge> {
    let mut out = Vec::new();
    if axes.includes(Axis::X) {
        for r in 0..field.height() {
            crossings(field.row(r).iter().copied(), level, |position, rising| {
                out.push(Edge {
                    axis: Axis::X,
                    line: r,
                    position,
                    rising,
                })
            });
        }
    }
    if axes.includes(Axis::Y) {
        for c in 0..field.width() {
            crossings(field.column(c).into_iter(), level, |position, rising| {
                out.push(Edge {
                    axis: Axis::Y,
                    line: c,
                    position,
                    rising,
                })
            });
        }
    }
    out
}

/// Sub-pixel threshold crossings along the configured scanlines, ordered by
/// axis, then scanline, then position. A constant field has none.
pub fn detect_edges(field: &Field2D, config: &EpeConfig) -> Vec<Edge> {
    if field.is_constant() {
        return Vec::new();
    }
    edges_at(field, config.threshold_mode.level(field), config.scan_axes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpeReport {
    pub epe_nm: f64,
    pub n_edges: usize,
    pub matched_fraction: f64,
    /// Per target edge: distance to its match, or the penalty when unmatched, px.
    pub residuals_px: Vec<f64>,
}

/// Mean edge displacement of `pred` against a binary `target`, nm. Each target
/// edge is paired with the nearest same-direction predicted edge on the same
/// scanline within the match distance; unmatched edges score the match
/// distance itself.
pub fn epe(pred: &Field2D, target: &Field2D, config: &EpeConfig) -> Result<EpeReport> {
    pred.check_same_shape(target, "epe")?;
    config.validate()?;
    if !target.is_binary() {
        return Err(Error::Contract("epe target must be binary".into()));
    }
    if !pred.all_finite() {
        return Err(Error::Numerical("prediction has non-finite values".into()));
    }
    let target_edges = edges_at(target, 0.5, config.scan_axes);
    if target_edges.is_empty() {
        return Err(Error::Metric(
            "target has no edges along the scan axes".into(),
        ));
    }
    let pred_edges = detect_edges(pred, config);
    let max_d = config.max_match_distance_px;

    // Bucket predicted edges by (axis, line, direction) for lookup.
    let lines = |axis: Axis| match axis {
        Axis::X => pred.height(),
        Axis::Y => pred.width(),
    };
    let slot = |e: &Edge| {
        let base = match e.axis {
            Axis::X => 0,
            Axis::Y => lines(Axis::X),
        };
        2 * (base + e.line) + usize::from(e.rising)
    };
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); 2 * (lines(Axis::X) + lines(Axis::Y))];
    for e in &pred_edges {
        buckets[slot(e)].push(e.position);
    }

    let mut residuals = Vec::with_capacity(target_edges.len());
    let mut matched = 0usize;
    for e in &target_edges {
        let best = buckets[slot(e)]
            .iter()
            .map(|p| (p - e.position).abs())
            .fold(f64::INFINITY, f64::min);
        if best <= max_d {
            matched += 1;
            residuals.push(best);
        } else {
            residuals.push(max_d);
        }
    }
    let n = residuals.len();
    let mean_px = residuals.iter().sum::<f64>() / n as f64;
    Ok(EpeReport {
        epe_nm: mean_px * pred.pixel_size_nm(),
        n_edges: n,
        matched_fraction: matched as f64 / n as f64,
        residuals_px: residuals,
    })
}

pub fn epe_for_kind(pred: &Field2D, target: &Field2D, kind: PatternKind) -> Result<EpeReport> {
    epe(pred, target, &EpeConfig::for_kind(kind))
}

/// Registered configurations for every pattern kind, in catalog order.
pub fn registry() -> Vec<(PatternKind, EpeConfig)> {
    PatternKind::ALL
        .iter()
        .map(|&k| (k, EpeConfig::for_kind(k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_of_a_unit_step() {
        let mut got = Vec::new();
        crossings([0.0, 0.0, 1.0, 1.0, 0.0].into_iter(), 0.5, |p, r| {
            got.push((p, r))
        });
        assert_eq!(got, [(1.5, true), (3.5, false)]);
    }

    #[test]
    fn every_kind_is_registered() {
        let reg = registry();
        assert_eq!(reg.len(), 18);
        assert_eq!(reg[1].1.scan_axes, ScanAxes::Columns);
        assert_eq!(
            EpeConfig::for_kind(PatternKind::DramArrays).scan_axes,
            ScanAxes::Both
        );
    }
}
