use super::{PatternKind, PatternSpec};
use crate::error::Result;
use crate::field::Field2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Axis-aligned rectangle inside a unit cell, nm. `wy = INFINITY` spans
/// the full field height.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    wx: f64,
    wy: f64,
}

fn rect(x0: f64, y0: f64, wx: f64, wy: f64) -> Rect {
    Rect { x0, y0, wx, wy }
}

fn column(wx: f64) -> Rect {
    rect(0.0, 0.0, wx, f64::INFINITY)
}

/// Rectangles repeated on a `cell_x` by `cell_y` lattice starting at `origin`.
#[derive(Debug, Clone)]
struct Lattice {
    rects: Vec<Rect>,
    cell: (f64, f64),
    origin: (f64, f64),
}

enum Layout {
    Tiled(Lattice),
    /// Each lattice site kept with probability `density`.
    Random {
        lattice: Lattice,
        density: f64,
        seed: u64,
    },
    /// Sinusoidal strokes `y = k p + A sin(2 pi x / L + 0.9 k)`.
    Waves {
        pitch: f64,
        stroke: f64,
        amp: f64,
        period: f64,
    },
}

pub(super) fn canonical_pitch_width(kind: PatternKind) -> (f64, f64) {
    use PatternKind::*;
    match kind {
        LogicGates => (140.0, 32.0),
        EuvLineSpace => (32.0, 16.0),
        EuvContacts => (50.0, 40.0),
        EuvMetal => (42.0, 24.0),
        StiPattern => (139.2, 120.2),
        Finfet3nm => (24.0, 12.0),
        DramArrays => (38.0, 30.0),
        SramCells => (101.25, 12.66),
        ContactCuts => (87.0, 50.6),
        HighNaLines => (24.0, 12.0),
        HighNaContacts => (38.5, 28.0),
        Curvilinear => (109.0, 9.5),
        GaafetNanosheets => (150.0, 12.0),
        Mbcfet => (120.0, 8.0),
        BacksidePower => (31.0, 20.0),
        Cfet => (40.0, 8.0),
        HighNaSub8 => (16.0, 8.0),
        StrainEngineering => (40.0, 25.0),
    }
}

fn tiled(rects: Vec<Rect>, cell: (f64, f64), origin: (f64, f64)) -> Layout {
    Layout::Tiled(Lattice {
        rects,
        cell,
        origin,
    })
}

/// Geometry of each family as a function of its pitch `p` and feature width
/// `w`; secondary dimensions keep their template proportions.
fn layout(spec: &PatternSpec) -> Layout {
    use PatternKind::*;
    let (p, w) = (spec.pitch_nm, spec.width_nm);
    match spec.kind {
        LogicGates => {
            // Two vertical bars joined by a horizontal bridge.
            let h = p * 400.0 / 140.0;
            tiled(
                vec![
                    rect(0.0, 0.0, w, h),
                    rect(p, 0.0, w, h),
                    rect(0.0, h / 2.0 - w / 2.0, p + w, w),
                ],
                (p * 405.0 / 140.0, p * 5.0),
                (p * 40.0 / 140.0, p * 60.0 / 140.0),
            )
        }
        EuvLineSpace | Finfet3nm => tiled(vec![column(w)], (p, p), (3.0, 0.0)),
        EuvContacts => tiled(vec![rect(0.0, 0.0, w, w)], (p, p), (5.0, 5.0)),
        StiPattern => tiled(vec![rect(0.0, 0.0, w, w)], (p, p), (10.0, 10.0)),
        HighNaContacts => tiled(vec![rect(0.0, 0.0, w, w)], (p, p), (3.0, 3.0)),
        EuvMetal => tiled(
            vec![column(w), rect(0.0, 0.0, p, w * 19.0 / 24.0)],
            (p, p * 95.0 / 42.0),
            (3.0, 3.0),
        ),
        DramArrays => tiled(
            vec![rect(0.0, 0.0, w, w * 5.0 / 3.0)],
            (p, p * 59.0 / 38.0),
            (3.0, 3.0),
        ),
        SramCells => tiled(
            vec![
                rect(0.0, w, 0.75 * p, 2.0 * w),
                rect(0.25 * p, p / 2.0 + w, 0.75 * p, 2.0 * w),
                rect(p / 8.0, 0.0, w, p),
                rect(5.0 * p / 8.0, 0.0, w, p),
            ],
            (p, p),
            (3.0, 3.0),
        ),
        ContactCuts => Layout::Random {
            lattice: Lattice {
                rects: vec![rect(0.0, 0.0, w, w)],
                cell: (p, p),
                origin: (3.0, 3.0),
            },
            density: spec.density,
            seed: spec.seed,
        },
        HighNaLines => {
            // Staggered line segments with short end gaps.
            let seg = p * 490.0 / 24.0;
            let gap = p * 25.0 / 24.0;
            tiled(
                vec![
                    rect(0.0, 0.0, w, seg - gap),
                    rect(p, seg / 2.0, w, seg - gap),
                ],
                (2.0 * p, seg),
                (3.0, 3.0),
            )
        }
        Curvilinear => Layout::Waves {
            pitch: p,
            stroke: w,
            amp: 0.3 * p,
            period: 4.0 * p,
        },
        GaafetNanosheets => tiled(
            vec![
                rect(0.0, 0.0, p, w),
                rect(0.0, 2.0 * w, p, w),
                rect(0.0, 4.0 * w, p, w),
                rect(p / 2.0 - w / 2.0, 0.0, w, 5.0 * w),
            ],
            (p * 1.2, w * 95.0 / 12.0),
            (3.0, 3.0),
        ),
        Mbcfet => {
            // Nanosheets of three widths between two anchors.
            let u = w / 8.0;
            tiled(
                vec![
                    rect(0.0, 0.0, p, w),
                    rect(0.0, w + 8.0 * u, p, 14.0 * u),
                    rect(0.0, w + 30.0 * u, p, 20.0 * u),
                    rect(0.0, 0.0, w, w + 50.0 * u),
                    rect(p - w, 0.0, w, w + 50.0 * u),
                ],
                (p * 145.0 / 120.0, 80.0 * u),
                (3.0, 3.0),
            )
        }
        BacksidePower => {
            let via_pitch = p * 90.0 / 31.0;
            tiled(
                vec![
                    rect(0.0, 0.0, via_pitch, w),
                    rect(via_pitch / 2.0, w, 0.75 * w, p - w),
                ],
                (via_pitch, p),
                (3.0, 3.0),
            )
        }
        Cfet => {
            let iso = w * 5.0 / 8.0;
            let len = 3.0 * p;
            tiled(
                vec![
                    rect(0.0, 0.0, len, w),
                    rect(0.0, w + iso, len, w),
                    rect(len / 2.0 - w / 2.0, 0.0, w, 2.0 * w + iso),
                ],
                (3.5 * p, p),
                (3.0, 3.0),
            )
        }
        HighNaSub8 => tiled(
            vec![column(w), rect(0.0, 0.0, p, w)],
            (p, p * 68.0 / 16.0),
            (3.0, -3.0),
        ),
        StrainEngineering => tiled(
            vec![rect(0.0, 0.0, w, 2.5 * p)],
            (p, p * 115.0 / 40.0),
            (3.0, 3.0),
        ),
    }
}

/// Named feature dimensions of a spec, nm.
pub(super) fn feature_sizes(spec: &PatternSpec) -> Vec<(&'static str, f64)> {
    let mut out = vec![("width", spec.width_nm)];
    match layout(spec) {
        Layout::Tiled(l) | Layout::Random { lattice: l, .. } => {
            for r in l.rects {
                out.push(("rect width", r.wx));
                if r.wy.is_finite() {
                    out.push(("rect height", r.wy));
                }
            }
        }
        Layout::Waves { stroke, .. } => out.push(("stroke", stroke)),
    }
    out
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Nearest-pixel start and at-least-one-pixel length of an interval.
fn quantize(start_nm: f64, len_nm: f64, px: f64) -> (i64, i64) {
    (
        round_half_up(start_nm / px),
        round_half_up(len_nm / px).max(1),
    )
}

fn fill_rect(values: &mut [f64], width: usize, height: usize, x: (i64, i64), y: (i64, i64)) {
    let (x0, x1) = (x.0.max(0), (x.0 + x.1).min(width as i64));
    let (y0, y1) = (y.0.max(0), (y.0 + y.1).min(height as i64));
    for r in y0..y1 {
        for c in x0..x1 {
            values[r as usize * width + c as usize] = 1.0;
        }
    }
}

fn draw_lattice(
    lattice: &Lattice,
    spec: &PatternSpec,
    mut keep: impl FnMut() -> bool,
    values: &mut [f64],
) {
    let g = &spec.grid;
    let px = g.pixel_size_nm;
    let (cx, cy) = lattice.cell;
    let ox = lattice.origin.0 + spec.offset_px.0 as f64 * px;
    let oy = lattice.origin.1 + spec.offset_px.1 as f64 * px;
    let (fw, fh) = (g.width as f64 * px, g.height as f64 * px);
    // Enough cells on each side to cover any origin within a few periods.
    let lo_i = -2 - (ox / cx).max(0.0).ceil() as i64;
    let lo_j = -2 - (oy / cy).max(0.0).ceil() as i64;
    let hi_i = (fw / cx) as i64 + 3 + (-ox / cx).max(0.0).ceil() as i64;
    let hi_j = (fh / cy) as i64 + 3 + (-oy / cy).max(0.0).ceil() as i64;
    for j in lo_j..hi_j {
        for i in lo_i..hi_i {
            if !keep() {
                continue;
            }
            for r in &lattice.rects {
                let xs = quantize(i as f64 * cx + r.x0 + ox, r.wx, px);
                let ys = if r.wy.is_finite() {
                    quantize(j as f64 * cy + r.y0 + oy, r.wy, px)
                } else {
                    (0, g.height as i64)
                };
                fill_rect(values, g.width, g.height, xs, ys);
            }
        }
    }
}

/// Rasterizes a spec to a binary field. Deterministic in the spec.
pub fn render(spec: &PatternSpec) -> Result<Field2D> {
    spec.validate()?;
    let g = spec.grid;
    let px = g.pixel_size_nm;
    let mut values = vec![0.0; g.width * g.height];
    match layout(spec) {
        Layout::Tiled(l) => draw_lattice(&l, spec, || true, &mut values),
        Layout::Random {
            lattice,
            density,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            draw_lattice(&lattice, spec, || rng.gen_bool(density), &mut values);
        }
        Layout::Waves {
            pitch,
            stroke,
            amp,
            period,
        } => {
            let ox = spec.offset_px.0 as f64 * px;
            let oy = spec.offset_px.1 as f64 * px;
            for r in 0..g.height {
                let y = (r as f64 + 0.5) * px - oy;
                for c in 0..g.width {
                    let x = (c as f64 + 0.5) * px - ox;
                    let k = ((y - amp * (2.0 * PI * x / period).sin()) / pitch).round() as i64;
                    let hit = (k - 1..=k + 1).any(|kk| {
                        let yc = kk as f64 * pitch
                            + amp * (2.0 * PI * x / period + 0.9 * kk as f64).sin();
                        (y - yc).abs() <= stroke / 2.0
                    });
                    if hit {
                        values[r * g.width + c] = 1.0;
                    }
                }
            }
        }
    }
    Field2D::new(g.width, g.height, px, values)
}
