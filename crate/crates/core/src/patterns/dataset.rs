use super::{render, PatternKind, PatternSpec};
use crate::error::{Error, Result};
use crate::field::Field2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Jitter ranges for pitch and feature width, nm.
pub const JITTER_PITCH_NM: (f64, f64) = (20.0, 100.0);
pub const JITTER_WIDTH_NM: (f64, f64) = (8.0, 50.0);

#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub spec: PatternSpec,
    pub aspect_ratio: f64,
    #[serde(skip)]
    pub field: Field2D,
}

/// Dataset size drawn uniformly from 48..=52.
pub fn default_dataset_size(seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).gen_range(48..=52)
}

fn kind_stream(kind: PatternKind, base_seed: u64) -> ChaCha8Rng {
    let salt = (kind.index() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(base_seed ^ salt)
}

/// `n` samples of `kind`: sample 0 is the canonical template, the rest have
/// pitch, width and an integer translation of up to one pitch drawn at random.
pub fn sample_dataset(kind: PatternKind, n: usize, base_seed: u64) -> Result<Vec<Sample>> {
    if !(1..=1000).contains(&n) {
        return Err(Error::param(format!("dataset size {n} outside 1..=1000")));
    }
    let canonical = PatternSpec::canonical(kind);
    let px = canonical.grid.pixel_size_nm;
    let w_lo = JITTER_WIDTH_NM.0.max(px);
    let p_lo = JITTER_PITCH_NM.0.max(w_lo + px);
    let p_hi = JITTER_PITCH_NM.1;
    if p_lo > p_hi {
        return Err(Error::Geometry(format!(
            "no valid pitch for {kind} at {px} nm pixels"
        )));
    }
    let mut rng = kind_stream(kind, base_seed);
    let mut out = Vec::with_capacity(n);
    out.push(Sample {
        aspect_ratio: canonical.aspect_ratio(),
        field: render(&canonical)?,
        spec: canonical.clone(),
    });
    for _ in 1..n {
        let pitch_nm = rng.gen_range(p_lo..=p_hi);
        let width_nm = rng.gen_range(w_lo..=JITTER_WIDTH_NM.1.min(pitch_nm - px));
        let max_shift = (pitch_nm / px).round() as i64;
        let spec = PatternSpec {
            pitch_nm,
            width_nm,
            seed: rng.gen(),
            offset_px: (rng.gen_range(0..=max_shift), rng.gen_range(0..=max_shift)),
            ..canonical.clone()
        };
        out.push(Sample {
            aspect_ratio: spec.aspect_ratio(),
            field: render(&spec)?,
            spec,
        });
    }
    Ok(out)
}
