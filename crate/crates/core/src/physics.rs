//! Five-stage differentiable EUV forward model: diffraction, absorption,
//! blur, phase displacement and contrast, each with a bounded learnable
//! strength and an on/off switch for ablations.

use crate::autodiff::{logit, sigmoid, tanh_bounded, NodeId, Tape};
use crate::error::{Error, Result};
use crate::field::{
    blend_shift, conv2d, diffraction_kernel, gaussian_blur, Field2D, Kernel2D,
    DEFAULT_PIXEL_SIZE_NM, EUV_WAVELENGTH_NM,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DIFFRACTION_KERNEL_SIZE: usize = 7;
/// Blur at or below this sigma (pixels) is skipped entirely.
pub const BLUR_THRESHOLD_PX: f64 = 0.6;
pub const D_MAX: f64 = 0.5;
pub const A_MAX: f64 = 0.3;
pub const SIGMA_B_MIN_PX: f64 = 0.5;
pub const SIGMA_B_SPAN_PX: f64 = 3.0;
pub const PHASE_MAX_RAD: f64 = 0.5;
pub const C_MAX: f64 = 2.0;
/// Blend weights of the unshifted and shifted images in the phase stage.
pub const PHASE_KEEP: f64 = 0.8;
pub const PHASE_MOVED: f64 = 0.2;

/// The five raw learnable scalars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub theta_d_raw: f64,
    pub theta_a_raw: f64,
    pub theta_b_raw: f64,
    pub theta_p_raw: f64,
    pub theta_c_raw: f64,
}

impl PhysicsParams {
    pub const NAMES: [&'static str; 5] = ["theta_d", "theta_a", "theta_b", "theta_p", "theta_c"];

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            theta_d_raw: v[0],
            theta_a_raw: v[1],
            theta_b_raw: v[2],
            theta_p_raw: v[3],
            theta_c_raw: v[4],
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.theta_d_raw,
            self.theta_a_raw,
            self.theta_b_raw,
            self.theta_p_raw,
            self.theta_c_raw,
        ]
    }

    /// Raw values that activate to the given effective parameters. Every
    /// value must lie strictly inside its range.
    pub fn from_effective(d: f64, a: f64, sigma_b_px: f64, phase_rad: f64, c: f64) -> Result<Self> {
        let unit = |v: f64, lo: f64, span: f64, what: &str| -> Result<f64> {
            let u = (v - lo) / span;
            if u > 0.0 && u < 1.0 {
                Ok(u)
            } else {
                Err(Error::param(format!("{what} = {v} outside its open range")))
            }
        };
        let p = phase_rad / PHASE_MAX_RAD;
        if !(p > -1.0 && p < 1.0) {
            return Err(Error::param(format!(
                "phase {phase_rad} rad outside its open range"
            )));
        }
        Ok(Self {
            theta_d_raw: logit(unit(d, 0.0, D_MAX, "diffraction")?),
            theta_a_raw: logit(unit(a, 0.0, A_MAX, "absorption")?),
            theta_b_raw: logit(unit(
                sigma_b_px,
                SIGMA_B_MIN_PX,
                SIGMA_B_SPAN_PX,
                "blur sigma",
            )?),
            theta_p_raw: p.atanh(),
            theta_c_raw: logit(unit(c, 0.0, C_MAX, "contrast")?),
        })
    }
}

/// Physically bounded values the raw parameters map to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub d: f64,
    pub a: f64,
    pub sigma_b_px: f64,
    pub phase_rad: f64,
    pub c: f64,
    pub blur_nm: f64,
}

/// Serialized form used in `params.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsReport {
    pub diffraction: f64,
    pub absorption: f64,
    pub blur_nm: f64,
    pub phase_rad: f64,
    pub contrast: f64,
}

impl EffectiveParams {
    pub fn report(&self) -> ParamsReport {
        ParamsReport {
            diffraction: self.d,
            absorption: self.a,
            blur_nm: self.blur_nm,
            phase_rad: self.phase_rad,
            contrast: self.c,
        }
    }

    /// True when every value lies strictly inside its range.
    pub fn within_bounds(&self) -> bool {
        let open = |v: f64, lo: f64, hi: f64| v > lo && v < hi;
        open(self.d, 0.0, D_MAX)
            && open(self.a, 0.0, A_MAX)
            && open(
                self.sigma_b_px,
                SIGMA_B_MIN_PX,
                SIGMA_B_MIN_PX + SIGMA_B_SPAN_PX,
            )
            && open(self.phase_rad, -PHASE_MAX_RAD, PHASE_MAX_RAD)
            && open(self.c, 0.0, C_MAX)
    }
}

pub fn activate(params: &PhysicsParams, pixel_size_nm: f64) -> Result<EffectiveParams> {
    for (name, v) in PhysicsParams::NAMES.iter().zip(params.to_array()) {
        if !v.is_finite() {
            return Err(Error::param(format!("{name} = {v}")));
        }
    }
    let sigma_b_px = SIGMA_B_SPAN_PX * sigmoid(params.theta_b_raw) + SIGMA_B_MIN_PX;
    Ok(EffectiveParams {
        d: D_MAX * sigmoid(params.theta_d_raw),
        a: A_MAX * sigmoid(params.theta_a_raw),
        sigma_b_px,
        phase_rad: PHASE_MAX_RAD * tanh_bounded(params.theta_p_raw),
        c: C_MAX * sigmoid(params.theta_c_raw),
        blur_nm: sigma_b_px * pixel_size_nm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFlags {
    pub diffraction: bool,
    pub absorption: bool,
    pub blur: bool,
    pub phase: bool,
    pub contrast: bool,
}

impl Default for StageFlags {
    fn default() -> Self {
        Self::ALL
    }
}

impl StageFlags {
    pub const NONE: Self = Self {
        diffraction: false,
        absorption: false,
        blur: false,
        phase: false,
        contrast: false,
    };
    pub const ALL: Self = Self {
        diffraction: true,
        absorption: true,
        blur: true,
        phase: true,
        contrast: true,
    };

    /// The first `n` stages (in model order) enabled.
    pub fn cumulative(n: usize) -> Self {
        Self {
            diffraction: n >= 1,
            absorption: n >= 2,
            blur: n >= 3,
            phase: n >= 4,
            contrast: n >= 5,
        }
    }

    pub fn enabled_count(&self) -> usize {
        [
            self.diffraction,
            self.absorption,
            self.blur,
            self.phase,
            self.contrast,
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }
}

/// Row labels of the progressive ablation, paired with their stage sets.
pub fn ablation_stages() -> [(&'static str, StageFlags); 6] {
    [
        ("no_physics", StageFlags::cumulative(0)),
        ("+diffraction", StageFlags::cumulative(1)),
        ("+absorption", StageFlags::cumulative(2)),
        ("+blur", StageFlags::cumulative(3)),
        ("+phase", StageFlags::cumulative(4)),
        ("full_physics", StageFlags::cumulative(5)),
    ]
}

/// Pixels of x displacement per radian of effective phase.
pub fn phase_px_per_rad(lambda_nm: f64, pixel_size_nm: f64) -> f64 {
    lambda_nm * 10.0 / (2.0 * PI * pixel_size_nm)
}

pub fn phase_displacement_px(phase_rad: f64, lambda_nm: f64, pixel_size_nm: f64) -> f64 {
    phase_rad * phase_px_per_rad(lambda_nm, pixel_size_nm)
}

/// `I1 = M + d * (K_d (*) M)`.
pub fn apply_diffraction(mask: &Field2D, d: f64, kernel: &Kernel2D) -> Result<Field2D> {
    let spread = conv2d(mask, kernel)?;
    mask.zip_map(&spread, |m, k| m + k * d)
}

/// `I2 = I1 * (1 - M * a)`.
pub fn apply_absorption(i1: &Field2D, mask: &Field2D, a: f64) -> Result<Field2D> {
    i1.zip_map(mask, |i, m| i * (1.0 - m * a))
}

pub fn apply_blur(i2: &Field2D, sigma_b_px: f64) -> Result<Field2D> {
    gaussian_blur(i2, sigma_b_px, BLUR_THRESHOLD_PX)
}

/// `I4 = 0.8 * I3 + 0.2 * shift_x(I3, dx)` with `dx` from the effective phase.
pub fn apply_phase(i3: &Field2D, phase_rad: f64, lambda_nm: f64, pixel_size_nm: f64) -> Field2D {
    let dx = phase_displacement_px(phase_rad, lambda_nm, pixel_size_nm);
    blend_shift(i3, dx, PHASE_KEEP, PHASE_MOVED)
}

/// `I = clamp(c * I4, 0, 1)`.
pub fn apply_contrast(i4: &Field2D, c: f64) -> Field2D {
    i4.map(|v| (v * c).clamp(0.0, 1.0))
}

/// Raw-parameter nodes on a tape, in model order.
#[derive(Debug, Clone, Copy)]
pub struct ThetaNodes(pub [NodeId; 5]);

impl ThetaNodes {
    pub fn record(tape: &mut Tape, params: &PhysicsParams) -> Result<Self> {
        let v = params.to_array();
        Ok(Self([
            tape.scalar(v[0])?,
            tape.scalar(v[1])?,
            tape.scalar(v[2])?,
            tape.scalar(v[3])?,
            tape.scalar(v[4])?,
        ]))
    }
}

/// Forward model bound to a grid: holds the precomputed diffraction kernel.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    kernel: Kernel2D,
    pixel_size_nm: f64,
    lambda_nm: f64,
}

impl Default for ForwardModel {
    fn default() -> Self {
        Self::new(DEFAULT_PIXEL_SIZE_NM).expect("default grid is valid")
    }
}

impl ForwardModel {
    pub fn new(pixel_size_nm: f64) -> Result<Self> {
        Self::with_wavelength(pixel_size_nm, EUV_WAVELENGTH_NM)
    }

    pub fn with_wavelength(pixel_size_nm: f64, lambda_nm: f64) -> Result<Self> {
        Ok(Self {
            kernel: diffraction_kernel(DIFFRACTION_KERNEL_SIZE, pixel_size_nm, lambda_nm)?,
            pixel_size_nm,
            lambda_nm,
        })
    }

    pub fn kernel(&self) -> &Kernel2D {
        &self.kernel
    }

    pub fn pixel_size_nm(&self) -> f64 {
        self.pixel_size_nm
    }

    pub fn lambda_nm(&self) -> f64 {
        self.lambda_nm
    }

    /// Applies the enabled stages in the fixed order diffraction, absorption,
    /// blur, phase, contrast.
    pub fn forward(
        &self,
        mask: &Field2D,
        params: &PhysicsParams,
        flags: StageFlags,
    ) -> Result<Field2D> {
        let eff = activate(params, self.pixel_size_nm)?;
        let mut img = mask.clone();
        if flags.diffraction {
            img = apply_diffraction(&img, eff.d, &self.kernel)?;
        }
        if flags.absorption {
            img = apply_absorption(&img, mask, eff.a)?;
        }
        if flags.blur {
            img = apply_blur(&img, eff.sigma_b_px)?;
        }
        if flags.phase {
            img = apply_phase(&img, eff.phase_rad, self.lambda_nm, self.pixel_size_nm);
        }
        if flags.contrast {
            img = apply_contrast(&img, eff.c);
        }
        Ok(img)
    }

    /// Records the same computation as [`ForwardModel::forward`] on `tape`;
    /// the resulting values are bit-identical.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        mask: NodeId,
        theta: ThetaNodes,
        flags: StageFlags,
    ) -> Result<NodeId> {
        let [td, ta, tb, tp, tc] = theta.0;
        let mut img = mask;
        if flags.diffraction {
            let s = tape.sigmoid(td)?;
            let d = tape.affine(s, D_MAX, 0.0)?;
            let spread = tape.conv(img, &self.kernel)?;
            let scaled = tape.mul(spread, d)?;
            img = tape.add(img, scaled)?;
        }
        if flags.absorption {
            let s = tape.sigmoid(ta)?;
            let a = tape.affine(s, A_MAX, 0.0)?;
            let ma = tape.mul(mask, a)?;
            let transmit = tape.affine(ma, -1.0, 1.0)?;
            img = tape.mul(img, transmit)?;
        }
        if flags.blur {
            let s = tape.sigmoid(tb)?;
            let sigma = tape.affine(s, SIGMA_B_SPAN_PX, SIGMA_B_MIN_PX)?;
            img = tape.gauss_blur(img, sigma, BLUR_THRESHOLD_PX)?;
        }
        if flags.phase {
            let t = tape.tanh(tp)?;
            let phase = tape.affine(t, PHASE_MAX_RAD, 0.0)?;
            let dx = tape.affine(
                phase,
                phase_px_per_rad(self.lambda_nm, self.pixel_size_nm),
                0.0,
            )?;
            img = tape.shift(img, dx, PHASE_KEEP, PHASE_MOVED)?;
        }
        if flags.contrast {
            let s = tape.sigmoid(tc)?;
            let c = tape.affine(s, C_MAX, 0.0)?;
            let scaled = tape.mul(img, c)?;
            img = tape.clamp(scaled, 0.0, 1.0)?;
        }
        Ok(img)
    }
}

/// One-shot forward evaluation on the mask's own grid.
pub fn forward(mask: &Field2D, params: &PhysicsParams, flags: StageFlags) -> Result<Field2D> {
    ForwardModel::new(mask.pixel_size_nm())?.forward(mask, params, flags)
}
