use super::{gaussian_kernel, Field2D, Kernel2D};
use crate::error::{Error, Result};

/// Reflect ("mirror without edge repeat") index into `0..n`.
fn reflect(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// `table[p] = reflect(p - pad)` for every padded coordinate `p`.
fn pad_table(n: usize, pad: usize) -> Vec<usize> {
    (0..n + 2 * pad)
        .map(|p| reflect(p as isize - pad as isize, n))
        .collect()
}

/// `out += input (*) kernel` for one channel, true convolution with reflect
/// padding. Taps are visited in row-major kernel order, so every output pixel
/// accumulates in the same fixed sequence.
pub(crate) fn conv_accumulate(
    input: &[f64],
    height: usize,
    width: usize,
    kernel: &[f64],
    kh: usize,
    kw: usize,
    out: &mut [f64],
) {
    let (ry, rx) = (kh / 2, kw / 2);
    let rows = pad_table(height, ry);
    let cols = pad_table(width, rx);
    for i in 0..kh {
        for j in 0..kw {
            let k = kernel[i * kw + j];
            for y in 0..height {
                let src_row = rows[y + 2 * ry - i];
                let src = &input[src_row * width..(src_row + 1) * width];
                let dst = &mut out[y * width..(y + 1) * width];
                let col_off = 2 * rx - j;
                for (x, d) in dst.iter_mut().enumerate() {
                    *d += k * src[cols[x + col_off]];
                }
            }
        }
    }
}

/// Adjoint of [`conv_accumulate`] with respect to its input.
pub(crate) fn conv_input_adjoint(
    grad_out: &[f64],
    height: usize,
    width: usize,
    kernel: &[f64],
    kh: usize,
    kw: usize,
    grad_in: &mut [f64],
) {
    let (ry, rx) = (kh / 2, kw / 2);
    let rows = pad_table(height, ry);
    let cols = pad_table(width, rx);
    for i in 0..kh {
        for j in 0..kw {
            let k = kernel[i * kw + j];
            for y in 0..height {
                let src_row = rows[y + 2 * ry - i];
                let g = &grad_out[y * width..(y + 1) * width];
                let col_off = 2 * rx - j;
                for (x, &gv) in g.iter().enumerate() {
                    grad_in[src_row * width + cols[x + col_off]] += k * gv;
                }
            }
        }
    }
}

/// Adjoint of [`conv_accumulate`] with respect to the kernel weights.
pub(crate) fn conv_kernel_adjoint(
    grad_out: &[f64],
    input: &[f64],
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    grad_kernel: &mut [f64],
) {
    let (ry, rx) = (kh / 2, kw / 2);
    let rows = pad_table(height, ry);
    let cols = pad_table(width, rx);
    for i in 0..kh {
        for j in 0..kw {
            let mut acc = 0.0;
            for y in 0..height {
                let src_row = rows[y + 2 * ry - i];
                let src = &input[src_row * width..(src_row + 1) * width];
                let g = &grad_out[y * width..(y + 1) * width];
                let col_off = 2 * rx - j;
                for (x, &gv) in g.iter().enumerate() {
                    acc += gv * src[cols[x + col_off]];
                }
            }
            grad_kernel[i * kw + j] += acc;
        }
    }
}

/// Same-shape 2-D convolution with reflect padding.
pub fn conv2d(input: &Field2D, kernel: &Kernel2D) -> Result<Field2D> {
    let size = kernel.size();
    if size.is_multiple_of(2) {
        return Err(Error::dim(format!("kernel size {size} is even")));
    }
    if size > input.width().min(input.height()) {
        return Err(Error::dim(format!(
            "{size}x{size} kernel larger than {}x{} field",
            input.width(),
            input.height()
        )));
    }
    let mut out = vec![0.0; input.len()];
    conv_accumulate(
        input.values(),
        input.height(),
        input.width(),
        kernel.weights(),
        size,
        size,
        &mut out,
    );
    Ok(input.with_values(out))
}

/// Gaussian blur with a passthrough below `threshold_px`: weak blur is treated
/// as no blur at all.
pub fn gaussian_blur(input: &Field2D, sigma_px: f64, threshold_px: f64) -> Result<Field2D> {
    if sigma_px <= threshold_px {
        return Ok(input.clone());
    }
    conv2d(input, &gaussian_kernel(sigma_px)?)
}

/// Mean over pixels of `|d/dx f| + |d/dy f|`, forward differences with the last
/// row and column replicated (their differences vanish).
pub fn gradient_l1(field: &Field2D) -> f64 {
    let (w, h) = (field.width(), field.height());
    let v = field.values();
    let mut acc = 0.0;
    for r in 0..h {
        for c in 0..w {
            let here = v[r * w + c];
            if c + 1 < w {
                acc += (v[r * w + c + 1] - here).abs();
            }
            if r + 1 < h {
                acc += (v[(r + 1) * w + c] - here).abs();
            }
        }
    }
    acc / field.len() as f64
}

/// Gradient of [`gradient_l1`] with respect to every pixel, scaled by
/// `upstream`. The subgradient of `|0|` is taken as zero.
pub fn gradient_l1_adjoint(field: &Field2D, upstream: f64) -> Vec<f64> {
    let (w, h) = (field.width(), field.height());
    let v = field.values();
    let scale = upstream / field.len() as f64;
    let mut g = vec![0.0; v.len()];
    let sign = |d: f64| {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                let s = sign(v[i + 1] - v[i]) * scale;
                g[i + 1] += s;
                g[i] -= s;
            }
            if r + 1 < h {
                let s = sign(v[i + w] - v[i]) * scale;
                g[i + w] += s;
                g[i] -= s;
            }
        }
    }
    g
}

fn split_shift(dx: f64) -> (isize, f64) {
    let k0 = dx.floor();
    (k0 as isize, dx - k0)
}

#[inline]
fn clamp_col(c: isize, width: usize) -> usize {
    c.clamp(0, width as isize - 1) as usize
}

/// Sub-pixel translation along x by linear interpolation between the two
/// bracketing integer shifts. Positive `dx_px` moves content right; the
/// boundary column is replicated.
pub fn fractional_shift(field: &Field2D, dx_px: f64) -> Field2D {
    if dx_px == 0.0 {
        return field.clone();
    }
    field.with_values(shift_plane(
        field.values(),
        field.height(),
        field.width(),
        dx_px,
    ))
}

pub(crate) fn shift_plane(input: &[f64], height: usize, width: usize, dx_px: f64) -> Vec<f64> {
    let (k0, f) = split_shift(dx_px);
    let mut out = Vec::with_capacity(input.len());
    for r in 0..height {
        let row = &input[r * width..(r + 1) * width];
        for c in 0..width {
            let a = row[clamp_col(c as isize - k0, width)];
            let b = row[clamp_col(c as isize - k0 - 1, width)];
            out.push((1.0 - f) * a + f * b);
        }
    }
    out
}

pub(crate) fn shift_adjoint(grad_out: &[f64], height: usize, width: usize, dx_px: f64) -> Vec<f64> {
    let (k0, f) = split_shift(dx_px);
    let mut g = vec![0.0; grad_out.len()];
    for r in 0..height {
        for c in 0..width {
            let gv = grad_out[r * width + c];
            g[r * width + clamp_col(c as isize - k0, width)] += (1.0 - f) * gv;
            g[r * width + clamp_col(c as isize - k0 - 1, width)] += f * gv;
        }
    }
    g
}

/// `sum(grad_out * d shift(input, dx) / d dx)` within the current integer cell.
pub(crate) fn shift_dx_derivative(
    input: &[f64],
    grad_out: &[f64],
    height: usize,
    width: usize,
    dx_px: f64,
) -> f64 {
    let (k0, _) = split_shift(dx_px);
    let mut acc = 0.0;
    for r in 0..height {
        let row = &input[r * width..(r + 1) * width];
        for c in 0..width {
            let a = row[clamp_col(c as isize - k0, width)];
            let b = row[clamp_col(c as isize - k0 - 1, width)];
            acc += grad_out[r * width + c] * (b - a);
        }
    }
    acc
}

/// `keep * f + moved * shift(f, dx)`, returning `f` untouched when `dx` is zero.
pub fn blend_shift(field: &Field2D, dx_px: f64, keep: f64, moved: f64) -> Field2D {
    if dx_px == 0.0 {
        return field.clone();
    }
    let shifted = fractional_shift(field, dx_px);
    field.with_values(
        field
            .values()
            .iter()
            .zip(shifted.values())
            .map(|(&a, &s)| keep * a + moved * s)
            .collect(),
    )
}
