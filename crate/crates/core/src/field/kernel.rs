use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Side length of the dynamically generated blur kernel.
pub const GAUSSIAN_KERNEL_SIZE: usize = 7;

/// Square, odd-sized convolution kernel stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::dim(format!("kernel size {size} is even")));
        }
        if weights.len() != size * size {
            return Err(Error::dim(format!(
                "{} weights for a {size}x{size} kernel",
                weights.len()
            )));
        }
        Ok(Self { size, weights })
    }

    /// Unit impulse: convolution with it is the identity.
    pub fn delta(size: usize) -> Result<Self> {
        let mut weights = vec![0.0; size * size];
        if size % 2 == 1 {
            weights[size * size / 2] = 1.0;
        }
        Self::new(size, weights)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at integer offset `(dy, dx)` from the center.
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((dy + r) * self.size as isize + (dx + r)) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let a = PI * x;
        a.sin() / a
    }
}

/// Un-normalized Gaussian weights over integer offsets in `[-3, 3]^2`.
pub(crate) fn gaussian_weights(sigma_px: f64) -> Vec<f64> {
    let r = (GAUSSIAN_KERNEL_SIZE / 2) as isize;
    let two_s2 = 2.0 * sigma_px * sigma_px;
    let mut w = Vec::with_capacity(GAUSSIAN_KERNEL_SIZE * GAUSSIAN_KERNEL_SIZE);
    for y in -r..=r {
        for x in -r..=r {
            let d2 = (x * x + y * y) as f64;
            w.push((-d2 / two_s2).exp());
        }
    }
    w
}

/// 7x7 Gaussian point-spread kernel normalized to unit sum.
pub fn gaussian_kernel(sigma_px: f64) -> Result<Kernel2D> {
    if !(sigma_px.is_finite() && sigma_px > 0.0) {
        return Err(Error::param(format!("gaussian sigma {sigma_px} px")));
    }
    let w = gaussian_weights(sigma_px);
    let z: f64 = w.iter().sum();
    Kernel2D::new(GAUSSIAN_KERNEL_SIZE, w.into_iter().map(|v| v / z).collect())
}

/// Derivative of each normalized Gaussian weight with respect to sigma.
pub(crate) fn gaussian_kernel_sigma_derivative(sigma_px: f64) -> Vec<f64> {
    let r = (GAUSSIAN_KERNEL_SIZE / 2) as isize;
    let w = gaussian_weights(sigma_px);
    let s3 = sigma_px * sigma_px * sigma_px;
    let mut dw = Vec::with_capacity(w.len());
    let mut i = 0;
    for y in -r..=r {
        for x in -r..=r {
            let d2 = (x * x + y * y) as f64;
            dw.push(w[i] * d2 / s3);
            i += 1;
        }
    }
    let z: f64 = w.iter().sum();
    let dz: f64 = dw.iter().sum();
    w.iter()
        .zip(&dw)
        .map(|(&wi, &dwi)| dwi / z - wi * dz / (z * z))
        .collect()
}

/// Fresnel-style diffraction kernel `sinc(r) exp(-r^2 / 4)`, with `r` the
/// pixel distance scaled by `pixel_size_nm / lambda_nm`, normalized to unit sum.
pub fn diffraction_kernel(size: usize, pixel_size_nm: f64, lambda_nm: f64) -> Result<Kernel2D> {
    if size.is_multiple_of(2) || size == 0 {
        return Err(Error::param(format!("diffraction kernel size {size}")));
    }
    if !(pixel_size_nm.is_finite() && pixel_size_nm > 0.0) {
        return Err(Error::param(format!("pixel size {pixel_size_nm} nm")));
    }
    if !(lambda_nm.is_finite() && lambda_nm > 0.0) {
        return Err(Error::param(format!("wavelength {lambda_nm} nm")));
    }
    let half = (size / 2) as isize;
    let scale = pixel_size_nm / lambda_nm;
    let mut w = Vec::with_capacity(size * size);
    for y in -half..=half {
        for x in -half..=half {
            let r = ((x * x + y * y) as f64).sqrt() * scale;
            w.push(sinc(r) * (-r * r / 4.0).exp());
        }
    }
    let z: f64 = w.iter().sum();
    if z.abs() < 1e-12 {
        return Err(Error::Numerical("diffraction kernel sums to zero".into()));
    }
    Kernel2D::new(size, w.into_iter().map(|v| v / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entropy(k: &Kernel2D) -> f64 {
        k.weights()
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    #[test]
    fn gaussian_center_weight_matches_direct_sum() {
        let mut z = 0.0;
        for y in -3i32..=3 {
            for x in -3i32..=3 {
                z += (-((x * x + y * y) as f64) / 2.0).exp();
            }
        }
        let k = gaussian_kernel(1.0).unwrap();
        assert!((k.at(0, 0) - 1.0 / z).abs() < 1e-15);
        assert!((k.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_is_symmetric() {
        let k = gaussian_kernel(1.7).unwrap();
        for y in -3..=3 {
            for x in -3..=3 {
                assert_eq!(k.at(y, x), k.at(-y, x));
                assert_eq!(k.at(y, x), k.at(y, -x));
                assert_eq!(k.at(y, x), k.at(x, y));
            }
        }
    }

    #[test]
    fn wider_gaussian_has_more_entropy() {
        let narrow = gaussian_kernel(0.5).unwrap();
        let wide = gaussian_kernel(3.5).unwrap();
        assert!(entropy(&wide) > entropy(&narrow));
    }

    #[test]
    fn gaussian_rejects_non_positive_sigma() {
        assert!(gaussian_kernel(0.0).is_err());
        assert!(gaussian_kernel(-1.0).is_err());
        assert!(gaussian_kernel(f64::NAN).is_err());
    }

    #[test]
    fn sigma_derivative_matches_finite_difference() {
        let s = 1.3;
        let h = 1e-6;
        let d = gaussian_kernel_sigma_derivative(s);
        let kp = gaussian_kernel(s + h).unwrap();
        let km = gaussian_kernel(s - h).unwrap();
        for i in 0..d.len() {
            let fd = (kp.weights()[i] - km.weights()[i]) / (2.0 * h);
            assert!((fd - d[i]).abs() < 1e-8, "{i}: {fd} vs {}", d[i]);
        }
    }

    #[test]
    fn diffraction_center_is_unit_before_normalization() {
        assert_eq!(sinc(0.0) * (-0.0f64 / 4.0).exp(), 1.0);
        let k = diffraction_kernel(7, 6.328, 13.5).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn diffraction_matches_scalar_evaluation() {
        // Independent scalar evaluation of the kernel formula.
        let (p, lam) = (6.328f64, 13.5f64);
        let raw = |x: i32, y: i32| -> f64 {
            let r = (((x * x + y * y) as f64).sqrt()) * p / lam;
            let s = if r == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * r).sin() / (std::f64::consts::PI * r)
            };
            s * (-(r * r) / 4.0).exp()
        };
        let mut z = 0.0;
        for y in -3..=3 {
            for x in -3..=3 {
                z += raw(x, y);
            }
        }
        let k = diffraction_kernel(7, p, lam).unwrap();
        for y in -3..=3 {
            for x in -3..=3 {
                let expected = raw(x, y) / z;
                assert!((k.at(y as isize, x as isize) - expected).abs() < 1e-12);
            }
        }
        for y in -3isize..=3 {
            for x in -3isize..=3 {
                assert_eq!(k.at(y, x), k.at(x, y));
                assert_eq!(k.at(y, x), k.at(-y, x));
            }
        }
    }

    #[test]
    fn kernel_rejects_even_size() {
        assert!(Kernel2D::new(4, vec![0.0; 16]).is_err());
        assert!(diffraction_kernel(6, 6.328, 13.5).is_err());
    }
}
