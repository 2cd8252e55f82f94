//! Raster container and the image-processing primitives the forward model is
//! assembled from.
//!
//! Every raster in the pipeline (mask, target, intermediate and final aerial
//! images) is a [`Field2D`]: a row-major block of `f64` with a physical pixel
//! pitch attached. Convolutions use reflect padding throughout so that
//! normalized kernels leave constant fields untouched.

mod io;
mod kernel;
mod ops;

pub use io::{decode_pgm, encode_pgm, read_csv, read_pgm, write_csv, write_pgm, PgmFormat};
pub use kernel::{diffraction_kernel, gaussian_kernel, sinc, Kernel2D, GAUSSIAN_KERNEL_SIZE};
pub use ops::{
    blend_shift, conv2d, fractional_shift, gaussian_blur, gradient_l1, gradient_l1_adjoint,
};

pub(crate) use kernel::gaussian_kernel_sigma_derivative;
pub(crate) use ops::{
    conv_accumulate, conv_input_adjoint, conv_kernel_adjoint, shift_adjoint, shift_dx_derivative,
    shift_plane,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default experiment pixel pitch: an 810 nm field sampled on 128 pixels.
pub const DEFAULT_PIXEL_SIZE_NM: f64 = 6.328;
pub const DEFAULT_GRID: usize = 128;
/// EUV wavelength used by the diffraction kernel and the phase displacement.
pub const EUV_WAVELENGTH_NM: f64 = 13.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field2D {
    width: usize,
    height: usize,
    pixel_size_nm: f64,
    values: Vec<f64>,
}

impl Field2D {
    pub fn new(width: usize, height: usize, pixel_size_nm: f64, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim(format!("empty field {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(Error::dim(format!(
                "{} values for a {width}x{height} field",
                values.len()
            )));
        }
        if !(pixel_size_nm.is_finite() && pixel_size_nm > 0.0) {
            return Err(Error::param(format!("pixel size {pixel_size_nm} nm")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field value {v}")));
        }
        Ok(Self {
            width,
            height,
            pixel_size_nm,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, pixel_size_nm: f64, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty field");
        Self {
            width,
            height,
            pixel_size_nm,
            values: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize, pixel_size_nm: f64) -> Self {
        Self::filled(width, height, pixel_size_nm, 0.0)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        pixel_size_nm: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        assert!(width > 0 && height > 0, "empty field");
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            pixel_size_nm,
            values,
        }
    }

    /// Builds a field sharing geometry with `self` from raw values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len(), "value count");
        Self {
            width: self.width,
            height: self.height,
            pixel_size_nm: self.pixel_size_nm,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pixel_size_nm(&self) -> f64 {
        self.pixel_size_nm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.height).map(|r| self.get(r, col)).collect()
    }

    pub fn same_shape(&self, other: &Field2D) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &Field2D, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field2D {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field2D, f: impl Fn(f64, f64) -> f64) -> Result<Field2D> {
        self.check_same_shape(other, "zip_map")?;
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn is_constant(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|&v| v == first)
    }

    pub fn transpose(&self) -> Field2D {
        Field2D::from_fn(self.height, self.width, self.pixel_size_nm, |r, c| {
            self.get(c, r)
        })
    }

    /// Integer translation with edge replication. Positive `dx` moves content
    /// right, positive `dy` moves it down.
    pub fn translate(&self, dx: isize, dy: isize) -> Field2D {
        let w = self.width as isize;
        let h = self.height as isize;
        Field2D::from_fn(self.width, self.height, self.pixel_size_nm, |r, c| {
            let sr = (r as isize - dy).clamp(0, h - 1) as usize;
            let sc = (c as isize - dx).clamp(0, w - 1) as usize;
            self.get(sr, sc)
        })
    }
}
