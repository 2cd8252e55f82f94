use crate::error::{Error, Result};
use crate::field::Field2D;

/// Dense `channels x height x width` array. A scalar is `1 x 1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

pub type Shape = (usize, usize, usize);

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::dim(format!(
                "empty tensor {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::dim(format!(
                "{} values for a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled((channels, height, width), 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let (channels, height, width) = shape;
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled((1, 1, 1), value)
    }

    pub fn from_field(field: &Field2D) -> Self {
        Self {
            channels: 1,
            height: field.height(),
            width: field.width(),
            data: field.values().to_vec(),
        }
    }

    /// Single-channel tensor as a field with the given pixel size.
    pub fn to_field(&self, pixel_size_nm: f64) -> Result<Field2D> {
        if self.channels != 1 {
            return Err(Error::dim(format!(
                "{}-channel tensor is not a field",
                self.channels
            )));
        }
        Field2D::new(self.width, self.height, pixel_size_nm, self.data.clone())
    }

    pub fn shape(&self) -> Shape {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }
}
