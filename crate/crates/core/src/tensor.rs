//! Planar image and feature tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Height, width and channel count of an image-like grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane_len(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// An `h × w × c` grid of real pixel values, `c ∈ {1, 3}`.
///
/// Values are stored channel-planar (all of channel 0, then channel 1, ...),
/// each plane row-major. Loaded and manipulated images live in `[-1, 1]`;
/// sums such as `x + G(x)` may leave that range and are never clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(height, width, channels);
        check_image_shape(shape)?;
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} values supplied for a {shape} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite pixel value {} at index {i}",
                data[i]
            )));
        }
        Ok(ImageTensor { shape, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    /// Builds an image from `f(y, x, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    /// Wraps planar data whose finiteness the caller already guarantees.
    pub(crate) fn from_parts_unchecked(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        ImageTensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.shape.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.shape.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Applies `f` to every value and re-validates finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::new(self.height(), self.width(), self.channels(), data)
    }

    pub fn in_pixel_range(&self) -> bool {
        self.data.iter().all(|v| (-1.0..=1.0).contains(v))
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

pub(crate) fn check_image_shape(shape: Shape) -> Result<()> {
    if shape.height == 0 || shape.width == 0 {
        return Err(Error::Shape(format!("image must be non-empty, got {shape}")));
    }
    if shape.channels != 1 && shape.channels != 3 {
        return Err(Error::Shape(format!(
            "image must have 1 or 3 channels, got {}",
            shape.channels
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same_shape(a: Shape, b: Shape, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Additive perturbation `G(x)`: image-shaped, unbounded range.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationMap(ImageTensor);

impl PerturbationMap {
    pub fn new(image: ImageTensor) -> Self {
        PerturbationMap(image)
    }

    pub fn as_image(&self) -> &ImageTensor {
        &self.0
    }

    pub fn into_image(self) -> ImageTensor {
        self.0
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    /// Mean squared value per element.
    pub fn mean_square(&self) -> f64 {
        self.0.sum_squares() / self.0.data().len() as f64
    }
}

/// A channel-planar feature map with an arbitrary channel count, used inside
/// the networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor3 {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor size mismatch");
        Tensor3 {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

impl From<ImageTensor> for Tensor3 {
    fn from(image: ImageTensor) -> Self {
        let s = image.shape();
        Tensor3::from_data(s.channels, s.height, s.width, image.into_data())
    }
}

impl From<&ImageTensor> for Tensor3 {
    fn from(image: &ImageTensor) -> Self {
        let s = image.shape();
        Tensor3::from_data(s.channels, s.height, s.width, image.data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(ImageTensor::zeros(0, 4, 1), Err(Error::Shape(_))));
        assert!(matches!(ImageTensor::zeros(4, 4, 2), Err(Error::Shape(_))));
        assert!(matches!(
            ImageTensor::new(1, 2, 1, vec![0.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            ImageTensor::new(2, 2, 1, vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn planar_indexing() {
        let img = ImageTensor::from_fn(2, 3, 3, |y, x, c| (100 * c + 10 * y + x) as f64).unwrap();
        assert_eq!(img.get(1, 2, 2), 212.0);
        assert_eq!(img.plane(1)[4], 111.0);
    }
}
