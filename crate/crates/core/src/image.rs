//! Grayscale image container.
//!
//! Pixels are `f64` intensities stored row-major with a nominal range of
//! `[0, 255]`. Values outside that range are legal (noisy images are never
//! clipped in memory); clipping happens only when writing files or when a
//! caller asks for it explicitly.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions { height, width });
        }
        if pixels.len() != height * width {
            return Err(Error::BufferSize {
                expected: height * width,
                actual: pixels.len(),
            });
        }
        if let Some(index) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePixel { index });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(height, width, pixels)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    /// Copy with every pixel clamped to `[0, 255]`.
    pub fn clipped(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|v| v.clamp(0.0, 255.0)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch {
                left_h: self.height,
                left_w: self.width,
                right_h: other.height,
                right_w: other.width,
            });
        }
        Ok(())
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), height * width);
        Self {
            height,
            width,
            pixels,
        }
    }
}
