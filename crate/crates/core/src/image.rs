//! Image containers shared by every stage: single-plane intensity frames and
//! Stokes cubes with a per-pixel, per-channel validity mask.
//!
//! Samples are stored in single precision (the on-disk width); arithmetic on
//! them is done in `f64`.

use crate::error::{Error, Result};
use crate::stokes::StokesVector;

/// A single intensity plane, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "frame {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// A `width × height × channels × 4` Stokes cube.
///
/// Data layout is channel-major, then Stokes-component-major, then row-major,
/// which is also the container layout on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Per-channel centre wavelengths in nm; empty for RGB data.
    pub wavelengths: Vec<f32>,
    pub data: Vec<f32>,
    /// `true` where the vector is usable; indexed `(channel, y, x)`.
    pub mask: Vec<bool>,
}

impl StokesImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            wavelengths: Vec::new(),
            data: vec![0.0; width * height * channels * 4],
            mask: vec![true; width * height * channels],
        }
    }

    pub fn with_wavelengths(mut self, wavelengths: Vec<f32>) -> Result<Self> {
        if !wavelengths.is_empty() && wavelengths.len() != self.channels {
            return Err(Error::Dimension(format!(
                "{} wavelengths for {} channels",
                wavelengths.len(),
                self.channels
            )));
        }
        self.wavelengths = wavelengths;
        Ok(self)
    }

    /// Builds a cube by evaluating `f(x, y, channel)` at every site; all sites valid.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> StokesVector,
    ) -> Self {
        let mut img = Self::new(width, height, channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    img.set(x, y, c, f(x, y, c));
                }
            }
        }
        img
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize, k: usize) -> usize {
        ((c * 4 + k) * self.height + y) * self.width + x
    }

    #[inline]
    pub fn mask_index(&self, x: usize, y: usize, c: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> StokesVector {
        let n = self.plane_len();
        let base = c * 4 * n + y * self.width + x;
        StokesVector::new(
            self.data[base] as f64,
            self.data[base + n] as f64,
            self.data[base + 2 * n] as f64,
            self.data[base + 3 * n] as f64,
        )
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, s: StokesVector) {
        let n = self.plane_len();
        let base = c * 4 * n + y * self.width + x;
        self.data[base] = s.s0 as f32;
        self.data[base + n] = s.s1 as f32;
        self.data[base + 2 * n] = s.s2 as f32;
        self.data[base + 3 * n] = s.s3 as f32;
    }

    #[inline]
    pub fn is_valid_at(&self, x: usize, y: usize, c: usize) -> bool {
        self.mask[self.mask_index(x, y, c)]
    }

    pub fn set_valid(&mut self, x: usize, y: usize, c: usize, valid: bool) {
        let i = self.mask_index(x, y, c);
        self.mask[i] = valid;
    }

    /// One Stokes component of one channel as a row-major plane.
    pub fn component(&self, c: usize, k: usize) -> &[f32] {
        let n = self.plane_len();
        let start = (c * 4 + k) * n;
        &self.data[start..start + n]
    }

    pub fn channel_mask(&self, c: usize) -> &[bool] {
        let n = self.plane_len();
        &self.mask[c * n..(c + 1) * n]
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|v| **v).count() as f64 / self.mask.len() as f64
    }

    pub fn same_shape(&self, other: &StokesImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Checks the structural invariants.
    pub fn check(&self) -> Result<()> {
        if self.data.len() != self.width * self.height * self.channels * 4 {
            return Err(Error::Dimension("data length does not match dimensions".into()));
        }
        if self.mask.len() != self.width * self.height * self.channels {
            return Err(Error::Dimension("mask length does not match dimensions".into()));
        }
        if !self.wavelengths.is_empty() && self.wavelengths.len() != self.channels {
            return Err(Error::Dimension("wavelength table length".into()));
        }
        Ok(())
    }

    /// Iterates `(x, y, channel, vector)` over valid sites.
    pub fn valid_vectors(&self) -> impl Iterator<Item = (usize, usize, usize, StokesVector)> + '_ {
        (0..self.channels).flat_map(move |c| {
            (0..self.height).flat_map(move |y| {
                (0..self.width)
                    .filter(move |&x| self.is_valid_at(x, y, c))
                    .map(move |x| (x, y, c, self.get(x, y, c)))
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_channel_then_component_then_row_major() {
        let mut img = StokesImage::new(3, 2, 2);
        img.set(2, 1, 1, StokesVector::new(1.0, 2.0, 3.0, 4.0));
        let n = 6;
        assert_eq!(img.data[(4 + 0) * n + 5], 1.0);
        assert_eq!(img.data[(4 + 3) * n + 5], 4.0);
        assert_eq!(img.component(1, 2)[5], 3.0);
        assert_eq!(img.get(2, 1, 1), StokesVector::new(1.0, 2.0, 3.0, 4.0));
    }

    #[test]
    fn frame_dims_checked() {
        assert!(Frame::from_vec(2, 2, vec![0.0; 3]).is_err());
        let f = Frame::from_fn(3, 2, |x, y| (x + 10 * y) as f32);
        assert_eq!(f.get(2, 1), 12.0);
    }
}
