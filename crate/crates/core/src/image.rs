//! The radiance image: a W×H×C float grid plus render provenance.

use crate::error::{Error, Result};

/// Provenance of a radiance image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageMeta {
    pub spp: u32,
    pub seed: u64,
    pub theta: Vec<f64>,
    pub depth: u32,
}

/// Row-major (top row first), channel-interleaved radiance values.
///
/// Values are stored as `f64` so analytic forward models keep full precision;
/// renderer output is always rounded to `f32`-representable values, which is
/// what makes the PFM round-trip bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    pub meta: ImageMeta,
}

impl RadianceImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invariant("image dimensions must be ≥ 1".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Invariant(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Invariant(format!(
                "data length {} ≠ {}·{}·{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            let p = i / channels;
            return Err(Error::Invariant(format!(
                "radiance at pixel ({}, {}) is {} (must be finite and ≥ 0)",
                p % width,
                p / width,
                data[i]
            )));
        }
        Ok(RadianceImage {
            width,
            height,
            channels,
            data,
            meta: ImageMeta::default(),
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub(crate) fn from_raw_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        meta: ImageMeta,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        RadianceImage {
            width,
            height,
            channels,
            data,
            meta,
        }
    }

    pub fn with_meta(mut self, meta: ImageMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Maps a flat data index back to (x, y, channel).
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let p = index / self.channels;
        (p % self.width, p / self.width, index % self.channels)
    }

    pub fn sum(&self) -> f64 {
        crate::math::pairwise_sum(&self.data)
    }

    pub fn ensure_same_shape(&self, other: &RadianceImage) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    /// True when every value survives a round trip through `f32` unchanged.
    pub fn is_f32_exact(&self) -> bool {
        self.data.iter().all(|v| (*v as f32) as f64 == *v)
    }

    /// Rounds every value to the nearest `f32`.
    pub fn to_f32_precision(&self) -> RadianceImage {
        let data = self.data.iter().map(|v| (*v as f32) as f64).collect();
        RadianceImage::from_raw_unchecked(
            self.width,
            self.height,
            self.channels,
            data,
            self.meta.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_nan() {
        assert!(RadianceImage::new(1, 1, 1, vec![-1.0]).is_err());
        assert!(RadianceImage::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(RadianceImage::new(2, 1, 3, vec![0.0; 5]).is_err());
        assert!(RadianceImage::new(1, 1, 2, vec![0.0; 2]).is_err());
    }

    #[test]
    fn coords_roundtrip() {
        let img = RadianceImage::filled(4, 3, 3, 1.0).unwrap();
        assert_eq!(img.coords((2 * 4 + 1) * 3 + 2), (1, 2, 2));
    }

    #[test]
    fn f32_exactness() {
        let img = RadianceImage::new(1, 1, 1, vec![0.1]).unwrap();
        assert!(!img.is_f32_exact());
        assert!(img.to_f32_precision().is_f32_exact());
    }
}
