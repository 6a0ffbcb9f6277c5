//! Planar double-precision image containers.

use crate::error::{check_geometry, Error, Result};
use serde::{Deserialize, Serialize};

/// A single row-major plane of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::BufferLength {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_geometry(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let n = self.data.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Plane) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Color state of an [`RgbImage`]. Transitions only happen through the
/// conversion functions in [`crate::color_space`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorState {
    CameraLinear,
    Xyz,
    LinearSrgb,
    EncodedSrgb,
}

/// Three planar channels sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    channels: [Plane; 3],
    state: ColorState,
}

impl RgbImage {
    pub fn new(channels: [Plane; 3], state: ColorState) -> Result<Self> {
        check_geometry(channels[0].dims(), channels[1].dims())?;
        check_geometry(channels[0].dims(), channels[2].dims())?;
        Ok(Self { channels, state })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3], state: ColorState) -> Self {
        Self {
            channels: rgb.map(|v| Plane::filled(width, height, v)),
            state,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        state: ColorState,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        let mut planes = [
            Plane::zeros(width, height),
            Plane::zeros(width, height),
            Plane::zeros(width, height),
        ];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    planes[c].set(x, y, px[c]);
                }
            }
        }
        Self {
            channels: planes,
            state,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.channels[0].len()
    }

    #[inline]
    pub fn state(&self) -> ColorState {
        self.state
    }

    pub(crate) fn with_state(mut self, state: ColorState) -> Self {
        self.state = state;
        self
    }

    pub(crate) fn require(&self, expected: ColorState) -> Result<()> {
        if self.state != expected {
            return Err(Error::ColorState {
                expected,
                actual: self.state,
            });
        }
        Ok(())
    }

    pub fn channels(&self) -> &[Plane; 3] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &Plane {
        &self.channels[c]
    }

    pub fn into_channels(self) -> [Plane; 3] {
        self.channels
    }

    /// Pixel by linear (row-major) index.
    #[inline]
    pub fn pixel(&self, i: usize) -> [f64; 3] {
        [
            self.channels[0].as_slice()[i],
            self.channels[1].as_slice()[i],
            self.channels[2].as_slice()[i],
        ]
    }

    pub fn mean(&self) -> f64 {
        self.channels.iter().map(Plane::mean).sum::<f64>() / 3.0
    }

    /// Per-pixel mean over the three channels.
    pub fn channel_mean(&self) -> Plane {
        let (w, h) = self.dims();
        let data = (0..self.pixel_count())
            .map(|i| {
                let p = self.pixel(i);
                (p[0] + p[1] + p[2]) / 3.0
            })
            .collect();
        Plane {
            width: w,
            height: h,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            channels: [
                self.channels[0].map(&f),
                self.channels[1].map(&f),
                self.channels[2].map(&f),
            ],
            state: self.state,
        }
    }

    pub fn max_abs_diff(&self, other: &RgbImage) -> f64 {
        (0..3)
            .map(|c| self.channels[c].max_abs_diff(&other.channels[c]))
            .fold(0.0, f64::max)
    }
}
