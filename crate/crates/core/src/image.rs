//! Three-axis raster containers stored band-interleaved-by-pixel.

use std::fmt;
use std::marker::PhantomData;

use crate::error::{Error, Result};

/// Marker for what the third axis of an [`Image3`] holds.
pub trait Kind: Clone + fmt::Debug + PartialEq + Send + Sync + 'static {
    /// Header key naming the third axis in the on-disk format.
    const AXIS: &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Abundance;

impl Kind for Spectral {
    const AXIS: &'static str = "bands";
}

impl Kind for Abundance {
    const AXIS: &'static str = "channels";
}

/// `height × width × channels` finite real values, innermost index = channel.
#[derive(Clone, PartialEq)]
pub struct Image3<K: Kind> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    _kind: PhantomData<K>,
}

/// Hyperspectral cube: the third axis is the spectral band.
pub type SpectralCube = Image3<Spectral>;

/// Per-pixel material proportions: the third axis is the material.
pub type AbundanceMap = Image3<Abundance>;

impl<K: Kind> fmt::Debug for Image3<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Image3")
            .field("kind", &K::AXIS)
            .field("height", &self.height)
            .field("width", &self.width)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl<K: Kind> Image3<K> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidInput(format!(
                "dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "{height}x{width}x{channels} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
        }
        Ok(Image3 {
            height,
            width,
            channels,
            data,
            _kind: PhantomData,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty image");
        assert!(value.is_finite());
        Image3 {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
            _kind: PhantomData,
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw values. Callers must keep them finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    /// Channel vector of pixel `p` in row-major pixel order.
    #[inline]
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, p: usize) -> &mut [f64] {
        let c = self.channels;
        &mut self.data[p * c..(p + 1) * c]
    }

    pub fn pixel_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    /// Copies one channel out as a row-major `height × width` plane.
    pub fn plane(&self, channel: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn set_plane(&mut self, channel: usize, plane: &[f64]) {
        assert_eq!(plane.len(), self.pixels());
        for (p, &v) in plane.iter().enumerate() {
            self.data[p * self.channels + channel] = v;
        }
    }

    pub fn same_dims<J: Kind>(&self, other: &Image3<J>) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_same_dims<J: Kind>(&self, other: &Image3<J>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what}: dimension mismatch {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    /// Elementwise map, keeping dimensions.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// `alpha·self + beta·other`.
    pub fn axpby(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.check_same_dims(other, "linear combination")?;
        Self::new(
            self.height,
            self.width,
            self.channels,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        )
    }

    /// Reinterprets the third axis under a different kind.
    pub fn retag<J: Kind>(self) -> Image3<J> {
        Image3 {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data,
            _kind: PhantomData,
        }
    }

    /// Keeps channels `range` of every pixel.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > self.channels {
            return Err(Error::InvalidInput(format!(
                "channel range {range:?} outside 0..{}",
                self.channels
            )));
        }
        let data = self
            .pixel_iter()
            .flat_map(|px| px[range.clone()].iter().copied())
            .collect();
        Self::new(self.height, self.width, range.len(), data)
    }

    /// Spatial crop starting at (`row`, `col`).
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::InvalidInput(format!(
                "crop {height}x{width}@({row},{col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for r in row..row + height {
            let start = self.index(r, col, 0);
            data.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Self::new(height, width, self.channels, data)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

impl Image3<Spectral> {
    pub fn bands(&self) -> usize {
        self.channels
    }
}

impl Image3<Abundance> {
    pub fn materials(&self) -> usize {
        self.channels
    }
}
