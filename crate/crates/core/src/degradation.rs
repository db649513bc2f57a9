//! Sensor point-spread simulation: separable Gaussian blur then bicubic resampling.
//!
//! Both steps are per-axis linear maps with mirror (half-sample symmetric)
//! boundary handling. They are represented as explicit tap tables so that the
//! same operators, and their adjoints, can be reused inside the network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image3, Kind};

/// Keys cubic convolution parameter.
pub const KEYS_A: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub scale: u32,
    pub blur_sigma: f64,
}

impl DegradationSpec {
    /// Blur standard deviation defaults to the scale factor.
    pub fn new(scale: u32) -> Result<Self> {
        Self::with_sigma(scale, scale as f64)
    }

    pub fn with_sigma(scale: u32, blur_sigma: f64) -> Result<Self> {
        let spec = DegradationSpec { scale, blur_sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(Error::Config(format!("scale must be at least 2, got {}", self.scale)));
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::Config(format!("blur sigma must be positive, got {}", self.blur_sigma)));
        }
        Ok(())
    }

    pub fn kernel_radius(&self) -> usize {
        kernel_radius(self.blur_sigma)
    }
}

/// Half-width of the truncated kernel: total support ≈ 6σ.
pub fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Normalized samples of `exp(−t²/2σ²)` for `t ∈ [−⌈3σ⌉, ⌈3σ⌉]`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let r = kernel_radius(sigma) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Keys cubic convolution kernel.
pub fn keys_cubic(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Mirror index: `… 1 0 | 0 1 … n−1 | n−1 n−2 …`.
#[inline]
pub fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// A linear map from a length-`input` signal to a length-`output` signal,
/// stored as the list of (source index, weight) taps of each output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisOperator {
    input: usize,
    taps: Vec<Vec<(usize, f64)>>,
}

impl AxisOperator {
    pub fn convolution(len: usize, kernel: &[f64]) -> Self {
        let r = (kernel.len() / 2) as isize;
        let taps = (0..len as isize)
            .map(|i| {
                kernel
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| (mirror(i + k as isize - r, len), w))
                    .collect()
            })
            .collect();
        AxisOperator { input: len, taps }
    }

    pub fn gaussian(len: usize, sigma: f64) -> Result<Self> {
        Ok(Self::convolution(len, &gaussian_kernel(sigma)?))
    }

    /// Bicubic resampling with half-pixel-center alignment:
    /// output `i` samples the input at `(i + 0.5)·input/output − 0.5`.
    pub fn bicubic(input: usize, output: usize) -> Self {
        let ratio = input as f64 / output as f64;
        let taps = (0..output)
            .map(|i| {
                let u = (i as f64 + 0.5) * ratio - 0.5;
                let base = u.floor();
                let frac = u - base;
                let base = base as isize;
                (-1..=2)
                    .map(|k| (mirror(base + k, input), keys_cubic(frac - k as f64)))
                    .filter(|&(_, w)| w != 0.0)
                    .collect()
            })
            .collect();
        AxisOperator { input, taps }
    }

    pub fn input_len(&self) -> usize {
        self.input
    }

    pub fn output_len(&self) -> usize {
        self.taps.len()
    }

    pub fn taps(&self, i: usize) -> &[(usize, f64)] {
        &self.taps[i]
    }

    pub fn apply(&self, signal: &[f64]) -> Vec<f64> {
        debug_assert_eq!(signal.len(), self.input);
        self.taps
            .iter()
            .map(|t| t.iter().map(|&(j, w)| w * signal[j]).sum())
            .collect()
    }

    pub fn adjoint(&self, signal: &[f64]) -> Vec<f64> {
        debug_assert_eq!(signal.len(), self.output_len());
        let mut out = vec![0.0; self.input];
        for (t, &g) in self.taps.iter().zip(signal) {
            for &(j, w) in t {
                out[j] += w * g;
            }
        }
        out
    }
}

/// Row pass then column pass over 2-D planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable {
    pub vertical: AxisOperator,
    pub horizontal: AxisOperator,
}

impl Separable {
    pub fn bicubic(in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Self {
        Separable {
            vertical: AxisOperator::bicubic(in_h, out_h),
            horizontal: AxisOperator::bicubic(in_w, out_w),
        }
    }

    pub fn gaussian(h: usize, w: usize, sigma: f64) -> Result<Self> {
        let kernel = gaussian_kernel(sigma)?;
        Ok(Separable {
            vertical: AxisOperator::convolution(h, &kernel),
            horizontal: AxisOperator::convolution(w, &kernel),
        })
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.vertical.output_len(), self.horizontal.output_len())
    }

    /// Applies to a row-major `in_h × in_w` plane.
    pub fn apply_plane(&self, plane: &[f64]) -> Vec<f64> {
        let (in_h, in_w) = (self.vertical.input, self.horizontal.input);
        let out_w = self.horizontal.output_len();
        debug_assert_eq!(plane.len(), in_h * in_w);
        let mut tmp = vec![0.0; in_h * out_w];
        for r in 0..in_h {
            let src = &plane[r * in_w..(r + 1) * in_w];
            let dst = &mut tmp[r * out_w..(r + 1) * out_w];
            for (d, t) in dst.iter_mut().zip(&self.horizontal.taps) {
                *d = t.iter().map(|&(j, w)| w * src[j]).sum();
            }
        }
        let out_h = self.vertical.output_len();
        let mut out = vec![0.0; out_h * out_w];
        for (i, t) in self.vertical.taps.iter().enumerate() {
            let dst = &mut out[i * out_w..(i + 1) * out_w];
            for &(j, w) in t {
                let src = &tmp[j * out_w..(j + 1) * out_w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// Transpose of [`Separable::apply_plane`].
    pub fn adjoint_plane(&self, plane: &[f64]) -> Vec<f64> {
        let (in_h, in_w) = (self.vertical.input, self.horizontal.input);
        let (out_h, out_w) = self.output_dims();
        debug_assert_eq!(plane.len(), out_h * out_w);
        let mut tmp = vec![0.0; in_h * out_w];
        for (i, t) in self.vertical.taps.iter().enumerate() {
            let src = &plane[i * out_w..(i + 1) * out_w];
            for &(j, w) in t {
                let dst = &mut tmp[j * out_w..(j + 1) * out_w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        let mut out = vec![0.0; in_h * in_w];
        for r in 0..in_h {
            let src = &tmp[r * out_w..(r + 1) * out_w];
            let dst = &mut out[r * in_w..(r + 1) * in_w];
            for (t, &g) in self.horizontal.taps.iter().zip(src) {
                for &(j, w) in t {
                    dst[j] += w * g;
                }
            }
        }
        out
    }

    pub fn apply_image<K: Kind>(&self, img: &Image3<K>) -> Image3<K> {
        assert_eq!(
            (img.height(), img.width()),
            (self.vertical.input, self.horizontal.input),
            "operator/image size mismatch"
        );
        let (out_h, out_w) = self.output_dims();
        let mut out = Image3::zeros(out_h, out_w, img.channels());
        for k in 0..img.channels() {
            out.set_plane(k, &self.apply_plane(&img.plane(k)));
        }
        out
    }
}

/// Separable Gaussian blur of every channel, mirror boundaries.
pub fn blur<K: Kind>(img: &Image3<K>, sigma: f64) -> Result<Image3<K>> {
    Ok(Separable::gaussian(img.height(), img.width(), sigma)?.apply_image(img))
}

/// Keys bicubic resampling (a = −0.5) of every channel to `out_height × out_width`.
pub fn bicubic_resample<K: Kind>(img: &Image3<K>, out_height: usize, out_width: usize) -> Result<Image3<K>> {
    if out_height == 0 || out_width == 0 {
        return Err(Error::InvalidInput("output dimensions must be positive".into()));
    }
    Ok(Separable::bicubic(img.height(), img.width(), out_height, out_width).apply_image(img))
}

pub fn upsample<K: Kind>(img: &Image3<K>, scale: u32) -> Result<Image3<K>> {
    let s = scale as usize;
    bicubic_resample(img, img.height() * s, img.width() * s)
}

/// Blur with `spec.blur_sigma`, then bicubic downsample by `spec.scale`.
pub fn degrade<K: Kind>(hr: &Image3<K>, spec: &DegradationSpec) -> Result<Image3<K>> {
    spec.validate()?;
    let s = spec.scale as usize;
    if hr.height() % s != 0 || hr.width() % s != 0 {
        return Err(Error::InvalidInput(format!(
            "{}x{} is not divisible by scale {s}",
            hr.height(),
            hr.width()
        )));
    }
    let blurred = blur(hr, spec.blur_sigma)?;
    bicubic_resample(&blurred, hr.height() / s, hr.width() / s)
}
