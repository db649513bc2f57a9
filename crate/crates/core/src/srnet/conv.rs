//! 3×3 stride-1 cross-correlation with one pixel of mirror padding.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor4;
use crate::degradation::mirror;
use crate::error::{Error, Result};

pub const K: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub out_channels: usize,
    pub in_channels: usize,
    /// `out × in × 3 × 3`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients of one convolution.
pub struct ConvGrads {
    pub input: Option<Tensor4>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

fn pad(plane: &[f64], h: usize, w: usize, out: &mut [f64]) {
    let pw = w + 2;
    for py in 0..h + 2 {
        let sy = mirror(py as isize - 1, h);
        let row = &plane[sy * w..(sy + 1) * w];
        let dst = &mut out[py * pw..(py + 1) * pw];
        dst[0] = row[mirror(-1, w)];
        dst[1..=w].copy_from_slice(row);
        dst[w + 1] = row[mirror(w as isize, w)];
    }
}

/// Adds the gradient of a padded plane back onto its source pixels.
fn unpad_accumulate(padded: &[f64], h: usize, w: usize, out: &mut [f64]) {
    let pw = w + 2;
    for py in 0..h + 2 {
        let sy = mirror(py as isize - 1, h);
        for px in 0..pw {
            let sx = mirror(px as isize - 1, w);
            out[sy * w + sx] += padded[py * pw + px];
        }
    }
}

impl Conv2d {
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Conv2d {
            out_channels,
            in_channels,
            weight: vec![0.0; out_channels * in_channels * K * K],
            bias: vec![0.0; out_channels],
        }
    }

    /// Kernel entries `~ 𝒩(0, 2/fan_in)`, zero bias.
    pub fn he_normal<R: Rng + ?Sized>(out_channels: usize, in_channels: usize, rng: &mut R) -> Self {
        let std = (2.0 / (in_channels * K * K) as f64).sqrt();
        let mut c = Self::zeros(out_channels, in_channels);
        for w in c.weight.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = std * z;
        }
        c
    }

    fn check_input(&self, input: &Tensor4) -> Result<()> {
        if input.c != self.in_channels {
            return Err(Error::InvalidInput(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels, input.c
            )));
        }
        Ok(())
    }

    /// `(h·w) × (in·9)` patch matrix of sample `n`; column `(i, ky, kx)` holds
    /// the padded input shifted by `(ky, kx)`.
    fn im2col(&self, input: &Tensor4, n: usize) -> DMatrix<f64> {
        let (h, w) = (input.h, input.w);
        let pw = w + 2;
        let mut buf = vec![0.0; (h + 2) * pw];
        let mut cols = DMatrix::zeros(h * w, self.in_channels * K * K);
        for i in 0..self.in_channels {
            pad(input.plane(n, i), h, w, &mut buf);
            for ky in 0..K {
                for kx in 0..K {
                    let mut col = cols.column_mut((i * K + ky) * K + kx);
                    let dst = col.as_mut_slice();
                    for y in 0..h {
                        let s = (y + ky) * pw + kx;
                        dst[y * w..(y + 1) * w].copy_from_slice(&buf[s..s + w]);
                    }
                }
            }
        }
        cols
    }

    /// Weights as an `(in·9) × out` matrix; the storage order already matches.
    fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.in_channels * K * K, self.out_channels, &self.weight)
    }

    pub fn forward(&self, input: &Tensor4) -> Result<Tensor4> {
        self.check_input(input)?;
        let (h, w) = (input.h, input.w);
        let wm = self.weight_matrix();
        let mut out = Tensor4::zeros(input.n, self.out_channels, h, w);
        for n in 0..input.n {
            let y = self.im2col(input, n) * &wm;
            for o in 0..self.out_channels {
                let b = self.bias[o];
                for (d, v) in out.plane_mut(n, o).iter_mut().zip(y.column(o).iter()) {
                    *d = v + b;
                }
            }
        }
        Ok(out)
    }

    /// Gradients of a scalar loss given its gradient `grad_out` w.r.t. this layer's output.
    pub fn backward(&self, input: &Tensor4, grad_out: &Tensor4, need_input: bool) -> Result<ConvGrads> {
        self.check_input(input)?;
        if grad_out.shape() != [input.n, self.out_channels, input.h, input.w] {
            return Err(Error::InvalidInput("convolution gradient has the wrong shape".into()));
        }
        let (h, w) = (input.h, input.w);
        let pw = w + 2;
        let wm = self.weight_matrix();
        let mut gw = DMatrix::zeros(self.in_channels * K * K, self.out_channels);
        let mut gb = vec![0.0; self.out_channels];
        let mut g_in = need_input.then(|| Tensor4::zeros(input.n, input.c, h, w));
        let mut g_pad = vec![0.0; (h + 2) * pw];

        for n in 0..input.n {
            let plane = h * w;
            let start = n * self.out_channels * plane;
            let go = DMatrix::from_column_slice(plane, self.out_channels, &grad_out.data[start..start + self.out_channels * plane]);
            for (o, g) in gb.iter_mut().enumerate() {
                *g += go.column(o).sum();
            }
            let cols = self.im2col(input, n);
            gw += cols.tr_mul(&go);
            if let Some(g_in) = g_in.as_mut() {
                let g_cols = &go * wm.transpose();
                for i in 0..self.in_channels {
                    g_pad.fill(0.0);
                    for ky in 0..K {
                        for kx in 0..K {
                            let col = g_cols.column((i * K + ky) * K + kx);
                            let src = col.as_slice();
                            for y in 0..h {
                                let d = &mut g_pad[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                                for (dv, sv) in d.iter_mut().zip(&src[y * w..(y + 1) * w]) {
                                    *dv += sv;
                                }
                            }
                        }
                    }
                    unpad_accumulate(&g_pad, h, w, g_in.plane_mut(n, i));
                }
            }
        }
        Ok(ConvGrads {
            input: g_in,
            weight: gw.as_slice().to_vec(),
            bias: gb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor4 {
        let mut rng = crate::rng::seeded(seed);
        let len = shape.iter().product();
        Tensor4::from_vec(shape[0], shape[1], shape[2], shape[3], (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let x = random_tensor([2, 3, 5, 4], 1);
        let mut conv = Conv2d::zeros(3, 3);
        for c in 0..3 {
            conv.weight[(c * 3 + c) * 9 + 4] = 1.0;
        }
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let x = Tensor4::from_vec(1, 1, 4, 6, vec![0.7; 24]).unwrap();
        let mut conv = Conv2d::zeros(1, 1);
        conv.weight.fill(1.0);
        conv.bias[0] = 0.25;
        let y = conv.forward(&x).unwrap();
        assert!(y.data.iter().all(|v| (v - (9.0 * 0.7 + 0.25)).abs() < 1e-14));
    }

    #[test]
    fn single_pixel_extent_uses_mirror() {
        let x = Tensor4::from_vec(1, 1, 1, 1, vec![2.0]).unwrap();
        let mut conv = Conv2d::zeros(1, 1);
        conv.weight.fill(1.0);
        assert_eq!(conv.forward(&x).unwrap().data, vec![18.0]);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let conv = Conv2d::zeros(2, 3);
        assert!(conv.forward(&Tensor4::zeros(1, 2, 3, 3)).is_err());
    }
}
