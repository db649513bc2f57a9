//! Reference-vs-reconstruction quality metrics: PSNR, SAM and ERGAS.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::SpectralCube;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Decibels; `+∞` for a perfect match (serialized as `"inf"`).
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: f64,
    /// Mean spectral angle in degrees.
    pub sam_deg: f64,
    pub ergas: f64,
    pub scale: u32,
    /// Pixels left out of SAM because one of the two spectra had zero norm.
    pub sam_excluded_pixels: usize,
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Str(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Db::Str(s) => Err(serde::de::Error::custom(format!("bad psnr {s:?}"))),
    }
}

/// `10·log10(max² / MSE)` over every entry; `+∞` when the cubes are equal.
pub fn psnr(reference: &SpectralCube, test: &SpectralCube, max_value: f64) -> Result<f64> {
    reference.check_same_dims(test, "psnr")?;
    if !(max_value > 0.0) {
        return Err(Error::InvalidInput(format!("max_value must be positive, got {max_value}")));
    }
    let sse: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let mse = sse / reference.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_value * max_value / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamResult {
    pub degrees: f64,
    pub excluded_pixels: usize,
}

/// Mean angle between corresponding pixel spectra, in degrees.
///
/// Pixels where either spectrum is all zero have no defined angle; they are
/// skipped and counted in [`SamResult::excluded_pixels`].
pub fn sam(reference: &SpectralCube, test: &SpectralCube) -> Result<SamResult> {
    reference.check_same_dims(test, "sam")?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for (x, y) in reference.pixel_iter().zip(test.pixel_iter()) {
        let xx: f64 = x.iter().map(|a| a * a).sum();
        let yy: f64 = y.iter().map(|b| b * b).sum();
        if xx == 0.0 || yy == 0.0 {
            continue;
        }
        // 2·atan2(|x̂ − ŷ|, |x̂ + ŷ|) is exact near 0 where acos of the cosine is not
        let (nx, ny) = (xx.sqrt(), yy.sqrt());
        let (mut diff, mut sum) = (0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            let (u, v) = (a / nx, b / ny);
            diff += (u - v) * (u - v);
            sum += (u + v) * (u + v);
        }
        total += 2.0 * diff.sqrt().atan2(sum.sqrt());
        counted += 1;
    }
    let excluded_pixels = reference.pixels() - counted;
    if counted == 0 {
        return Err(Error::InvalidInput("sam: every pixel has a zero-norm spectrum".into()));
    }
    Ok(SamResult {
        degrees: (total / counted as f64).to_degrees(),
        excluded_pixels,
    })
}

/// `100 · (1/scale) · sqrt(mean_l (RMSE_l / μ_l)²)` with `μ_l` the band mean of `test`.
pub fn ergas(reference: &SpectralCube, test: &SpectralCube, scale: u32) -> Result<f64> {
    reference.check_same_dims(test, "ergas")?;
    if scale == 0 {
        return Err(Error::InvalidInput("ergas: scale must be at least 1".into()));
    }
    let bands = reference.bands();
    let mut sq_err = vec![0.0; bands];
    let mut sum = vec![0.0; bands];
    for (x, y) in reference.pixel_iter().zip(test.pixel_iter()) {
        for l in 0..bands {
            sq_err[l] += (x[l] - y[l]) * (x[l] - y[l]);
            sum[l] += y[l];
        }
    }
    let n = reference.pixels() as f64;
    let mut acc = 0.0;
    for l in 0..bands {
        let mu = sum[l] / n;
        if mu == 0.0 {
            return Err(Error::ZeroBandMean { band: l });
        }
        let rmse = (sq_err[l] / n).sqrt();
        acc += (rmse / mu) * (rmse / mu);
    }
    Ok(100.0 / scale as f64 * (acc / bands as f64).sqrt())
}

/// All three metrics with PSNR peak 1.0 (unit-normalized data).
pub fn evaluate(reference: &SpectralCube, test: &SpectralCube, scale: u32) -> Result<MetricReport> {
    let sam = sam(reference, test)?;
    Ok(MetricReport {
        psnr: psnr(reference, test, 1.0)?,
        sam_deg: sam.degrees,
        ergas: ergas(reference, test, scale)?,
        scale,
        sam_excluded_pixels: sam.excluded_pixels,
    })
}
