//! Training-time noise in abundance space.
//!
//! Gaussian spectral noise `N` on a cube maps to the abundance perturbation
//! `N·S⁺` under least-squares unmixing, so synthetic low-resolution
//! abundances are corrupted with exactly that correlated noise. The spectral
//! standard deviation is drawn as `σ_max − Exp(λ)`, rejected until positive.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Pair;
use crate::error::{Error, Result};
use crate::image::AbundanceMap;

/// Unit-range data quantized near 10 bits: a PSNR of 60 dB.
pub const DEFAULT_SIGMA_MAX: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// No sample is corrupted.
    Clean,
    /// Every sample is corrupted and the σ channel carries its level.
    Noisy,
    /// Flagged samples are corrupted; the σ channel stays zero.
    HalfMix,
    /// Flagged samples are corrupted and the σ channel carries their level.
    #[default]
    StdAware,
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clean" => Ok(NoiseMode::Clean),
            "noisy" => Ok(NoiseMode::Noisy),
            "halfmix" => Ok(NoiseMode::HalfMix),
            "stdaware" => Ok(NoiseMode::StdAware),
            _ => Err(Error::InvalidInput(format!(
                "unknown noise mode {s:?} (expected clean, noisy, halfmix or stdaware)"
            ))),
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::Clean => "clean",
            NoiseMode::Noisy => "noisy",
            NoiseMode::HalfMix => "halfmix",
            NoiseMode::StdAware => "stdaware",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub sigma_max: f64,
    pub lambda: f64,
    pub mode: NoiseMode,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_max: DEFAULT_SIGMA_MAX,
            lambda: 2.0 / DEFAULT_SIGMA_MAX,
            mode: NoiseMode::StdAware,
        }
    }
}

impl NoiseConfig {
    pub fn with_mode(mode: NoiseMode) -> Self {
        NoiseConfig {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_max > 0.0 && self.sigma_max.is_finite()) {
            return Err(Error::Config(format!("sigma_max must be positive, got {}", self.sigma_max)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Probability that one exponential draw yields a positive σ.
    pub fn acceptance(&self) -> f64 {
        -(-self.lambda * self.sigma_max).exp_m1()
    }
}

/// `σ = σ_max − e`, `e ~ Exp(λ)`, redrawn until `σ > 0`.
pub fn sample_sigma<R: Rng + ?Sized>(config: &NoiseConfig, rng: &mut R) -> Result<f64> {
    config.validate()?;
    if config.acceptance() < 1e-6 {
        return Err(Error::Config(format!(
            "sigma rejection sampler accepts with probability {:e}; raise lambda or sigma_max",
            config.acceptance()
        )));
    }
    loop {
        let e: f64 = Exp1.sample(rng);
        let e = e / config.lambda;
        if e < config.sigma_max {
            return Ok(config.sigma_max - e);
        }
    }
}

/// Per pixel, `N_A(·,m) = Σ_l N(·,l)·S⁺(l,m)` with `N` i.i.d. `𝒩(0, σ²)` over the `L` bands.
pub fn abundance_noise<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    sigma: f64,
    pinv: &DMatrix<f64>,
    rng: &mut R,
) -> Result<AbundanceMap> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be nonnegative, got {sigma}")));
    }
    let (bands, materials) = pinv.shape();
    let mut spectral = vec![0.0; bands];
    let mut out = Vec::with_capacity(height * width * materials);
    for _ in 0..height * width {
        for n in spectral.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *n = sigma * z;
        }
        for m in 0..materials {
            out.push(spectral.iter().enumerate().map(|(l, n)| n * pinv[(l, m)]).sum());
        }
    }
    AbundanceMap::new(height, width, materials, out)
}

/// Appends a constant σ channel: `M` abundance channels become `M + 1` input channels.
pub fn build_input_stack(a_lr: &AbundanceMap, sigma: f64) -> Result<AbundanceMap> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be nonnegative, got {sigma}")));
    }
    let m = a_lr.materials();
    let mut data = Vec::with_capacity(a_lr.pixels() * (m + 1));
    for px in a_lr.pixel_iter() {
        data.extend_from_slice(px);
        data.push(sigma);
    }
    AbundanceMap::new(a_lr.height(), a_lr.width(), m + 1, data)
}

/// Network input and target for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: AbundanceMap,
    pub target: AbundanceMap,
    /// Spectral σ actually injected (0 for clean samples).
    pub sigma: f64,
}

pub fn prepare_training_sample<R: Rng + ?Sized>(
    pair: &Pair,
    flag_noisy: bool,
    config: &NoiseConfig,
    pinv: &DMatrix<f64>,
    rng: &mut R,
) -> Result<TrainingSample> {
    let (corrupt, expose_sigma) = match config.mode {
        NoiseMode::Clean => (false, false),
        NoiseMode::Noisy => (true, true),
        NoiseMode::HalfMix => (flag_noisy, false),
        NoiseMode::StdAware => (flag_noisy, true),
    };
    if corrupt && pinv.ncols() != pair.lr.materials() {
        return Err(Error::InvalidInput(format!(
            "pseudo-inverse has {} materials, sample {}",
            pinv.ncols(),
            pair.lr.materials()
        )));
    }
    let (lr, sigma) = if corrupt {
        let sigma = sample_sigma(config, rng)?;
        let n = abundance_noise(pair.lr.height(), pair.lr.width(), sigma, pinv, rng)?;
        (pair.lr.axpby(1.0, &n, 1.0)?, sigma)
    } else {
        (pair.lr.clone(), 0.0)
    };
    let input = build_input_stack(&lr, if expose_sigma { sigma } else { 0.0 })?;
    Ok(TrainingSample {
        input,
        target: pair.hr.clone(),
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endmembers::{reconstruct, EndmemberMatrix};

    fn endmembers(seed: u64, m: usize, l: usize) -> EndmemberMatrix {
        let mut rng = crate::rng::seeded(seed);
        EndmemberMatrix::new(DMatrix::from_fn(m, l, |_, _| rng.random_range(0.05..1.0))).unwrap()
    }

    #[test]
    fn sigma_in_range_and_limit() {
        let cfg = NoiseConfig::default();
        let mut rng = crate::rng::seeded(1);
        for _ in 0..10_000 {
            let s = sample_sigma(&cfg, &mut rng).unwrap();
            assert!(s > 0.0 && s <= cfg.sigma_max);
        }
        let sharp = NoiseConfig { lambda: 1e9, ..cfg };
        let mean = (0..1000).map(|_| sample_sigma(&sharp, &mut rng).unwrap()).sum::<f64>() / 1000.0;
        assert!((mean - cfg.sigma_max).abs() < 1e-6);
    }

    #[test]
    fn degenerate_rejection_is_config_error() {
        let cfg = NoiseConfig { sigma_max: 1e-3, lambda: 1e-6, mode: NoiseMode::Noisy };
        assert!(matches!(sample_sigma(&cfg, &mut crate::rng::seeded(0)), Err(Error::Config(_))));
        assert!(NoiseConfig { lambda: -1.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn zero_sigma_gives_zero_noise() {
        let e = endmembers(2, 3, 8);
        let n = abundance_noise(4, 4, 0.0, e.pinv(), &mut crate::rng::seeded(2)).unwrap();
        assert!(n.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn abundance_noise_reconstructs_to_projected_noise() {
        // reconstruct(A + N·S⁺) = reconstruct(A) + N·S⁺·S, using the same spectral draw
        let e = endmembers(3, 3, 8);
        let sigma = 0.01;
        let na = abundance_noise(3, 3, sigma, e.pinv(), &mut crate::rng::seeded(4)).unwrap();
        let mut rng = crate::rng::seeded(4);
        let spectral = AbundanceMap::from_fn(3, 3, 8, |_, _, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .unwrap();
        let a = AbundanceMap::filled(3, 3, 3, 0.3);
        let lhs = reconstruct(&a.axpby(1.0, &na, 1.0).unwrap(), &e).unwrap();
        let proj = e.pinv() * e.spectra();
        let base = reconstruct(&a, &e).unwrap();
        for p in 0..9 {
            for l in 0..8 {
                let extra: f64 = (0..8).map(|k| spectral.pixel(p)[k] * proj[(k, l)]).sum();
                assert!((lhs.pixel(p)[l] - base.pixel(p)[l] - extra).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_stack_layout() {
        let a = AbundanceMap::from_fn(3, 2, 2, |r, c, k| (r + c + k) as f64).unwrap();
        let s0 = build_input_stack(&a, 0.0).unwrap();
        assert_eq!(s0.channels(), 3);
        assert!(s0.plane(2).iter().all(|&v| v == 0.0));
        let s = build_input_stack(&a, 0.25).unwrap();
        assert!(s.plane(2).iter().all(|&v| v == 0.25));
        assert_eq!(s.select_channels(0..2).unwrap(), a);
    }

    fn pair() -> Pair {
        let lr = AbundanceMap::from_fn(64, 64, 3, |r, c, k| ((r * 7 + c * 3 + k) % 10) as f64 / 10.0).unwrap();
        Pair { hr: AbundanceMap::filled(128, 128, 3, 0.5), lr }
    }

    #[test]
    fn modes_route_noise() {
        let e = endmembers(5, 3, 10);
        let p = pair();
        for (mode, flag, corrupted, exposed) in [
            (NoiseMode::Clean, true, false, false),
            (NoiseMode::Clean, false, false, false),
            (NoiseMode::Noisy, false, true, true),
            (NoiseMode::HalfMix, true, true, false),
            (NoiseMode::HalfMix, false, false, false),
            (NoiseMode::StdAware, false, false, false),
            (NoiseMode::StdAware, true, true, true),
        ] {
            let cfg = NoiseConfig::with_mode(mode);
            let s = prepare_training_sample(&p, flag, &cfg, e.pinv(), &mut crate::rng::seeded(6)).unwrap();
            assert_eq!(s.target, p.hr, "{mode}");
            let abund = s.input.select_channels(0..3).unwrap();
            assert_eq!(abund != p.lr, corrupted, "{mode} {flag}");
            let sig = s.input.plane(3);
            if exposed {
                assert!(s.sigma > 0.0);
                assert!(sig.iter().all(|&v| v == s.sigma));
            } else {
                assert!(sig.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn prepare_is_deterministic() {
        let e = endmembers(7, 3, 10);
        let cfg = NoiseConfig::default();
        let a = prepare_training_sample(&pair(), true, &cfg, e.pinv(), &mut crate::rng::seeded(8)).unwrap();
        let b = prepare_training_sample(&pair(), true, &cfg, e.pinv(), &mut crate::rng::seeded(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stdaware_noise_has_projected_scale() {
        let e = endmembers(9, 3, 10);
        let cfg = NoiseConfig::with_mode(NoiseMode::StdAware);
        let p = pair();
        let s = prepare_training_sample(&p, true, &cfg, e.pinv(), &mut crate::rng::seeded(10)).unwrap();
        let diff = s.input.axpby(1.0, &build_input_stack(&p.lr, s.sigma).unwrap(), -1.0).unwrap();
        assert!(diff.plane(3).iter().all(|&v| v == 0.0));
        for m in 0..3 {
            let plane = diff.plane(m);
            let n = plane.len() as f64;
            let std = (plane.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            let expected = s.sigma * e.pinv().column(m).norm();
            assert!((std / expected - 1.0).abs() < 0.05, "{std} vs {expected}");
        }
    }

    #[test]
    fn mode_parse() {
        assert_eq!("StdAware".parse::<NoiseMode>().unwrap(), NoiseMode::StdAware);
        assert_eq!("halfmix".parse::<NoiseMode>().unwrap(), NoiseMode::HalfMix);
        assert!("loud".parse::<NoiseMode>().is_err());
        assert_eq!(
            serde_json::to_string(&NoiseMode::HalfMix).unwrap(),
            "\"halfmix\""
        );
    }
}
