//! Synthetic ground truth: smooth spectra mixed by a dead-leaves abundance
//! map with one reserved pure pixel per material.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deadleaves::{generate_abundance, GeneratorConfig, ValueMode, ValueSource};
use crate::degradation::{degrade, DegradationSpec};
use crate::endmembers::{reconstruct, EndmemberMatrix};
use crate::error::{Error, Result};
use crate::image::{AbundanceMap, SpectralCube};
use crate::io;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub materials: usize,
    pub scale: u32,
    pub seed: u64,
    /// Blur width of the degradation; defaults to `scale`.
    #[serde(default)]
    pub blur_sigma: Option<f64>,
}

impl PhantomConfig {
    pub fn new(height: usize, width: usize, bands: usize, materials: usize, scale: u32, seed: u64) -> Self {
        PhantomConfig {
            height,
            width,
            bands,
            materials,
            scale,
            seed,
            blur_sigma: None,
        }
    }

    pub fn degradation(&self) -> Result<DegradationSpec> {
        match self.blur_sigma {
            Some(s) => DegradationSpec::with_sigma(self.scale, s),
            None => DegradationSpec::new(self.scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.bands == 0 || self.materials == 0 {
            return Err(Error::InvalidInput("phantom dimensions must be positive".into()));
        }
        if self.scale == 0 {
            return Err(Error::InvalidInput("scale must be positive".into()));
        }
        let s = self.scale as usize;
        if self.height % s != 0 || self.width % s != 0 {
            return Err(Error::InvalidInput(format!(
                "{}x{} is not divisible by scale {s}",
                self.height, self.width
            )));
        }
        if self.materials > self.bands {
            return Err(Error::InvalidInput(format!(
                "{} materials exceed {} bands",
                self.materials, self.bands
            )));
        }
        if self.materials > self.height * self.width {
            return Err(Error::InvalidInput("more materials than pixels".into()));
        }
        self.degradation()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub hsi_hr: SpectralCube,
    pub hsi_lr: SpectralCube,
    pub abundances: AbundanceMap,
    pub endmembers: EndmemberMatrix,
    /// Pixel index of the pure pixel of each material.
    pub pure_pixels: Vec<usize>,
}

/// A sum of two or three Gaussian bumps over band index, rescaled to `[0.05, 1]`.
pub fn smooth_spectrum<R: Rng + ?Sized>(bands: usize, rng: &mut R) -> Vec<f64> {
    let bumps = rng.random_range(2..=3);
    let span = bands.max(2) as f64 - 1.0;
    let params: Vec<(f64, f64, f64)> = (0..bumps)
        .map(|_| {
            (
                rng.random_range(0.0..=span),
                rng.random_range(0.05..0.3) * span.max(1.0),
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let raw: Vec<f64> = (0..bands)
        .map(|l| {
            params
                .iter()
                .map(|&(c, w, a)| a * (-0.5 * ((l as f64 - c) / w).powi(2)).exp())
                .sum()
        })
        .collect();
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return vec![0.5; bands];
    }
    raw.iter().map(|v| 0.05 + 0.95 * (v - lo) / (hi - lo)).collect()
}

/// Reserved pure-pixel positions, spread along the main diagonal.
pub fn reserved_pixels(height: usize, width: usize, materials: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(materials);
    for m in 0..materials {
        let r = (2 * m + 1) * height / (2 * materials);
        let c = (2 * m + 1) * width / (2 * materials);
        let mut p = r * width + c;
        while out.contains(&p) {
            p = (p + 1) % (height * width);
        }
        out.push(p);
    }
    out
}

pub fn generate_phantom(config: &PhantomConfig) -> Result<Phantom> {
    config.validate()?;
    let (h, w, m) = (config.height, config.width, config.materials);

    let mut spec_rng = rng::child(config.seed, 0);
    let endmembers = loop {
        let rows: Vec<Vec<f64>> = (0..m).map(|_| smooth_spectrum(config.bands, &mut spec_rng)).collect();
        match EndmemberMatrix::from_rows(&rows) {
            Ok(e) => break e,
            Err(Error::Singular(_)) => continue,
            Err(e) => return Err(e),
        }
    };

    // leaf sizes need room for at least one 2·scale leaf; tiny phantoms fall back to scale 1
    let mut gen = GeneratorConfig::new(h, w, m, config.scale);
    if gen.validate().is_err() {
        gen.scale_factor = 1;
    }
    gen.value_mode = ValueMode::Dirichlet;
    gen.seed = config.seed;
    let mut abundances = if gen.validate().is_ok() {
        generate_abundance(&gen, &ValueSource::dirichlet(m), &mut rng::child(config.seed, 1))?
    } else {
        AbundanceMap::filled(h, w, m, 1.0 / m as f64)
    };

    let pure_pixels = reserved_pixels(h, w, m);
    for (k, &p) in pure_pixels.iter().enumerate() {
        let px = abundances.pixel_mut(p);
        px.fill(0.0);
        px[k] = 1.0;
    }

    let hsi_hr = reconstruct(&abundances, &endmembers)?;
    let hsi_lr = degrade(&hsi_hr, &config.degradation()?)?;
    Ok(Phantom {
        hsi_hr,
        hsi_lr,
        abundances,
        endmembers,
        pure_pixels,
    })
}

impl Phantom {
    /// Writes `hsi_hr`, `hsi_lr`, `abundances_hr` rasters and `endmembers.csv` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::save_cube(&self.hsi_hr, dir.join("hsi_hr"))?;
        io::save_cube(&self.hsi_lr, dir.join("hsi_lr"))?;
        io::save_abundance(&self.abundances, dir.join("abundances_hr"))?;
        io::save_endmembers(&self.endmembers, dir.join("endmembers.csv"))
    }
}
