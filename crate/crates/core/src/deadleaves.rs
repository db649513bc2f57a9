//! Dead-leaves synthesis of abundance maps.
//!
//! Rectangles ("leaves") with random size, orientation and position are
//! dropped one after another. A new leaf only paints pixels that no earlier
//! leaf has claimed, i.e. it falls beneath the existing ones, and generation
//! stops once every pixel is covered. Each leaf carries one abundance vector,
//! drawn either from the pixels of a real low-resolution abundance map or from
//! a flat Dirichlet distribution.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DatasetMeta};
use crate::degradation::{degrade, DegradationSpec};
use crate::error::{Error, Result};
use crate::image::AbundanceMap;

/// Leaves placed before generation is declared stuck.
pub const LEAF_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    #[default]
    Empirical,
    Dirichlet,
}

impl FromStr for ValueMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(ValueMode::Empirical),
            "dirichlet" => Ok(ValueMode::Dirichlet),
            other => Err(Error::InvalidInput(format!(
                "unknown value mode {other:?} (expected empirical or dirichlet)"
            ))),
        }
    }
}

impl fmt::Display for ValueMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueMode::Empirical => "empirical",
            ValueMode::Dirichlet => "dirichlet",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub height: usize,
    pub width: usize,
    pub materials: usize,
    pub scale_factor: u32,
    pub value_mode: ValueMode,
    pub seed: u64,
    #[serde(default = "default_noisy_fraction")]
    pub noisy_fraction: f64,
}

fn default_noisy_fraction() -> f64 {
    0.5
}

impl GeneratorConfig {
    pub fn new(height: usize, width: usize, materials: usize, scale_factor: u32) -> Self {
        GeneratorConfig {
            height,
            width,
            materials,
            scale_factor,
            value_mode: ValueMode::Empirical,
            seed: 0,
            noisy_fraction: default_noisy_fraction(),
        }
    }

    /// Closed interval of leaf side lengths.
    pub fn size_range(&self) -> (f64, f64) {
        (
            2.0 * self.scale_factor as f64,
            self.height.min(self.width) as f64 / 3.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.materials == 0 {
            return Err(Error::Config("generator dimensions must be positive".into()));
        }
        if self.scale_factor == 0 {
            return Err(Error::Config("scale factor must be positive".into()));
        }
        let (lo, hi) = self.size_range();
        if hi < lo {
            return Err(Error::Config(format!(
                "leaf size interval [{lo}, {hi}] is empty for {}x{} at scale {}",
                self.height, self.width, self.scale_factor
            )));
        }
        let s = self.scale_factor as usize;
        if self.height % s != 0 || self.width % s != 0 {
            return Err(Error::Config(format!(
                "{}x{} is not divisible by scale {s}",
                self.height, self.width
            )));
        }
        if !(0.0..=1.0).contains(&self.noisy_fraction) {
            return Err(Error::Config(format!(
                "noisy fraction {} outside [0, 1]",
                self.noisy_fraction
            )));
        }
        Ok(())
    }
}

/// One rectangular leaf. `theta` is in degrees, `(x, y)` is the center in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub value: Vec<f64>,
    pub x: f64,
    pub y: f64,
}

impl Leaf {
    /// True when the point lies inside the rotated rectangle (edges included).
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (sin, cos) = self.theta.to_radians().sin_cos();
        let (dx, dy) = (px - self.x, py - self.y);
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        u.abs() <= self.a / 2.0 && v.abs() <= self.b / 2.0
    }

    fn half_extent(&self) -> f64 {
        0.5 * (self.a * self.a + self.b * self.b).sqrt()
    }
}

/// Where leaf abundance vectors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueSource {
    /// Clamped pixel vectors of a real abundance map.
    Empirical(AbundanceMap),
    Dirichlet { materials: usize },
}

impl ValueSource {
    /// Clamps every entry of `source` to `[0, 1]` once, up front.
    pub fn empirical(source: &AbundanceMap) -> Self {
        ValueSource::Empirical(source.map(|v| v.clamp(0.0, 1.0)).expect("clamped values are finite"))
    }

    pub fn dirichlet(materials: usize) -> Self {
        ValueSource::Dirichlet { materials }
    }

    pub fn materials(&self) -> usize {
        match self {
            ValueSource::Empirical(m) => m.materials(),
            ValueSource::Dirichlet { materials } => *materials,
        }
    }

    pub fn mode(&self) -> ValueMode {
        match self {
            ValueSource::Empirical(_) => ValueMode::Empirical,
            ValueSource::Dirichlet { .. } => ValueMode::Dirichlet,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ValueSource::Empirical(m) => value_sampler_empirical(m, rng),
            ValueSource::Dirichlet { materials } => value_sampler_dirichlet(*materials, rng),
        }
    }
}

/// Abundance vector of a uniformly chosen pixel, clamped to `[0, 1]`.
pub fn value_sampler_empirical<R: Rng + ?Sized>(source: &AbundanceMap, rng: &mut R) -> Vec<f64> {
    let p = rng.random_range(0..source.pixels());
    source.pixel(p).iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Uniform draw from the unit simplex, via normalized unit-rate exponentials.
pub fn value_sampler_dirichlet<R: Rng + ?Sized>(materials: usize, rng: &mut R) -> Vec<f64> {
    assert!(materials >= 1);
    if materials == 1 {
        // keep the stream position independent of M
        let _: f64 = Exp1.sample(rng);
        return vec![1.0];
    }
    loop {
        let draws: Vec<f64> = (0..materials).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|e| e / total).collect();
        }
    }
}

pub fn sample_leaf<R: Rng + ?Sized>(config: &GeneratorConfig, source: &ValueSource, rng: &mut R) -> Result<Leaf> {
    let (lo, hi) = config.size_range();
    if hi < lo {
        return Err(Error::Config(format!("leaf size interval [{lo}, {hi}] is empty")));
    }
    let a = rng.random_range(lo..=hi);
    let b = rng.random_range(lo..=hi);
    let theta = rng.random_range(0.0..=45.0);
    let x = rng.random_range(0.0..config.width as f64);
    let y = rng.random_range(0.0..config.height as f64);
    let value = source.sample(rng);
    Ok(Leaf { a, b, theta, value, x, y })
}

/// A partially covered dead-leaves image.
#[derive(Debug, Clone)]
pub struct Canvas {
    map: AbundanceMap,
    covered: Vec<bool>,
    uncovered: usize,
    leaves: usize,
}

impl Canvas {
    pub fn new(height: usize, width: usize, materials: usize) -> Self {
        Canvas {
            map: AbundanceMap::zeros(height, width, materials),
            covered: vec![false; height * width],
            uncovered: height * width,
            leaves: 0,
        }
    }

    /// Paints the still-uncovered pixels whose centers fall inside `leaf`; returns how many.
    pub fn drop_leaf(&mut self, leaf: &Leaf) -> usize {
        let (h, w) = (self.map.height(), self.map.width());
        let ext = leaf.half_extent();
        let r0 = ((leaf.y - ext - 0.5).floor().max(0.0)) as usize;
        let r1 = ((leaf.y + ext - 0.5).ceil().max(0.0) as usize).min(h - 1);
        let c0 = ((leaf.x - ext - 0.5).floor().max(0.0)) as usize;
        let c1 = ((leaf.x + ext - 0.5).ceil().max(0.0) as usize).min(w - 1);
        let mut painted = 0;
        self.leaves += 1;
        if r0 > r1 || c0 > c1 {
            return 0;
        }
        for r in r0..=r1 {
            for c in c0..=c1 {
                let p = r * w + c;
                if self.covered[p] || !leaf.contains(c as f64 + 0.5, r as f64 + 0.5) {
                    continue;
                }
                self.covered[p] = true;
                self.map.pixel_mut(p).copy_from_slice(&leaf.value);
                painted += 1;
            }
        }
        self.uncovered -= painted;
        painted
    }

    pub fn is_complete(&self) -> bool {
        self.uncovered == 0
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn map(&self) -> &AbundanceMap {
        &self.map
    }

    pub fn into_map(self) -> AbundanceMap {
        self.map
    }
}

fn check_source(config: &GeneratorConfig, source: &ValueSource) -> Result<()> {
    config.validate()?;
    if source.materials() != config.materials {
        return Err(Error::Config(format!(
            "value source has {} materials, generator expects {}",
            source.materials(),
            config.materials
        )));
    }
    Ok(())
}

/// Drops at most `max_leaves` leaves, stopping early once the canvas is covered.
pub fn generate_partial<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    source: &ValueSource,
    rng: &mut R,
    max_leaves: usize,
) -> Result<Canvas> {
    check_source(config, source)?;
    let mut canvas = Canvas::new(config.height, config.width, config.materials);
    while !canvas.is_complete() && canvas.leaves() < max_leaves {
        let leaf = sample_leaf(config, source, rng)?;
        canvas.drop_leaf(&leaf);
    }
    Ok(canvas)
}

/// A fully covered high-resolution abundance map.
pub fn generate_abundance<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    source: &ValueSource,
    rng: &mut R,
) -> Result<AbundanceMap> {
    let canvas = generate_partial(config, source, rng, LEAF_CAP)?;
    if !canvas.is_complete() {
        return Err(Error::LeafCap { leaves: canvas.leaves() });
    }
    Ok(canvas.into_map())
}

/// High-resolution map and its degraded low-resolution counterpart.
pub fn generate_pair<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    source: &ValueSource,
    spec: &DegradationSpec,
    rng: &mut R,
) -> Result<(AbundanceMap, AbundanceMap)> {
    if spec.scale != config.scale_factor {
        return Err(Error::Config(format!(
            "degradation scale {} differs from generator scale {}",
            spec.scale, config.scale_factor
        )));
    }
    let hr = generate_abundance(config, source, rng)?;
    let lr = degrade(&hr, spec)?;
    Ok((hr, lr))
}

/// Whether sample `index` is one of the noise-injected ones: the flags are
/// spread evenly so that any prefix of `n` samples holds `⌊n·fraction⌋` of them.
pub fn is_noisy(index: usize, fraction: f64) -> bool {
    ((index + 1) as f64 * fraction).floor() > (index as f64 * fraction).floor()
}

/// Writes `n` pairs under `dir`; sample `i` is drawn from stream `i` of `config.seed`.
pub fn generate_dataset(
    config: &GeneratorConfig,
    source: &ValueSource,
    spec: &DegradationSpec,
    n: usize,
    dir: impl AsRef<Path>,
) -> Result<DatasetMeta> {
    let dir = dir.as_ref();
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    check_source(config, source)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut noisy = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = crate::rng::child(config.seed, i as u64);
        let (hr, lr) = generate_pair(config, source, spec, &mut rng).map_err(|e| e.in_sample(i))?;
        dataset::write_pair(dir, i, &hr, &lr).map_err(|e| e.in_sample(i))?;
        noisy.push(is_noisy(i, config.noisy_fraction));
    }
    let meta = DatasetMeta {
        generator: config.clone(),
        degradation: *spec,
        count: n,
        noisy,
    };
    dataset::write_meta(dir, &meta)?;
    Ok(meta)
}
