//! Linear unmixing `X = A·S + N`.
//!
//! Endmembers come from a successive nonnegative-projection greedy search
//! (every selected endmember is an actual pixel spectrum); abundances are the
//! unconstrained least-squares solution `A = X·S⁺`, which keeps additive
//! spectral noise an exact linear perturbation `N·S⁺` of the abundances.
//! A PCA decomposition is provided as a baseline.

mod nnls;
mod pca;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use nnls::nnls_normal;
pub use pca::{decompose_pca, PcaDecomposition};

use crate::endmembers::{reconstruct, EndmemberMatrix};
use crate::error::{Error, Result};
use crate::image::{AbundanceMap, SpectralCube};

pub const DEFAULT_MATERIALS: usize = 6;

/// Index of each selected pixel (row-major) alongside the endmember matrix.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub endmembers: EndmemberMatrix,
    pub pixel_indices: Vec<usize>,
}

/// Greedy endmember extraction.
///
/// Starting from an empty set, each round projects every pixel spectrum onto
/// the cone of the spectra chosen so far (nonnegative least squares) and
/// selects the pixel with the largest residual norm. Ties go to the lowest
/// row-major pixel index.
pub fn extract_endmembers_minvol(cube: &SpectralCube, materials: usize) -> Result<EndmemberMatrix> {
    extract_endmembers_detailed(cube, materials).map(|e| e.endmembers)
}

pub fn extract_endmembers_detailed(cube: &SpectralCube, materials: usize) -> Result<Extraction> {
    let bands = cube.bands();
    if materials == 0 {
        return Err(Error::InvalidInput("number of endmembers must be at least 1".into()));
    }
    if materials > bands || materials > cube.pixels() {
        return Err(Error::Extraction(format!(
            "{materials} endmembers requested from {} pixels with {bands} bands",
            cube.pixels()
        )));
    }
    if cube.data().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("endmember extraction requires a nonnegative cube".into()));
    }
    let max_iter = 50 * materials;
    let norms: Vec<f64> = cube.pixel_iter().map(|p| p.iter().map(|v| v * v).sum()).collect();
    let peak = norms.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::Extraction("cube is identically zero".into()));
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(materials);
    let mut residuals = norms.clone();
    while chosen.len() < materials {
        let (best, best_res) = residuals
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        if !(best_res > 1e-20 * peak) {
            return Err(Error::Extraction(format!(
                "pixel cloud is spanned by {} endmembers; cannot select {materials}",
                chosen.len()
            )));
        }
        chosen.push(best);
        let k = chosen.len();
        if k == materials {
            break;
        }
        let basis = DMatrix::from_fn(bands, k, |l, j| cube.pixel(chosen[j])[l]);
        let gram = basis.transpose() * &basis;
        for (p, res) in residuals.iter_mut().enumerate() {
            let x = DVector::from_column_slice(cube.pixel(p));
            let etb = basis.transpose() * &x;
            let coef = nnls_normal(&gram, &etb, max_iter);
            *res = (x - &basis * coef).norm_squared();
        }
        for &c in &chosen {
            residuals[c] = 0.0;
        }
    }

    let rows: Vec<Vec<f64>> = chosen.iter().map(|&p| cube.pixel(p).to_vec()).collect();
    let endmembers = EndmemberMatrix::from_rows(&rows).map_err(|e| match e {
        Error::Singular(msg) => Error::Extraction(msg),
        other => other,
    })?;
    Ok(Extraction {
        endmembers,
        pixel_indices: chosen,
    })
}

/// Per-pixel `A(i,j,·) = X(i,j,·)·S⁺`, not clipped and not renormalized.
pub fn estimate_abundances_ls(cube: &SpectralCube, endmembers: &EndmemberMatrix) -> Result<AbundanceMap> {
    if cube.bands() != endmembers.bands() {
        return Err(Error::InvalidInput(format!(
            "cube has {} bands, endmembers {}",
            cube.bands(),
            endmembers.bands()
        )));
    }
    let pinv = endmembers.pinv();
    let m = endmembers.materials();
    let mut out = Vec::with_capacity(cube.pixels() * m);
    for px in cube.pixel_iter() {
        for k in 0..m {
            out.push(px.iter().enumerate().map(|(l, x)| x * pinv[(l, k)]).sum());
        }
    }
    AbundanceMap::new(cube.height(), cube.width(), m, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    MinVol,
    Pca,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minvol" => Ok(Backend::MinVol),
            "pca" => Ok(Backend::Pca),
            other => Err(Error::InvalidInput(format!(
                "unknown unmixing backend {other:?} (expected minvol or pca)"
            ))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::MinVol => "minvol",
            Backend::Pca => "pca",
        })
    }
}

/// Spectra, per-pixel coefficients, and an optional spectral offset added back on reconstruction.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMap,
    pub offset: Option<Vec<f64>>,
}

impl Decomposition {
    pub fn reconstruct(&self, abundances: &AbundanceMap) -> Result<SpectralCube> {
        let mut cube = reconstruct(abundances, &self.endmembers)?;
        if let Some(offset) = &self.offset {
            for p in 0..cube.pixels() {
                for (v, o) in cube.pixel_mut(p).iter_mut().zip(offset) {
                    *v += o;
                }
            }
        }
        Ok(cube)
    }

    /// Coefficients of another cube (same sensor) in this decomposition.
    pub fn project(&self, cube: &SpectralCube) -> Result<AbundanceMap> {
        match &self.offset {
            None => estimate_abundances_ls(cube, &self.endmembers),
            Some(offset) => {
                let mut centered = cube.clone();
                for p in 0..centered.pixels() {
                    for (v, o) in centered.pixel_mut(p).iter_mut().zip(offset) {
                        *v -= o;
                    }
                }
                estimate_abundances_ls(&centered, &self.endmembers)
            }
        }
    }
}

pub fn unmix(cube: &SpectralCube, materials: usize, backend: Backend) -> Result<Decomposition> {
    match backend {
        Backend::MinVol => {
            let endmembers = extract_endmembers_minvol(cube, materials)?;
            let abundances = estimate_abundances_ls(cube, &endmembers)?;
            Ok(Decomposition {
                endmembers,
                abundances,
                offset: None,
            })
        }
        Backend::Pca => {
            let pca = decompose_pca(cube, materials)?;
            Ok(Decomposition {
                endmembers: EndmemberMatrix::new(pca.components)?,
                abundances: pca.coefficients,
                offset: Some(pca.mean_spectrum),
            })
        }
    }
}
