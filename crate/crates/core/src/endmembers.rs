//! Endmember spectra, their pseudo-inverse, and the linear mixing model.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::image::{AbundanceMap, SpectralCube};

/// Smallest admissible ratio of extreme singular values.
const RANK_TOLERANCE: f64 = 1e-10;
/// Above this condition number of `S·Sᵀ` the normal equations are abandoned for an SVD.
const NORMAL_EQUATIONS_MAX_COND: f64 = 1e8;

/// `M × L` matrix of pure-material spectra with its cached `L × M` pseudo-inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix {
    spectra: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl EndmemberMatrix {
    /// Builds from `M` rows of `L` values each.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let materials = rows.len();
        if materials == 0 {
            return Err(Error::InvalidInput("no endmember rows".into()));
        }
        let bands = rows[0].len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != bands) {
            return Err(Error::InvalidInput(format!(
                "endmember row {i} has {} values, expected {bands}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(materials, bands, |m, l| rows[m][l]))
    }

    pub fn new(spectra: DMatrix<f64>) -> Result<Self> {
        let (materials, bands) = spectra.shape();
        if materials == 0 || bands == 0 {
            return Err(Error::InvalidInput("empty endmember matrix".into()));
        }
        if materials > bands {
            return Err(Error::InvalidInput(format!(
                "{materials} endmembers exceed {bands} bands"
            )));
        }
        if spectra.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite endmember value".into()));
        }
        if let Some(m) = (0..materials).find(|&m| spectra.row(m).norm() == 0.0) {
            return Err(Error::Singular(format!("endmember {m} is the zero spectrum")));
        }
        let pinv = pseudo_inverse_of(&spectra)?;
        Ok(EndmemberMatrix { spectra, pinv })
    }

    pub fn materials(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn bands(&self) -> usize {
        self.spectra.ncols()
    }

    /// The `M × L` spectra matrix `S`.
    pub fn spectra(&self) -> &DMatrix<f64> {
        &self.spectra
    }

    /// The `L × M` Moore–Penrose pseudo-inverse `S⁺`.
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn row(&self, m: usize) -> Vec<f64> {
        self.spectra.row(m).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.materials()).map(|m| self.row(m)).collect()
    }
}

/// `S⁺ = Sᵀ(S·Sᵀ)⁻¹` for a full-row-rank `S`.
pub fn pseudo_inverse(endmembers: &EndmemberMatrix) -> DMatrix<f64> {
    endmembers.pinv.clone()
}

fn pseudo_inverse_of(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = s.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOLERANCE * smax) {
        return Err(Error::Singular(format!(
            "endmember matrix is rank deficient (singular values {smin:e} / {smax:e})"
        )));
    }
    let cond = (smax / smin).powi(2);
    if cond <= NORMAL_EQUATIONS_MAX_COND {
        let gram = s * s.transpose();
        if let Some(chol) = gram.cholesky() {
            // (S Sᵀ)⁻¹ S = (S⁺)ᵀ
            return Ok(chol.solve(s).transpose());
        }
    }
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let inv_sigma = DMatrix::from_diagonal(&svd.singular_values.map(|x| 1.0 / x));
    Ok(v_t.transpose() * inv_sigma * u.transpose())
}

/// Linear mixing: `out(i,j,l) = Σ_m A(i,j,m)·S(m,l)`.
pub fn reconstruct(abundances: &AbundanceMap, endmembers: &EndmemberMatrix) -> Result<SpectralCube> {
    if abundances.materials() != endmembers.materials() {
        return Err(Error::InvalidInput(format!(
            "abundances have {} materials, endmembers {}",
            abundances.materials(),
            endmembers.materials()
        )));
    }
    let bands = endmembers.bands();
    let s = endmembers.spectra();
    let mut out = Vec::with_capacity(abundances.pixels() * bands);
    for px in abundances.pixel_iter() {
        for l in 0..bands {
            out.push(px.iter().enumerate().map(|(m, a)| a * s[(m, l)]).sum());
        }
    }
    SpectralCube::new(abundances.height(), abundances.width(), bands, out)
}
