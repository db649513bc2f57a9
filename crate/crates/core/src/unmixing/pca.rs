use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::image::{AbundanceMap, SpectralCube};

#[derive(Debug, Clone)]
pub struct PcaDecomposition {
    /// `M × L`, orthonormal rows ordered by decreasing variance.
    pub components: DMatrix<f64>,
    pub coefficients: AbundanceMap,
    pub mean_spectrum: Vec<f64>,
}

impl PcaDecomposition {
    pub fn reconstruct(&self) -> Result<SpectralCube> {
        let (m, bands) = self.components.shape();
        let c = &self.coefficients;
        SpectralCube::from_fn(c.height(), c.width(), bands, |r, col, l| {
            self.mean_spectrum[l]
                + (0..m)
                    .map(|k| c.get(r, col, k) * self.components[(k, l)])
                    .sum::<f64>()
        })
    }
}

/// Projects the mean-centered cube onto the top `M` eigenvectors of the band covariance.
///
/// Each component's sign is fixed so that its largest-magnitude entry is positive.
pub fn decompose_pca(cube: &SpectralCube, materials: usize) -> Result<PcaDecomposition> {
    let bands = cube.bands();
    if materials == 0 || materials > bands {
        return Err(Error::InvalidInput(format!(
            "PCA needs 1..={bands} components, got {materials}"
        )));
    }
    let n = cube.pixels() as f64;
    let mut mean = vec![0.0; bands];
    for px in cube.pixel_iter() {
        for (m, v) in mean.iter_mut().zip(px) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = DMatrix::<f64>::zeros(bands, bands);
    let mut centered = vec![0.0; bands];
    for px in cube.pixel_iter() {
        for l in 0..bands {
            centered[l] = px[l] - mean[l];
        }
        for i in 0..bands {
            for j in i..bands {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..bands {
        for j in i..bands {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..bands).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = DMatrix::zeros(materials, bands);
    for (k, &col) in order.iter().take(materials).enumerate() {
        let v = eig.eigenvectors.column(col);
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for l in 0..bands {
            components[(k, l)] = sign * v[l];
        }
    }

    let mut coef = Vec::with_capacity(cube.pixels() * materials);
    for px in cube.pixel_iter() {
        for k in 0..materials {
            coef.push((0..bands).map(|l| (px[l] - mean[l]) * components[(k, l)]).sum());
        }
    }
    Ok(PcaDecomposition {
        components,
        coefficients: AbundanceMap::new(cube.height(), cube.width(), materials, coef)?,
        mean_spectrum: mean,
    })
}
