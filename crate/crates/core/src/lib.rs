//! Abundance-domain super-resolution of hyperspectral images.
//!
//! A low-resolution cube is unmixed into endmembers and abundance maps; a
//! residual CNN trained only on synthetic dead-leaves abundance maps
//! super-resolves the abundances, which are then remixed.

pub mod dataset;
pub mod deadleaves;
pub mod degradation;
pub mod endmembers;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod pipeline;
pub mod rng;
pub mod srnet;
pub mod unmixing;

pub use endmembers::{reconstruct, EndmemberMatrix};
pub use error::{Error, ErrorKind, Result};
pub use image::{Abundance, AbundanceMap, Image3, Spectral, SpectralCube};
pub use metrics::{evaluate, MetricReport};
