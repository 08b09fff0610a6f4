//! Grayscale image grading by moments of multiresolution transform
//! coefficients.
//!
//! The library decomposes an image with a redundant B3 spline wavelet
//! transform and a blockwise ridgelet (curvelet) transform, summarizes each
//! coefficient band by its 2nd, 3rd and 4th order moments, embeds the
//! resulting feature table with correspondence analysis, and classifies
//! images by k-nearest neighbors in truncated factor subspaces.
//!
//! Modules follow the processing order:
//!
//! - [`image`] / [`synth`]: raster type, PGM I/O, noise, synthetic textures
//! - [`atrous`]: redundant B3 spline wavelet transform (1-D and 2-D)
//! - [`ridgelet`]: blockwise Radon + 1-D wavelet transform
//! - [`curvelet`]: wavelet bands analyzed by blockwise ridgelets
//! - [`features`]: band moments and 72-entry feature vectors
//! - [`distfit`]: histogram peak fits (Gaussian vs Lorentzian)
//! - [`ca`]: correspondence analysis of the image x feature table
//! - [`knn`]: nearest-neighbor classification and dimension sweeps

pub mod atrous;
pub mod ca;
pub mod curvelet;
pub mod distfit;
mod error;
pub mod features;
pub mod image;
pub mod knn;
pub mod ridgelet;
pub mod synth;

pub use error::{Error, Result};
pub use image::ImageGrid;
