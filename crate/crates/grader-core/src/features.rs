//! Moment computation per coefficient array and per-image feature vectors.
//!
//! Each coefficient band is summarized by its 2nd, 3rd and 4th order
//! moments: variance (second central moment), skewness (m3 / m2^1.5) and
//! non-excess kurtosis (m4 / m2^2, Gaussian value 3). Moments use the
//! population (1/N) normalization. A feature vector concatenates the
//! triples of the wavelet detail scales and the curvelet bands; with the
//! default configuration that is 5*3 + 19*3 = 72 entries.

use std::fmt::Write as _;

use crate::atrous::atrous_2d;
use crate::curvelet::{curvelet_transform, CurveletConfig};
use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Variance threshold below which an array is considered constant.
const DEGENERATE_VARIANCE: f64 = 1e-20;

/// Second, third and fourth order moments of one coefficient array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTriple {
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Central moments per the definitions above.
///
/// Errors on arrays shorter than 4 samples or with variance below
/// `1e-20`; never returns NaN.
pub fn moments(coeffs: &[f64]) -> Result<MomentTriple> {
    let n = coeffs.len();
    if n < 4 {
        return Err(Error::DegenerateData(format!(
            "need at least 4 samples, got {n}"
        )));
    }
    let n = n as f64;
    let mean = coeffs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in coeffs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 <= DEGENERATE_VARIANCE {
        return Err(Error::DegenerateData(format!(
            "variance {m2} below degeneracy threshold"
        )));
    }
    Ok(MomentTriple {
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
    })
}

/// A classified (or to-be-classified) image's band moments.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub image_id: String,
    pub label: Option<String>,
    /// `[w1..wJ] x [m2, m3, m4]` then `[c1..cN] x [m2, m3, m4]`.
    pub values: Vec<f64>,
}

/// Extracts the full feature vector: moment triples of each wavelet detail
/// scale followed by those of each curvelet band.
pub fn extract_features(
    img: &ImageGrid,
    image_id: &str,
    label: Option<&str>,
    wavelet_scales: usize,
    cfg: &CurveletConfig,
) -> Result<FeatureVector> {
    let decomposition = atrous_2d(img, wavelet_scales)?;
    let mut values = Vec::with_capacity(3 * (wavelet_scales + cfg.total_bands()));

    for (idx, scale) in decomposition.scales.iter().enumerate() {
        let triple = moments(scale.pixels()).map_err(|_| Error::DegenerateBand {
            band: format!("wavelet scale {}", idx + 1),
        })?;
        values.extend([triple.variance, triple.skewness, triple.kurtosis]);
    }

    let bands = curvelet_transform(img, cfg)?;
    for (idx, (band, label)) in bands.bands.iter().zip(&bands.band_labels).enumerate() {
        let triple = moments(band).map_err(|_| Error::DegenerateBand {
            band: format!(
                "curvelet band {} (scale {}, ridgelet band {})",
                idx + 1,
                label.0,
                label.1
            ),
        })?;
        values.extend([triple.variance, triple.skewness, triple.kurtosis]);
    }

    Ok(FeatureVector {
        image_id: image_id.to_string(),
        label: label.map(str::to_string),
        values,
    })
}

/// Column names for the feature CSV: `w<j>_m<k>` then `c<NN>_m<k>`.
pub fn feature_column_names(wavelet_scales: usize, curvelet_bands: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * (wavelet_scales + curvelet_bands));
    for j in 1..=wavelet_scales {
        for k in [2, 3, 4] {
            names.push(format!("w{j}_m{k}"));
        }
    }
    for b in 1..=curvelet_bands {
        for k in [2, 3, 4] {
            names.push(format!("c{b:02}_m{k}"));
        }
    }
    names
}

/// Renders the feature CSV: header `id,label,<columns>`, one row per
/// vector, values with 17 significant digits.
pub fn feature_csv(
    vectors: &[FeatureVector],
    wavelet_scales: usize,
    curvelet_bands: usize,
) -> Result<String> {
    let names = feature_column_names(wavelet_scales, curvelet_bands);
    let mut out = String::new();
    out.push_str("id,label");
    for name in &names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for v in vectors {
        if v.values.len() != names.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                actual: v.values.len(),
            });
        }
        out.push_str(&v.image_id);
        out.push(',');
        if let Some(label) = &v.label {
            out.push_str(label);
        }
        for value in &v.values {
            let _ = write!(out, ",{value:.16e}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses a feature CSV produced by [`feature_csv`].
pub fn parse_feature_csv(text: &str) -> Result<Vec<FeatureVector>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::ModelParse("empty feature csv".into()))?;
    let columns = header.split(',').count();
    if !header.starts_with("id,label") || columns < 3 {
        return Err(Error::ModelParse(format!("bad feature header {header:?}")));
    }
    let mut vectors = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts
            .next()
            .ok_or_else(|| Error::ModelParse(format!("line {}: missing id", lineno + 2)))?;
        let label = parts
            .next()
            .ok_or_else(|| Error::ModelParse(format!("line {}: missing label", lineno + 2)))?;
        let values: Vec<f64> = parts
            .map(|v| {
                v.parse().map_err(|_| {
                    Error::ModelParse(format!("line {}: bad value {v:?}", lineno + 2))
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != columns - 2 {
            return Err(Error::ModelParse(format!(
                "line {}: {} values, header names {}",
                lineno + 2,
                values.len(),
                columns - 2
            )));
        }
        vectors.push(FeatureVector {
            image_id: id.to_string(),
            label: if label.is_empty() {
                None
            } else {
                Some(label.to_string())
            },
            values,
        });
    }
    Ok(vectors)
}
