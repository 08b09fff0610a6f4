//! Curvelet transform: wavelet band decomposition followed by a blockwise
//! ridgelet analysis of each detail band.
//!
//! Detail scales are tiled into non-overlapping blocks whose size doubles
//! every two scales; each block's Radon slices are wavelet-analyzed to the
//! configured depth, and coefficients with the same (wavelet scale,
//! ridgelet band) tag are concatenated across blocks into one curvelet
//! band. The wavelet smooth array is appended verbatim as the final band.
//! Under the default configuration this yields 19 bands.

use rayon::prelude::*;

use crate::atrous::atrous_2d;
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::ridgelet::{max_depth, BlockTransform};

/// Band schedule for the transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveletConfig {
    /// Number of wavelet detail scales (the smooth array makes one more).
    pub wavelet_scales: usize,
    /// Ridgelet block size at the finest scale.
    pub base_block: usize,
    /// Wavelet depth of the per-block ridgelet at each scale.
    pub ridgelet_depths: Vec<usize>,
    /// Append the wavelet smooth array as the last band.
    pub include_smooth_band: bool,
}

impl Default for CurveletConfig {
    fn default() -> Self {
        Self {
            wavelet_scales: 5,
            base_block: 16,
            ridgelet_depths: vec![4, 4, 4, 3, 3],
            include_smooth_band: true,
        }
    }
}

impl CurveletConfig {
    /// Block size used at 1-based scale `j`: doubles every two scales.
    pub fn block_size(&self, j: usize) -> usize {
        self.base_block << ((j - 1) / 2)
    }

    /// Total number of curvelet bands this schedule produces.
    pub fn total_bands(&self) -> usize {
        self.ridgelet_depths.iter().sum::<usize>() + usize::from(self.include_smooth_band)
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelet_scales == 0 {
            return Err(Error::BadCurveletConfig("wavelet_scales must be >= 1".into()));
        }
        if self.ridgelet_depths.len() != self.wavelet_scales {
            return Err(Error::BadCurveletConfig(format!(
                "{} ridgelet depths for {} wavelet scales",
                self.ridgelet_depths.len(),
                self.wavelet_scales
            )));
        }
        if self.base_block < 4 || !self.base_block.is_power_of_two() {
            return Err(Error::BadCurveletConfig(format!(
                "base_block {} must be a power of two >= 4",
                self.base_block
            )));
        }
        for (i, &depth) in self.ridgelet_depths.iter().enumerate() {
            let block = self.block_size(i + 1);
            let cap = max_depth(block);
            if depth == 0 || depth > cap {
                return Err(Error::BadCurveletConfig(format!(
                    "scale {} depth {} outside 1..={} for block {}",
                    i + 1,
                    depth,
                    cap,
                    block
                )));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines (`#` comments allowed) overriding the
    /// defaults. Keys: `wavelet_scales`, `base_block`, `ridgelet_depths`
    /// (comma-separated), `include_smooth_band`.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::BadCurveletConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::BadCurveletConfig(format!("line {}: bad {what}: {value:?}", lineno + 1))
            };
            match key {
                "wavelet_scales" => {
                    cfg.wavelet_scales = value.parse().map_err(|_| bad("integer"))?
                }
                "base_block" => cfg.base_block = value.parse().map_err(|_| bad("integer"))?,
                "ridgelet_depths" => {
                    cfg.ridgelet_depths = value
                        .split(',')
                        .map(|v| v.trim().parse().map_err(|_| bad("depth list")))
                        .collect::<Result<_>>()?
                }
                "include_smooth_band" => {
                    cfg.include_smooth_band = value.parse().map_err(|_| bad("boolean"))?
                }
                other => {
                    return Err(Error::BadCurveletConfig(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Ordered coefficient bands with their (wavelet scale, ridgelet band)
/// tags. The smooth band is tagged (wavelet_scales + 1, 0).
#[derive(Debug, Clone)]
pub struct CurveletBands {
    pub bands: Vec<Vec<f64>>,
    pub band_labels: Vec<(usize, usize)>,
}

impl CurveletBands {
    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
}

/// Runs the transform; image dimensions must be divisible by every scale's
/// block size.
pub fn curvelet_transform(img: &ImageGrid, cfg: &CurveletConfig) -> Result<CurveletBands> {
    cfg.validate()?;
    for j in 1..=cfg.wavelet_scales {
        let block = cfg.block_size(j);
        if !img.width().is_multiple_of(block) || !img.height().is_multiple_of(block) {
            return Err(Error::BlockDivisibility {
                width: img.width(),
                height: img.height(),
                block,
            });
        }
    }

    let decomposition = atrous_2d(img, cfg.wavelet_scales)?;

    let mut bands = Vec::with_capacity(cfg.total_bands());
    let mut band_labels = Vec::with_capacity(cfg.total_bands());

    for (idx, scale) in decomposition.scales.iter().enumerate() {
        let j = idx + 1;
        let depth = cfg.ridgelet_depths[idx];
        let block_size = cfg.block_size(j);
        let transform = BlockTransform::new(block_size)?;

        let blocks_x = scale.width() / block_size;
        let blocks_y = scale.height() / block_size;
        let coords: Vec<(usize, usize)> = (0..blocks_y)
            .flat_map(|by| (0..blocks_x).map(move |bx| (bx, by)))
            .collect();

        // Blocks are independent; the collect keeps raster order. Each
        // block yields a flat [band][angle][position] buffer.
        let coeffs_per_band = (2 * block_size) * (2 * block_size);
        let per_block: Vec<Vec<f64>> = coords
            .par_iter()
            .map_init(
                || transform.make_scratch(),
                |scratch, &(bx, by)| {
                    let mut out = vec![0.0; depth * coeffs_per_band];
                    transform.ridgelet_each(
                        scale,
                        bx * block_size,
                        by * block_size,
                        depth,
                        scratch,
                        |band, angle, coeffs| {
                            if band < depth {
                                let at = band * coeffs_per_band + angle * coeffs.len();
                                out[at..at + coeffs.len()].copy_from_slice(coeffs);
                            }
                        },
                    )?;
                    Ok(out)
                },
            )
            .collect::<Result<_>>()?;

        for band_idx in 0..depth {
            let mut band = Vec::with_capacity(per_block.len() * coeffs_per_band);
            for block in &per_block {
                band.extend_from_slice(
                    &block[band_idx * coeffs_per_band..(band_idx + 1) * coeffs_per_band],
                );
            }
            bands.push(band);
            band_labels.push((j, band_idx + 1));
        }
    }

    if cfg.include_smooth_band {
        bands.push(decomposition.smooth.pixels().to_vec());
        band_labels.push((cfg.wavelet_scales + 1, 0));
    }

    Ok(CurveletBands { bands, band_labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_config_gives_19_bands() {
        let cfg = CurveletConfig::default();
        assert_eq!(cfg.total_bands(), 19);
        assert_eq!(
            (1..=5).map(|j| cfg.block_size(j)).collect::<Vec<_>>(),
            vec![16, 16, 32, 32, 64]
        );
        cfg.validate().unwrap();
    }

    #[test]
    fn band_count_and_labels_on_512() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = ImageGrid::from_fn(512, 512, |_, _| rng.gen_range(0.0..255.0)).unwrap();
        let bands = curvelet_transform(&img, &CurveletConfig::default()).unwrap();
        assert_eq!(bands.len(), 19);
        assert_eq!(
            &bands.band_labels[..6],
            &[(1, 1), (1, 2), (1, 3), (1, 4), (2, 1), (2, 2)]
        );
        assert_eq!(bands.band_labels[18], (6, 0));
    }

    #[test]
    fn zero_image_gives_zero_bands() {
        let img = ImageGrid::constant(128, 128, 0.0).unwrap();
        let cfg = CurveletConfig {
            wavelet_scales: 3,
            base_block: 16,
            ridgelet_depths: vec![3, 3, 3],
            include_smooth_band: true,
        };
        let bands = curvelet_transform(&img, &cfg).unwrap();
        assert_eq!(bands.len(), 10);
        assert!(bands.bands.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn smooth_gradient_has_little_fine_scale_energy() {
        let img = ImageGrid::from_fn(512, 512, |x, y| (x + y) as f64 / 4.0).unwrap();
        let bands = curvelet_transform(&img, &CurveletConfig::default()).unwrap();
        let energy = |band: &Vec<f64>| band.iter().map(|v| v * v).sum::<f64>();
        let total: f64 = bands.bands.iter().map(energy).sum();
        let fine: f64 = bands
            .bands
            .iter()
            .zip(&bands.band_labels)
            .filter(|(_, label)| label.0 == 1)
            .map(|(band, _)| energy(band))
            .sum();
        assert!(
            fine < 0.01 * total,
            "finest scale carries {fine} of {total}"
        );
    }

    #[test]
    fn transform_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = ImageGrid::from_fn(64, 64, |_, _| rng.gen_range(-1.0..1.0)).unwrap();
        let b = ImageGrid::from_fn(64, 64, |_, _| rng.gen_range(-1.0..1.0)).unwrap();
        let combo =
            ImageGrid::from_fn(64, 64, |x, y| 2.0 * a.get(x, y) - 3.0 * b.get(x, y)).unwrap();
        let cfg = CurveletConfig {
            wavelet_scales: 2,
            base_block: 16,
            ridgelet_depths: vec![3, 3],
            include_smooth_band: true,
        };
        let ta = curvelet_transform(&a, &cfg).unwrap();
        let tb = curvelet_transform(&b, &cfg).unwrap();
        let tc = curvelet_transform(&combo, &cfg).unwrap();
        for band in 0..tc.len() {
            for i in 0..tc.bands[band].len() {
                let expect = 2.0 * ta.bands[band][i] - 3.0 * tb.bands[band][i];
                assert!((tc.bands[band][i] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn determinism_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = ImageGrid::from_fn(128, 128, |_, _| rng.gen_range(0.0..255.0)).unwrap();
        let cfg = CurveletConfig {
            wavelet_scales: 3,
            base_block: 16,
            ridgelet_depths: vec![3, 3, 3],
            include_smooth_band: true,
        };
        let a = curvelet_transform(&img, &cfg).unwrap();
        let b = curvelet_transform(&img, &cfg).unwrap();
        assert_eq!(a.bands, b.bands);
    }

    #[test]
    fn divisibility_enforced() {
        let img = ImageGrid::constant(100, 100, 1.0).unwrap();
        assert!(matches!(
            curvelet_transform(&img, &CurveletConfig::default()),
            Err(Error::BlockDivisibility { .. })
        ));
    }

    #[test]
    fn config_file_overrides() {
        let cfg = CurveletConfig::from_key_values(
            "# comment\nwavelet_scales = 3\nridgelet_depths = 3, 3, 2\nbase_block = 8\n",
        )
        .unwrap();
        assert_eq!(cfg.wavelet_scales, 3);
        assert_eq!(cfg.ridgelet_depths, vec![3, 3, 2]);
        assert_eq!(cfg.base_block, 8);
        assert!(CurveletConfig::from_key_values("nonsense").is_err());
        assert!(CurveletConfig::from_key_values("base_block = 12").is_err());
    }
}
