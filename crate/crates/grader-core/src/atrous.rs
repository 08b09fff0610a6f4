//! Redundant B3 spline "a trous" wavelet transform.
//!
//! Each step smooths with the 5-tap kernel (1/16)[1, 4, 6, 4, 1], dilated
//! by inserting `2^(j-1) - 1` zeros between taps at step `j`. The detail
//! scale is the difference between successive smoothings, so the input is
//! recovered exactly as `smooth + sum of details`. No decimation takes
//! place; every scale keeps the input dimensions.
//!
//! Boundaries are handled by reflection about the edge sample, without
//! repeating it: index -k maps to +k and index n-1+k maps to n-1-k.

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// The B3 spline scaling kernel.
pub const B3_KERNEL: [f64; 5] = [
    1.0 / 16.0,
    4.0 / 16.0,
    6.0 / 16.0,
    4.0 / 16.0,
    1.0 / 16.0,
];

/// Output of [`atrous_2d`]: detail scales finest-first plus the smooth
/// continuum array, all with the input's dimensions.
#[derive(Debug, Clone)]
pub struct WaveletDecomposition {
    pub scales: Vec<ImageGrid>,
    pub smooth: ImageGrid,
}

impl WaveletDecomposition {
    pub fn levels(&self) -> usize {
        self.scales.len()
    }

    /// Pixelwise `smooth + sum of scales`; equals the input up to rounding.
    pub fn reconstruct(&self) -> ImageGrid {
        let mut pixels = self.smooth.pixels().to_vec();
        for scale in &self.scales {
            for (p, w) in pixels.iter_mut().zip(scale.pixels()) {
                *p += w;
            }
        }
        ImageGrid::new(self.smooth.width(), self.smooth.height(), pixels)
            .expect("dimensions preserved")
    }
}

/// 2-D transform with `levels` detail scales.
///
/// Requires `2^(levels-1) * 4 < min(width, height)` so the dilated kernel
/// fits after reflection.
pub fn atrous_2d(img: &ImageGrid, levels: usize) -> Result<WaveletDecomposition> {
    let limit = img.width().min(img.height());
    if levels == 0 || (1usize << (levels - 1)) * 4 >= limit {
        return Err(Error::TooManyScales {
            requested: levels,
            limit,
        });
    }

    let (w, h) = (img.width(), img.height());
    let mut current = img.pixels().to_vec();
    let mut scales = Vec::with_capacity(levels);
    let mut row_buf = vec![0.0; w.max(h)];

    for j in 1..=levels {
        let step = 1usize << (j - 1);
        let mut next = vec![0.0; current.len()];

        // Rows.
        for y in 0..h {
            let row = &current[y * w..(y + 1) * w];
            convolve_b3(row, step, &mut row_buf[..w]);
            next[y * w..(y + 1) * w].copy_from_slice(&row_buf[..w]);
        }
        // Columns, in place over `next`.
        let mut col = vec![0.0; h];
        for x in 0..w {
            for y in 0..h {
                col[y] = next[y * w + x];
            }
            convolve_b3(&col, step, &mut row_buf[..h]);
            for y in 0..h {
                next[y * w + x] = row_buf[y];
            }
        }

        let detail: Vec<f64> = current
            .iter()
            .zip(&next)
            .map(|(c, n)| c - n)
            .collect();
        scales.push(ImageGrid::new(w, h, detail)?);
        current = next;
    }

    Ok(WaveletDecomposition {
        scales,
        smooth: ImageGrid::new(w, h, current)?,
    })
}

/// 1-D transform: `levels` detail arrays (finest first) plus the smooth
/// residual. The dilated kernel half-width `2 * 2^(levels-1)` must not
/// exceed `len - 1`.
pub fn atrous_1d(signal: &[f64], levels: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = signal.len();
    if levels == 0 || 2 * (1usize << (levels - 1)) > n.saturating_sub(1) {
        return Err(Error::TooManyScales {
            requested: levels,
            limit: n,
        });
    }

    let mut current = signal.to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut buf = vec![0.0; n];

    for j in 1..=levels {
        let step = 1usize << (j - 1);
        convolve_b3(&current, step, &mut buf);
        details.push(current.iter().zip(&buf).map(|(c, s)| c - s).collect());
        current.copy_from_slice(&buf);
    }
    Ok((details, current))
}

/// Convolves with the B3 kernel dilated by `step`, reflecting at borders.
pub(crate) fn convolve_b3(signal: &[f64], step: usize, out: &mut [f64]) {
    let n = signal.len();
    let reach = 2 * step;
    let (k0, k1, k2) = (B3_KERNEL[0], B3_KERNEL[1], B3_KERNEL[2]);

    // Interior samples need no reflection.
    let lo = reach.min(n);
    let hi = n.saturating_sub(reach).max(lo);
    for i in lo..hi {
        out[i] = k2 * signal[i]
            + k1 * (signal[i - step] + signal[i + step])
            + k0 * (signal[i - reach] + signal[i + reach]);
    }
    for i in (0..lo).chain(hi..n) {
        let m = n as isize;
        let i = i as isize;
        let s = step as isize;
        out[i as usize] = k2 * signal[reflect(i, m) as usize]
            + k1
                * (signal[reflect(i - s, m) as usize] + signal[reflect(i + s, m) as usize])
            + k0
                * (signal[reflect(i - 2 * s, m) as usize]
                    + signal[reflect(i + 2 * s, m) as usize]);
    }
}

/// Mirror without repeating the edge sample: ..2,1,0,1,2.. at the left edge.
fn reflect(idx: isize, n: isize) -> isize {
    let mut i = idx;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i;
        }
    }
}

/// Numeric dump format: two little-endian u32 dimensions, then the values
/// as little-endian f64, row-major.
pub fn write_flat_f64(
    width: usize,
    height: usize,
    values: &[f64],
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::InvalidImage(format!(
            "{} values for {}x{} dump",
            values.len(),
            width,
            height
        )));
    }
    let mut out = Vec::with_capacity(8 + 8 * values.len());
    out.extend((width as u32).to_le_bytes());
    out.extend((height as u32).to_le_bytes());
    for v in values {
        out.extend(v.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a dump written by [`write_flat_f64`].
pub fn read_flat_f64(path: impl AsRef<std::path::Path>) -> Result<(usize, usize, Vec<f64>)> {
    let data = std::fs::read(path)?;
    if data.len() < 8 {
        return Err(Error::MalformedHeader("flat dump shorter than header".into()));
    }
    let width = u32::from_le_bytes(data[0..4].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let expected = width * height;
    let payload = &data[8..];
    if payload.len() != expected * 8 {
        return Err(Error::TruncatedPixels {
            expected,
            found: payload.len() / 8,
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, height, values))
}
