//! Raster data type, PGM file I/O, and seeded noise injection.
//!
//! Pixels are stored as `f64` regardless of the source bit depth; every
//! downstream transform is real-valued. The only supported container is
//! PGM: `P5` (binary, maxval <= 255) and `P2` (ASCII) for reading, `P5`
//! for writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// A 2-D grid of real-valued pixels, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageGrid {
    /// Builds a grid, validating dimensions, length and finiteness.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite pixel value {v}")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Constant-valued grid.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.pixels[y * self.width + x] = value;
    }

    /// One row of pixels.
    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }
}

/// Seeded random source with a declared sampling distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RngSpec {
    pub seed: u64,
    pub distribution: NoiseDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDistribution {
    Gaussian { mean: f64, sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl RngSpec {
    pub fn gaussian(seed: u64, mean: f64, sigma: f64) -> Result<Self> {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::InvalidRngSpec(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self {
            seed,
            distribution: NoiseDistribution::Gaussian { mean, sigma },
        })
    }

    pub fn uniform(seed: u64, lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::InvalidRngSpec(format!(
                "uniform bounds must satisfy lo < hi, got [{lo}, {hi})"
            )));
        }
        Ok(Self {
            seed,
            distribution: NoiseDistribution::Uniform { lo, hi },
        })
    }

    /// Seeded generator for this spec.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Draws `n` samples from the configured distribution.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let mut rng = self.rng();
        match self.distribution {
            NoiseDistribution::Gaussian { mean, sigma } => {
                let d = Normal::new(mean, sigma).expect("validated sigma");
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            NoiseDistribution::Uniform { lo, hi } => {
                let d = Uniform::new(lo, hi);
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
        }
    }
}

/// Reads a `P5` (binary) or `P2` (ASCII) PGM file.
///
/// Header comments (`#` to end of line) are skipped. Pixel values come back
/// as reals in `[0, maxval]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let data = fs::read(path.as_ref())?;
    parse_pgm(&data)
}

/// Parses PGM bytes; see [`read_pgm`].
pub fn parse_pgm(data: &[u8]) -> Result<ImageGrid> {
    if data.len() < 2 {
        return Err(Error::MalformedHeader("file shorter than magic".into()));
    }
    let magic = &data[..2];
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => {
            return Err(Error::UnsupportedMagic(
                String::from_utf8_lossy(magic).into_owned(),
            ))
        }
    };

    let mut pos = 2;
    let width = read_header_int(data, &mut pos)?;
    let height = read_header_int(data, &mut pos)?;
    let maxval = read_header_int(data, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} out of range")));
    }
    let expected = width * height;

    let pixels = if binary {
        if maxval > 255 {
            return Err(Error::MalformedHeader(format!(
                "binary PGM maxval {maxval} > 255 unsupported"
            )));
        }
        // Exactly one whitespace byte separates the header from the payload.
        if pos >= data.len() || !data[pos].is_ascii_whitespace() {
            return Err(Error::MalformedHeader(
                "missing whitespace after maxval".into(),
            ));
        }
        pos += 1;
        let payload = &data[pos..];
        if payload.len() < expected {
            return Err(Error::TruncatedPixels {
                expected,
                found: payload.len(),
            });
        }
        payload[..expected].iter().map(|&b| f64::from(b)).collect()
    } else {
        let mut values = Vec::with_capacity(expected);
        while values.len() < expected {
            match try_read_header_int(data, &mut pos) {
                Some(v) => {
                    if v > maxval {
                        return Err(Error::MalformedHeader(format!(
                            "sample {v} exceeds maxval {maxval}"
                        )));
                    }
                    values.push(v as f64);
                }
                None => {
                    return Err(Error::TruncatedPixels {
                        expected,
                        found: values.len(),
                    })
                }
            }
        }
        values
    };

    ImageGrid::new(width, height, pixels)
}

/// Writes `img` as binary `P5` with maxval 255; pixels are clamped to
/// `[0, 255]` and rounded.
pub fn write_pgm(img: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(img.pixels().len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())?;
    out.extend(
        img.pixels()
            .iter()
            .map(|&v| v.clamp(0.0, 255.0).round() as u8),
    );
    fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma`,
/// deterministically from `rng.seed`.
pub fn add_gaussian_noise(img: &ImageGrid, sigma: f64, rng: &RngSpec) -> Result<ImageGrid> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidRngSpec(format!(
            "noise sigma must be positive, got {sigma}"
        )));
    }
    let mut r = rng.rng();
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let pixels = img
        .pixels()
        .iter()
        .map(|&v| v + normal.sample(&mut r))
        .collect();
    ImageGrid::new(img.width(), img.height(), pixels)
}

fn skip_whitespace_and_comments(data: &[u8], pos: &mut usize) {
    while *pos < data.len() {
        let b = data[*pos];
        if b.is_ascii_whitespace() {
            *pos += 1;
        } else if b == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

fn try_read_header_int(data: &[u8], pos: &mut usize) -> Option<usize> {
    skip_whitespace_and_comments(data, pos);
    let start = *pos;
    while *pos < data.len() && data[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return None;
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
}

fn read_header_int(data: &[u8], pos: &mut usize) -> Result<usize> {
    try_read_header_int(data, pos)
        .ok_or_else(|| Error::MalformedHeader("expected unsigned integer".into()))
}
