//! Blockwise ridgelet transform: a pseudo-polar FFT-based Radon transform
//! followed by a 1-D wavelet transform along each constant-angle slice.
//!
//! For a B x B block the pseudo-polar grid has 2B lines through the origin
//! of the B x B spectrum: B "basically vertical" lines with slopes 2l/B in
//! [-1, 1) sampled as (round(s*k), k), and B "basically horizontal" lines
//! with slopes in (-1, 1] sampled as (k, round(s*k)). Line spectra are
//! gathered by nearest-neighbor lookup, zero-padded by a factor of 2 (split
//! Nyquist) and inverse transformed, giving one real Radon slice of length
//! 2B per angle. Slices are scaled so each sums to the block's total mass.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Radon data for one block: one slice of length `2B` per angle.
#[derive(Debug, Clone)]
pub struct RadonSlices {
    pub block_size: usize,
    pub slices: Vec<Vec<f64>>,
}

impl RadonSlices {
    pub fn angles(&self) -> usize {
        self.slices.len()
    }
}

/// Ridgelet coefficients: per 1-D wavelet scale, an (angle x position)
/// array of shape (2B, 2B). `bands[depth]` is the smooth band.
#[derive(Debug, Clone)]
pub struct RidgeletCoeffs {
    pub depth: usize,
    pub bands: Vec<Vec<Vec<f64>>>,
}

/// Reusable FFT plans and the pseudo-polar sample table for one block size.
pub struct BlockTransform {
    block_size: usize,
    fft_b: Arc<dyn Fft<f64>>,
    ifft_2b: Arc<dyn Fft<f64>>,
    /// Per line, per radial index: position in the flattened B x B spectrum.
    lines: Vec<Vec<usize>>,
}

/// Reusable buffers for block processing; one per worker thread.
pub struct BlockScratch {
    spectrum: Vec<Complex<f64>>,
    column: Vec<Complex<f64>>,
    line: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
    current: Vec<f64>,
    smoothed: Vec<f64>,
    detail: Vec<f64>,
}

impl BlockTransform {
    /// Builds plans for blocks of size `block_size` (a power of two >= 4).
    pub fn new(block_size: usize) -> Result<Self> {
        if block_size < 4 || !block_size.is_power_of_two() {
            return Err(Error::NonPowerOfTwoBlock(block_size));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            block_size,
            fft_b: planner.plan_fft(block_size, FftDirection::Forward),
            ifft_2b: planner.plan_fft(2 * block_size, FftDirection::Inverse),
            lines: pseudo_polar_lines(block_size),
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn angles(&self) -> usize {
        2 * self.block_size
    }

    pub fn make_scratch(&self) -> BlockScratch {
        let b = self.block_size;
        let fft_len = self
            .fft_b
            .get_inplace_scratch_len()
            .max(self.ifft_2b.get_inplace_scratch_len());
        BlockScratch {
            spectrum: vec![Complex::new(0.0, 0.0); b * b],
            column: vec![Complex::new(0.0, 0.0); b],
            line: vec![Complex::new(0.0, 0.0); 2 * b],
            fft: vec![Complex::new(0.0, 0.0); fft_len],
            current: vec![0.0; 2 * b],
            smoothed: vec![0.0; 2 * b],
            detail: vec![0.0; 2 * b],
        }
    }

    /// Radon slices of one B x B block.
    pub fn radon(&self, block: &ImageGrid) -> Result<RadonSlices> {
        let b = self.check_block(block)?;
        let mut scratch = self.make_scratch();
        self.spectrum_into(block, 0, 0, &mut scratch);
        let slices = (0..self.angles())
            .map(|angle| {
                self.slice_into(angle, &mut scratch);
                scratch.current.clone()
            })
            .collect();
        Ok(RadonSlices {
            block_size: b,
            slices,
        })
    }

    /// Full block ridgelet: Radon slices analyzed by a 1-D wavelet
    /// transform of the given depth along the position axis.
    pub fn ridgelet(&self, block: &ImageGrid, depth: usize) -> Result<RidgeletCoeffs> {
        self.check_block(block)?;
        let mut scratch = self.make_scratch();
        let two_b = 2 * self.block_size;
        let mut bands = vec![vec![vec![0.0; two_b]; self.angles()]; depth + 1];
        self.ridgelet_each(block, 0, 0, depth, &mut scratch, |band, angle, coeffs| {
            bands[band][angle].copy_from_slice(coeffs);
        })?;
        Ok(RidgeletCoeffs { depth, bands })
    }

    /// Streaming block ridgelet over the block at offset (x0, y0) of `img`:
    /// `sink(band, angle, coefficients)` is called for every detail band
    /// (0-based, in scale order) and finally for the smooth band `depth`.
    pub fn ridgelet_each(
        &self,
        img: &ImageGrid,
        x0: usize,
        y0: usize,
        depth: usize,
        scratch: &mut BlockScratch,
        mut sink: impl FnMut(usize, usize, &[f64]),
    ) -> Result<()> {
        let max = max_depth(self.block_size);
        if depth == 0 || depth > max {
            return Err(Error::ExcessiveDepth {
                depth,
                max,
                block: self.block_size,
            });
        }
        self.spectrum_into(img, x0, y0, scratch);
        for angle in 0..self.angles() {
            self.slice_into(angle, scratch);
            for j in 1..=depth {
                let step = 1usize << (j - 1);
                crate::atrous::convolve_b3(&scratch.current, step, &mut scratch.smoothed);
                for ((d, c), s) in scratch
                    .detail
                    .iter_mut()
                    .zip(&scratch.current)
                    .zip(&scratch.smoothed)
                {
                    *d = c - s;
                }
                sink(j - 1, angle, &scratch.detail);
                std::mem::swap(&mut scratch.current, &mut scratch.smoothed);
            }
            sink(depth, angle, &scratch.current);
        }
        Ok(())
    }

    fn check_block(&self, block: &ImageGrid) -> Result<usize> {
        let b = self.block_size;
        if block.width() != b || block.height() != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                actual: block.width().max(block.height()),
            });
        }
        Ok(b)
    }

    /// Row-column FFT of the B x B block at (x0, y0) into scratch.spectrum.
    fn spectrum_into(&self, img: &ImageGrid, x0: usize, y0: usize, scratch: &mut BlockScratch) {
        let b = self.block_size;
        for y in 0..b {
            let row = &img.row(y0 + y)[x0..x0 + b];
            for (dst, &v) in scratch.spectrum[y * b..(y + 1) * b].iter_mut().zip(row) {
                *dst = Complex::new(v, 0.0);
            }
        }
        for row in scratch.spectrum.chunks_exact_mut(b) {
            self.fft_b.process_with_scratch(row, &mut scratch.fft);
        }
        for x in 0..b {
            for y in 0..b {
                scratch.column[y] = scratch.spectrum[y * b + x];
            }
            self.fft_b
                .process_with_scratch(&mut scratch.column, &mut scratch.fft);
            for y in 0..b {
                scratch.spectrum[y * b + x] = scratch.column[y];
            }
        }
    }

    /// Gathers one pseudo-polar line from scratch.spectrum, zero-pads it by
    /// a factor of 2 and inverse transforms; the real Radon slice lands in
    /// scratch.current.
    fn slice_into(&self, angle: usize, scratch: &mut BlockScratch) {
        let b = self.block_size;
        let two_b = 2 * b;
        let half = b / 2;
        let scale = 1.0 / two_b as f64;
        scratch.line.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        // Radial indices k = -B/2 .. B/2-1 land at (k mod 2B); the Nyquist
        // sample k = -B/2 is split between +B/2 and -B/2 so the padded
        // spectrum stays conjugate-symmetric.
        for (j, &src) in self.lines[angle].iter().enumerate() {
            let k = j as isize - half as isize;
            let v = scratch.spectrum[src];
            if k == -(half as isize) {
                scratch.line[two_b - half] = 0.5 * v;
                scratch.line[half] = 0.5 * v.conj();
            } else {
                let dst = k.rem_euclid(two_b as isize) as usize;
                scratch.line[dst] = v;
            }
        }
        self.ifft_2b
            .process_with_scratch(&mut scratch.line, &mut scratch.fft);
        for (out, c) in scratch.current.iter_mut().zip(&scratch.line) {
            *out = c.re * scale;
        }
    }
}

/// Largest wavelet depth whose dilated kernel fits a slice of length 2B.
pub fn max_depth(block_size: usize) -> usize {
    (2 * block_size).trailing_zeros() as usize - 1
}

/// Radon transform of one block; convenience over [`BlockTransform`].
pub fn radon_block(block: &ImageGrid) -> Result<RadonSlices> {
    BlockTransform::new(block.width())?.radon(block)
}

/// Block ridgelet transform; convenience over [`BlockTransform`].
pub fn ridgelet_block(block: &ImageGrid, depth: usize) -> Result<RidgeletCoeffs> {
    BlockTransform::new(block.width())?.ridgelet(block, depth)
}

/// Sum of squared slice values per angle.
pub fn angle_energies(radon: &RadonSlices) -> Vec<f64> {
    radon
        .slices
        .iter()
        .map(|s| s.iter().map(|v| v * v).sum())
        .collect()
}

/// Nearest-neighbor sample positions for the 2B pseudo-polar lines.
///
/// Lines 0..B are "basically vertical" with slopes 2l/B in [-1, 1); lines
/// B..2B are "basically horizontal" with the axes swapped and slopes in
/// (-1, 1], so each diagonal is covered exactly once. Rounding is
/// half-away-from-zero, which keeps the sample set odd-symmetric so slices
/// come out real.
fn pseudo_polar_lines(b: usize) -> Vec<Vec<usize>> {
    let half = b as isize / 2;
    let mut lines = Vec::with_capacity(2 * b);
    let grid = |f: isize, second: isize| -> usize {
        let p = f.rem_euclid(b as isize) as usize;
        let q = second.rem_euclid(b as isize) as usize;
        q * b + p
    };
    // Slopes 2l/B in [-1, 1).
    for l in -half..half {
        let slope = 2.0 * l as f64 / b as f64;
        let mut table = Vec::with_capacity(b);
        for k in -half..half {
            let p = (slope * k as f64).round() as isize;
            table.push(grid(p, k));
        }
        lines.push(table);
    }
    // Slopes 2l/B in (-1, 1], axes swapped.
    for l in (-half + 1)..=half {
        let slope = 2.0 * l as f64 / b as f64;
        let mut table = Vec::with_capacity(b);
        for k in -half..half {
            let q = (slope * k as f64).round() as isize;
            table.push(grid(k, q));
        }
        lines.push(table);
    }
    lines
}

/// Index of the pseudo-polar line where a spatial ridge stepping (dx, dy)
/// per unit concentrates: its spectrum lies on the frequency line with
/// direction (-dy, dx).
pub fn line_index_for_direction(b: usize, dx: f64, dy: f64) -> usize {
    let half = b as isize / 2;
    let (vx, vy) = (-dy, dx);
    let vertical = if vy.abs() != vx.abs() {
        vy.abs() > vx.abs()
    } else {
        // Diagonals: slope -1 sits in the vertical family, +1 in the other.
        vx * vy < 0.0
    };
    if vertical {
        let l = (vx / vy * b as f64 / 2.0).round() as isize;
        (l.clamp(-half, half - 1) + half) as usize
    } else {
        let l = (vy / vx * b as f64 / 2.0).round() as isize;
        (b as isize + l.clamp(-half + 1, half) + half - 1) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block(b: usize, seed: u64) -> ImageGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageGrid::from_fn(b, b, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(
            BlockTransform::new(12),
            Err(Error::NonPowerOfTwoBlock(12))
        ));
    }

    #[test]
    fn zero_block_gives_zero_slices() {
        let block = ImageGrid::constant(16, 16, 0.0).unwrap();
        let radon = radon_block(&block).unwrap();
        assert_eq!(radon.angles(), 32);
        assert!(radon.slices.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn constant_block_slices_are_constant_with_mass_preserved() {
        let c = 3.25;
        let block = ImageGrid::constant(16, 16, c).unwrap();
        let radon = radon_block(&block).unwrap();
        let mass = c * 256.0;
        for slice in &radon.slices {
            assert_eq!(slice.len(), 32);
            let first = slice[0];
            assert!(slice.iter().all(|v| (v - first).abs() < 1e-9));
            let total: f64 = slice.iter().sum();
            assert!((total - mass).abs() < 1e-8 * mass.abs(), "line mass {total}");
        }
    }

    #[test]
    fn every_slice_preserves_mass() {
        let block = random_block(16, 3);
        let mass: f64 = block.pixels().iter().sum();
        let radon = radon_block(&block).unwrap();
        for slice in &radon.slices {
            let total: f64 = slice.iter().sum();
            assert!((total - mass).abs() < 1e-9 * (1.0 + mass.abs()));
        }
    }

    #[test]
    fn horizontal_line_peaks_in_matching_slice() {
        // One bright horizontal row: the matching direction's slice must
        // have the largest peak-to-median ratio of all slices.
        let mut block = ImageGrid::constant(16, 16, 0.0).unwrap();
        for x in 0..16 {
            block.set(x, 7, 1.0);
        }
        let radon = radon_block(&block).unwrap();
        let expected = line_index_for_direction(16, 1.0, 0.0);
        let ratios: Vec<f64> = radon
            .slices
            .iter()
            .map(|s| {
                let peak = s.iter().cloned().fold(f64::MIN, f64::max);
                let mut sorted = s.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = sorted[sorted.len() / 2];
                peak / median.abs().max(1e-9)
            })
            .collect();
        let argmax = ratios
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, expected);
    }

    #[test]
    fn energy_matches_direct_dft_of_sampled_lines() {
        // Oracle: brute-force 2-D DFT, re-sample the pseudo-polar points,
        // and compare (sampled energy)/(2B) against the slice energy.
        let b = 8usize;
        let block = random_block(b, 17);
        let radon = radon_block(&block).unwrap();

        // Direct O(n^4) DFT.
        let mut spectrum = vec![Complex::new(0.0, 0.0); b * b];
        for q in 0..b {
            for p in 0..b {
                let mut acc = Complex::new(0.0, 0.0);
                for y in 0..b {
                    for x in 0..b {
                        let phase = -2.0 * std::f64::consts::PI
                            * (p as f64 * x as f64 + q as f64 * y as f64)
                            / b as f64;
                        acc += Complex::new(0.0, phase).exp() * block.get(x, y);
                    }
                }
                spectrum[q * b + p] = acc;
            }
        }
        // Table entry 0 is the radial Nyquist sample, which the transform
        // splits across +/-B/2; it contributes half its energy.
        let sampled_energy: f64 = pseudo_polar_lines(b)
            .iter()
            .map(|table| {
                table
                    .iter()
                    .enumerate()
                    .map(|(j, &idx)| {
                        let w = if j == 0 { 0.5 } else { 1.0 };
                        w * spectrum[idx].norm_sqr()
                    })
                    .sum::<f64>()
            })
            .sum();

        let slice_energy: f64 = radon
            .slices
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum();
        let expected = sampled_energy / (2.0 * b as f64);
        assert!(
            (slice_energy - expected).abs() < 1e-6 * expected.abs().max(1.0),
            "slice energy {slice_energy} vs expected {expected}"
        );
    }

    #[test]
    fn rotation_by_90_degrees_permutes_angle_energies() {
        let b = 16usize;
        let block = random_block(b, 29);
        let rotated = ImageGrid::from_fn(b, b, |x, y| block.get(y, b - 1 - x)).unwrap();
        let e0 = angle_energies(&radon_block(&block).unwrap());
        let e1 = angle_energies(&radon_block(&rotated).unwrap());
        let mut s0 = e0.clone();
        let mut s1 = e1.clone();
        s0.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in s0.iter().zip(&s1) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn ridgelet_linearity() {
        let b = 16;
        let x = random_block(b, 41);
        let y = random_block(b, 42);
        let combo =
            ImageGrid::from_fn(b, b, |i, j| 1.5 * x.get(i, j) + 0.5 * y.get(i, j)).unwrap();
        let rx = ridgelet_block(&x, 3).unwrap();
        let ry = ridgelet_block(&y, 3).unwrap();
        let rc = ridgelet_block(&combo, 3).unwrap();
        for band in 0..4 {
            for angle in 0..2 * b {
                for pos in 0..2 * b {
                    let expect =
                        1.5 * rx.bands[band][angle][pos] + 0.5 * ry.bands[band][angle][pos];
                    assert!((rc.bands[band][angle][pos] - expect).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn bands_reconstruct_radon_slices() {
        let block = random_block(16, 53);
        let radon = radon_block(&block).unwrap();
        let coeffs = ridgelet_block(&block, 4).unwrap();
        for (angle, slice) in radon.slices.iter().enumerate() {
            for pos in 0..slice.len() {
                let rec: f64 = coeffs.bands.iter().map(|band| band[angle][pos]).sum();
                assert!((rec - slice[pos]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_block_detail_bands_vanish() {
        let block = ImageGrid::constant(16, 16, 2.0).unwrap();
        let coeffs = ridgelet_block(&block, 3).unwrap();
        for band in &coeffs.bands[..3] {
            assert!(band.iter().flatten().all(|v| v.abs() < 1e-9));
        }
        let smooth_mass: f64 = coeffs.bands[3].iter().flatten().sum();
        let radon_mass: f64 = radon_block(&block)
            .unwrap()
            .slices
            .iter()
            .flatten()
            .sum();
        assert!((smooth_mass - radon_mass).abs() < 1e-6 * radon_mass.abs());
    }

    #[test]
    fn diagonal_line_energy_near_diagonal_index() {
        // Bright anti-diagonal; detail-band energy must peak within one
        // angular index of the matching pseudo-polar line.
        let b = 16usize;
        let mut block = ImageGrid::constant(b, b, 0.0).unwrap();
        for t in 0..b {
            block.set(t, t, 1.0);
        }
        let expected = line_index_for_direction(b, 1.0, 1.0) as isize;
        let coeffs = ridgelet_block(&block, 3).unwrap();
        let mut energies = vec![0.0; 2 * b];
        for band in &coeffs.bands[..3] {
            for (angle, row) in band.iter().enumerate() {
                energies[angle] += row.iter().map(|v| v * v).sum::<f64>();
            }
        }
        let argmax = energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0 as isize;
        assert!(
            (argmax - expected).abs() <= 1,
            "argmax {argmax}, expected {expected}"
        );
    }

    #[test]
    fn depth_guard() {
        let block = ImageGrid::constant(16, 16, 0.0).unwrap();
        assert!(ridgelet_block(&block, 4).is_ok());
        assert!(matches!(
            ridgelet_block(&block, 5),
            Err(Error::ExcessiveDepth { .. })
        ));
    }
}
