//! Dataset specifications and synthetic dataset generation.
//!
//! A dataset spec is a plain-text file:
//!
//! ```text
//! size = 512
//! train_per_class = 50
//! test_per_class = 100
//! noise_sigmas = 10, 20        # optional; one drawn per image
//! class fine   = disks(radius_mean=3, radius_sd=0.6, count=420)
//! class coarse = disks(radius_mean=12, radius_sd=1.5, count=40)
//! ```
//!
//! Generation is deterministic in the base seed: every image derives its
//! own seed from (base, class index, split, image index).

use std::path::Path;

use grader_core::image::{add_gaussian_noise, write_pgm, RngSpec};
use grader_core::synth::{synth_texture, TextureSpec};

use crate::error::{CliError, Result};
use crate::manifest::{write_manifest, ManifestEntry};

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub size: (usize, usize),
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub noise_sigmas: Vec<f64>,
    pub classes: Vec<(String, TextureSpec)>,
}

impl DatasetSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut size = (512usize, 512usize);
        let mut train_per_class = 50usize;
        let mut test_per_class = 100usize;
        let mut noise_sigmas = Vec::new();
        let mut classes = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad =
                |what: &str| CliError::config(format!("line {}: bad {what}: {value:?}", lineno + 1));
            if let Some(name) = key.strip_prefix("class ") {
                let spec = TextureSpec::parse(value)
                    .map_err(|e| CliError::config(format!("line {}: {e}", lineno + 1)))?;
                classes.push((name.trim().to_string(), spec));
            } else {
                match key {
                    "size" => {
                        size = match value.split_once('x') {
                            Some((w, h)) => (
                                w.trim().parse().map_err(|_| bad("size"))?,
                                h.trim().parse().map_err(|_| bad("size"))?,
                            ),
                            None => {
                                let s = value.parse().map_err(|_| bad("size"))?;
                                (s, s)
                            }
                        }
                    }
                    "train_per_class" => {
                        train_per_class = value.parse().map_err(|_| bad("integer"))?
                    }
                    "test_per_class" => test_per_class = value.parse().map_err(|_| bad("integer"))?,
                    "noise_sigmas" => {
                        noise_sigmas = value
                            .split(',')
                            .map(|v| v.trim().parse::<f64>().map_err(|_| bad("sigma list")))
                            .collect::<Result<_>>()?
                    }
                    other => {
                        return Err(CliError::config(format!(
                            "line {}: unknown key {other:?}",
                            lineno + 1
                        )))
                    }
                }
            }
        }

        if classes.is_empty() {
            return Err(CliError::config("dataset spec declares no classes"));
        }
        if noise_sigmas.iter().any(|s| *s <= 0.0) {
            return Err(CliError::config("noise sigmas must be positive"));
        }
        Ok(Self {
            size,
            train_per_class,
            test_per_class,
            noise_sigmas,
            classes,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read dataset spec {path:?}: {e}")))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::config(format!("{path:?}: {msg}")),
            other => other,
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-image seed streams derived from the base seed.
fn derive_seed(base: u64, class: usize, split: u64, index: usize, stream: u64) -> u64 {
    let mut z = splitmix64(base);
    z = splitmix64(z ^ (class as u64).wrapping_mul(0x9E37_79B9));
    z = splitmix64(z ^ split);
    z = splitmix64(z ^ index as u64);
    splitmix64(z ^ stream)
}

/// Manifests produced by [`cmd_synth`].
pub struct SynthOutput {
    pub manifest_all: std::path::PathBuf,
    pub manifest_train: std::path::PathBuf,
    pub manifest_test: std::path::PathBuf,
    pub images_written: usize,
}

/// Generates the dataset on disk: PGM images under `<out>/images/` plus
/// `manifest.csv`, `manifest_train.csv` and `manifest_test.csv`.
pub fn cmd_synth(spec: &DatasetSpec, out_dir: &Path, seed: u64) -> Result<SynthOutput> {
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir)
        .map_err(|e| CliError::io(format!("creating {images_dir:?}"), e))?;

    let mut train = Vec::new();
    let mut test = Vec::new();

    for (class_idx, (label, texture)) in spec.classes.iter().enumerate() {
        for (split_name, split_tag, count, sink) in [
            ("train", 0u64, spec.train_per_class, &mut train),
            ("test", 1u64, spec.test_per_class, &mut test),
        ] {
            for index in 0..count {
                let id = format!("{label}_{split_name}_{index:03}");
                let texture_seed = derive_seed(seed, class_idx, split_tag, index, 0);
                let mut img = synth_texture(
                    texture,
                    spec.size,
                    &RngSpec::uniform(texture_seed, 0.0, 1.0)
                        .map_err(|e| CliError::data(id.clone(), e))?,
                )
                .map_err(|e| CliError::data(id.clone(), e))?;

                if !spec.noise_sigmas.is_empty() {
                    let pick = derive_seed(seed, class_idx, split_tag, index, 1);
                    let sigma = spec.noise_sigmas[(pick % spec.noise_sigmas.len() as u64) as usize];
                    let noise_seed = derive_seed(seed, class_idx, split_tag, index, 2);
                    img = add_gaussian_noise(
                        &img,
                        sigma,
                        &RngSpec::gaussian(noise_seed, 0.0, sigma)
                            .map_err(|e| CliError::data(id.clone(), e))?,
                    )
                    .map_err(|e| CliError::data(id.clone(), e))?;
                }

                let path = images_dir.join(format!("{id}.pgm"));
                write_pgm(&img, &path).map_err(|e| CliError::data(id.clone(), e))?;
                sink.push(ManifestEntry {
                    id,
                    label: Some(label.clone()),
                    path,
                });
            }
        }
    }

    let manifest_train = out_dir.join("manifest_train.csv");
    let manifest_test = out_dir.join("manifest_test.csv");
    let manifest_all = out_dir.join("manifest.csv");
    write_manifest(&train, &manifest_train)?;
    write_manifest(&test, &manifest_test)?;
    let mut all = train.clone();
    all.extend(test.iter().cloned());
    write_manifest(&all, &manifest_all)?;

    Ok(SynthOutput {
        manifest_all,
        manifest_train,
        manifest_test,
        images_written: all.len(),
    })
}
