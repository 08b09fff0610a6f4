//! Pipeline configuration: defaults, `key = value` config files, and CLI
//! overrides.

use std::path::{Path, PathBuf};

use grader_core::curvelet::CurveletConfig;

use crate::error::{CliError, Result};

/// How the correspondence analysis treats test rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaMode {
    /// Train and test rows are all active in the fit.
    AllActive,
    /// Only train rows are active; test rows are projected.
    TrainActive,
}

impl std::str::FromStr for CaMode {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_active" => Ok(CaMode::AllActive),
            "train_active" => Ok(CaMode::TrainActive),
            other => Err(CliError::config(format!(
                "ca mode {other:?} (expected all_active or train_active)"
            ))),
        }
    }
}

impl std::fmt::Display for CaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaMode::AllActive => write!(f, "all_active"),
            CaMode::TrainActive => write!(f, "train_active"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub wavelet_scales: usize,
    pub curvelet_config_path: Option<PathBuf>,
    pub curvelet: CurveletConfig,
    pub histogram_bins: usize,
    pub knn_k: usize,
    pub sweep_min: usize,
    /// None means "up to the factor count K".
    pub sweep_max: Option<usize>,
    pub ca_mode: CaMode,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            wavelet_scales: 5,
            curvelet_config_path: None,
            curvelet: CurveletConfig::default(),
            histogram_bins: 100,
            knn_k: 1,
            sweep_min: 2,
            sweep_max: None,
            ca_mode: CaMode::AllActive,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Loads a plain-text config: one `key = value` per line, `#` comments.
    /// Keys: `wavelet_scales`, `curvelet_config`, `histogram_bins`, `k`,
    /// `sweep_min`, `sweep_max`, `ca_mode`, `seed`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {path:?}: {e}")))?;
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!(
                    "{path:?} line {}: expected key = value",
                    lineno + 1
                ))
            })?;
            cfg.apply(key.trim(), value.trim()).map_err(|e| {
                CliError::config(format!("{path:?} line {}: {e}", lineno + 1))
            })?;
        }
        cfg.resolve_curvelet(path.parent())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| CliError::config(format!("bad integer {v:?}")))
        };
        match key {
            "wavelet_scales" => self.wavelet_scales = parse_usize(value)?,
            "curvelet_config" => self.curvelet_config_path = Some(PathBuf::from(value)),
            "histogram_bins" => self.histogram_bins = parse_usize(value)?,
            "k" => self.knn_k = parse_usize(value)?,
            "sweep_min" => self.sweep_min = parse_usize(value)?,
            "sweep_max" => self.sweep_max = Some(parse_usize(value)?),
            "ca_mode" => self.ca_mode = value.parse()?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| CliError::config(format!("bad seed {value:?}")))?
            }
            other => return Err(CliError::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Loads the curvelet config file if one was named, resolving relative
    /// paths against `base`.
    pub fn resolve_curvelet(&mut self, base: Option<&Path>) -> Result<()> {
        if let Some(path) = &self.curvelet_config_path {
            let full = match base {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            let text = std::fs::read_to_string(&full).map_err(|e| {
                CliError::config(format!("cannot read curvelet config {full:?}: {e}"))
            })?;
            self.curvelet = CurveletConfig::from_key_values(&text)
                .map_err(|e| CliError::config(format!("{full:?}: {e}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelet_scales == 0 {
            return Err(CliError::config("wavelet_scales must be >= 1"));
        }
        if self.histogram_bins != 100 {
            return Err(CliError::config(format!(
                "histogram_bins = {} unsupported (the fit tables use 100 bins)",
                self.histogram_bins
            )));
        }
        if self.knn_k == 0 {
            return Err(CliError::config("k must be >= 1"));
        }
        if self.sweep_min == 0 {
            return Err(CliError::config("sweep_min must be >= 1"));
        }
        if let Some(max) = self.sweep_max {
            if max < self.sweep_min {
                return Err(CliError::config(format!(
                    "sweep range {}..{max} is empty",
                    self.sweep_min
                )));
            }
        }
        self.curvelet
            .validate()
            .map_err(|e| CliError::config(e.to_string()))
    }
}
