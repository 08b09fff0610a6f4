//! `grader`: grade grayscale images by moments of wavelet and curvelet
//! coefficients.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grader_cli::config::PipelineConfig;
use grader_cli::dataset::{cmd_synth, DatasetSpec};
use grader_cli::pipeline::{
    cmd_features, cmd_pipeline, fit_factor_space, parse_factor_csv,
};
use grader_cli::{CliError, Result};

use grader_core::atrous::{atrous_2d, write_flat_f64};
use grader_core::ca::model_to_text;
use grader_core::curvelet::curvelet_transform;
use grader_core::distfit::{compare_fits, fit_table_csv};
use grader_core::features::parse_feature_csv;
use grader_core::image::{read_pgm, write_pgm, ImageGrid};
use grader_core::knn::{confusion, dimension_sweep};
use grader_core::ridgelet::{angle_energies, BlockTransform};

#[derive(Parser)]
#[command(
    name = "grader",
    about = "Image grading by wavelet/curvelet moment features, correspondence analysis and k-NN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Curvelet config file overriding the default band schedule.
    #[arg(long)]
    curvelet_config: Option<PathBuf>,
    /// Base seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Neighbor count for classification.
    #[arg(long)]
    k: Option<usize>,
    /// Factor dimension range for sweeps, as `MIN..MAX`.
    #[arg(long)]
    dims: Option<String>,
    /// Correspondence-analysis mode: all_active or train_active.
    #[arg(long)]
    ca_mode: Option<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(path) = &self.curvelet_config {
            cfg.curvelet_config_path = Some(path.clone());
            cfg.resolve_curvelet(None)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(k) = self.k {
            cfg.knn_k = k;
        }
        if let Some(dims) = &self.dims {
            let (lo, hi) = parse_dims(dims)?;
            cfg.sweep_min = lo;
            cfg.sweep_max = hi;
        }
        if let Some(mode) = &self.ca_mode {
            cfg.ca_mode = mode.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_dims(text: &str) -> Result<(usize, Option<usize>)> {
    let err = || CliError::config(format!("bad --dims {text:?}, expected MIN..MAX or a single D"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo = lo.trim().parse().map_err(|_| err())?;
        let hi = if hi.trim().is_empty() {
            None
        } else {
            Some(hi.trim().parse().map_err(|_| err())?)
        };
        Ok((lo, hi))
    } else {
        let d = text.trim().parse().map_err(|_| err())?;
        Ok((d, Some(d)))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a dataset spec file.
    Synth {
        /// Dataset spec file.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for images and manifests.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Decompose one image and dump wavelet scales (and curvelet bands).
    Transform {
        /// Input PGM image.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for dumps.
        #[arg(long)]
        out: PathBuf,
        /// Number of wavelet detail scales.
        #[arg(long, default_value_t = 5)]
        scales: usize,
        /// Also dump curvelet bands (flat binary).
        #[arg(long)]
        curvelet: bool,
        /// Dump per-angle ridgelet energies per scale as CSV.
        #[arg(long)]
        angle_energies: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Extract 72-entry feature vectors for every manifest image.
    Features {
        /// Manifest CSV (id,label,path).
        #[arg(long)]
        manifest: PathBuf,
        /// Output feature CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fit Gaussian and Lorentzian peaks to wavelet-scale histograms.
    Fitdist {
        /// Input PGM image.
        #[arg(long)]
        input: PathBuf,
        /// Number of wavelet detail scales.
        #[arg(long, default_value_t = 5)]
        scales: usize,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correspondence analysis of a feature CSV.
    Ca {
        /// Input feature CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output directory (factors.csv, model.txt).
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify test factors against training factors at a fixed dimension.
    Classify {
        /// Training factor CSV.
        #[arg(long)]
        train: PathBuf,
        /// Test factor CSV.
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Sweep factor dimensions and report total correct per dimension.
    Sweep {
        /// Training factor CSV.
        #[arg(long)]
        train: PathBuf,
        /// Test factor CSV.
        #[arg(long)]
        test: PathBuf,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Full pipeline: features, CA, sweep, confusion and contributions.
    Pipeline {
        /// Training manifest CSV.
        #[arg(long)]
        train_manifest: PathBuf,
        /// Test manifest CSV.
        #[arg(long)]
        test_manifest: PathBuf,
        /// Output directory for all artifacts.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { input, out, config } => {
            let cfg = config.build()?;
            let spec = DatasetSpec::load(&input)?;
            let result = cmd_synth(&spec, &out, cfg.seed)?;
            println!(
                "wrote {} images; manifests: {}, {}, {}",
                result.images_written,
                result.manifest_all.display(),
                result.manifest_train.display(),
                result.manifest_test.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Transform {
            input,
            out,
            scales,
            curvelet,
            angle_energies: dump_energies,
            config,
        } => {
            let cfg = config.build()?;
            run_transform(&input, &out, scales, curvelet, dump_energies, &cfg)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Features { manifest, out, config } => {
            let cfg = config.build()?;
            let run = cmd_features(&manifest, &out, &cfg)?;
            println!(
                "wrote {} feature rows to {}",
                run.vectors.len(),
                out.display()
            );
            if run.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for (id, err) in &run.failures {
                    eprintln!("failed {id}: {err}");
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Fitdist { input, scales, out } => {
            let img = read_pgm(&input).map_err(|e| CliError::data(input.display().to_string(), e))?;
            let rows = compare_fits(&img, scales)
                .map_err(|e| CliError::data("distribution fits", e))?;
            let csv = fit_table_csv(&rows);
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .map_err(|e| CliError::io(format!("writing {path:?}"), e))?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ca { input, out } => {
            run_ca(&input, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify { train, test, config } => {
            let cfg = config.build()?;
            let train_points = load_factors(&train)?;
            let test_points = load_factors(&test)?;
            let d = cfg.sweep_max.unwrap_or(train_points.dims());
            let matrix = confusion(&train_points, &test_points, d, cfg.knn_k)
                .map_err(|e| CliError::data("classification", e))?;
            println!("d = {d}, k = {}", cfg.knn_k);
            print!("{}", matrix.to_text());
            println!("correct: {}/{}", matrix.correct(), matrix.total());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { train, test, out, config } => {
            let cfg = config.build()?;
            let train_points = load_factors(&train)?;
            let test_points = load_factors(&test)?;
            let k_total = train_points.dims().min(test_points.dims());
            let dmin = cfg.sweep_min.min(k_total).max(1);
            let dmax = cfg.sweep_max.unwrap_or(k_total).min(k_total);
            let sweep = dimension_sweep(&train_points, &test_points, dmin, dmax, cfg.knn_k)
                .map_err(|e| CliError::data("dimension sweep", e))?;
            let mut csv = String::from("d,total_correct\n");
            for (d, correct) in sweep {
                csv.push_str(&format!("{d},{correct}\n"));
            }
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .map_err(|e| CliError::io(format!("writing {path:?}"), e))?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Pipeline {
            train_manifest,
            test_manifest,
            out,
            config,
        } => {
            let cfg = config.build()?;
            let report = cmd_pipeline(&train_manifest, &test_manifest, &out, &cfg)?;
            println!(
                "best subspace d = {} with {}/{} correct (raw space: {}/{})",
                report.best_dimension,
                report.best_correct,
                report.test_size,
                report.raw_correct,
                report.test_size
            );
            println!("artifacts in {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_factors(path: &Path) -> Result<grader_core::knn::LabeledPoints> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {path:?}"), e))?;
    parse_factor_csv(&text)
}

fn run_transform(
    input: &Path,
    out: &Path,
    scales: usize,
    dump_curvelet: bool,
    dump_energies: bool,
    cfg: &PipelineConfig,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {out:?}"), e))?;
    let img = read_pgm(input).map_err(|e| CliError::data(input.display().to_string(), e))?;
    let decomposition =
        atrous_2d(&img, scales).map_err(|e| CliError::data("wavelet transform", e))?;

    let mut arrays: Vec<(String, &ImageGrid)> = decomposition
        .scales
        .iter()
        .enumerate()
        .map(|(i, scale)| (format!("scale_{}", i + 1), scale))
        .collect();
    arrays.push(("smooth".to_string(), &decomposition.smooth));
    for (name, grid) in arrays {
        write_flat_f64(
            grid.width(),
            grid.height(),
            grid.pixels(),
            out.join(format!("{name}.f64")),
        )
        .map_err(|e| CliError::data(format!("dumping {name}"), e))?;
        write_pgm(&rescale_for_display(grid), out.join(format!("{name}.pgm")))
            .map_err(|e| CliError::data(format!("dumping {name}"), e))?;
    }

    if dump_curvelet {
        let bands = curvelet_transform(&img, &cfg.curvelet)
            .map_err(|e| CliError::data("curvelet transform", e))?;
        for (i, (band, label)) in bands.bands.iter().zip(&bands.band_labels).enumerate() {
            let name = format!("curvelet_{:02}_s{}r{}.f64", i + 1, label.0, label.1);
            write_flat_f64(band.len(), 1, band, out.join(&name))
                .map_err(|e| CliError::data(format!("dumping {name}"), e))?;
        }
    }

    if dump_energies {
        let mut csv = String::from("scale,angle,energy\n");
        for (idx, scale) in decomposition.scales.iter().enumerate() {
            let block_size = cfg.curvelet.block_size(idx + 1);
            if scale.width() % block_size != 0 || scale.height() % block_size != 0 {
                return Err(CliError::config(format!(
                    "scale {} not divisible by block {block_size}",
                    idx + 1
                )));
            }
            let transform = BlockTransform::new(block_size)
                .map_err(|e| CliError::data("ridgelet", e))?;
            let mut totals = vec![0.0f64; transform.angles()];
            for by in 0..scale.height() / block_size {
                for bx in 0..scale.width() / block_size {
                    let block = ImageGrid::from_fn(block_size, block_size, |x, y| {
                        scale.get(bx * block_size + x, by * block_size + y)
                    })
                    .expect("block dims");
                    let radon = transform
                        .radon(&block)
                        .map_err(|e| CliError::data("radon", e))?;
                    for (total, energy) in totals.iter_mut().zip(angle_energies(&radon)) {
                        *total += energy;
                    }
                }
            }
            for (angle, total) in totals.iter().enumerate() {
                csv.push_str(&format!("{},{angle},{total:.8e}\n", idx + 1));
            }
        }
        std::fs::write(out.join("angle_energies.csv"), csv)
            .map_err(|e| CliError::io("writing angle_energies.csv", e))?;
    }
    Ok(())
}

fn rescale_for_display(grid: &ImageGrid) -> ImageGrid {
    let min = grid.pixels().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = grid.pixels().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > min { 255.0 / (max - min) } else { 0.0 };
    ImageGrid::from_fn(grid.width(), grid.height(), |x, y| {
        if scale == 0.0 {
            128.0
        } else {
            (grid.get(x, y) - min) * scale
        }
    })
    .expect("same dimensions")
}

fn run_ca(input: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {out:?}"), e))?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::io(format!("reading {input:?}"), e))?;
    let vectors = parse_feature_csv(&text).map_err(|e| CliError::data("parsing features", e))?;
    let space = fit_factor_space(&vectors, &[], grader_cli::config::CaMode::AllActive)?;
    println!(
        "{} rows x {} features; {} entries clipped; {} columns dropped; {} factors",
        space.table.rows,
        space.table.cols,
        space.table.clipped,
        space.dropped_columns.len(),
        space.model.factors()
    );
    if let Some(first) = space.model.inertia_shares.first() {
        println!("first factor inertia share: {first:.4}");
    }
    let model = &space.model;
    let points = grader_core::knn::LabeledPoints::new(
        vectors.iter().map(|v| v.image_id.clone()).collect(),
        vectors
            .iter()
            .map(|v| v.label.clone().unwrap_or_default())
            .collect(),
        space.train_coords.clone(),
    )
    .map_err(|e| CliError::data("factor points", e))?;
    let mut csv = String::from("id,label");
    for k in 1..=points.dims() {
        csv.push_str(&format!(",f{k}"));
    }
    csv.push('\n');
    for ((id, label), row) in points.ids.iter().zip(&points.labels).zip(&points.coords) {
        csv.push_str(&format!("{id},{label}"));
        for value in row {
            csv.push_str(&format!(",{value:.16e}"));
        }
        csv.push('\n');
    }
    std::fs::write(out.join("factors.csv"), csv)
        .map_err(|e| CliError::io("writing factors.csv", e))?;
    std::fs::write(out.join("model.txt"), model_to_text(model))
        .map_err(|e| CliError::io("writing model.txt", e))?;
    Ok(())
}
