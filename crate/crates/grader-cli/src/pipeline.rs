//! Pipeline stages: feature extraction over manifests, correspondence
//! analysis, dimension sweep, confusion reporting and the contribution
//! summary.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use grader_core::ca::{
    ca_fit, contributions, model_to_text, nonneg_prepare, project_supplementary, FactorModel,
    NonnegTable,
};
use grader_core::features::{extract_features, feature_column_names, feature_csv, FeatureVector};
use grader_core::image::read_pgm;
use grader_core::knn::{confusion, dimension_sweep, ConfusionMatrix, LabeledPoints};

use crate::config::{CaMode, PipelineConfig};
use crate::error::{CliError, Result};
use crate::manifest::{read_manifest, ManifestEntry};

/// Contribution threshold above which a feature is reported as driving a
/// factor.
pub const CONTRIBUTION_THRESHOLD: f64 = 0.1;

/// Outcome of `features` over one manifest: extracted vectors plus
/// per-image failures (the run continues past them).
pub struct FeatureRun {
    pub vectors: Vec<FeatureVector>,
    pub failures: Vec<(String, String)>,
}

/// Extracts feature vectors for every manifest entry, in manifest order.
/// Failures are collected, not fatal.
pub fn extract_manifest_features(
    entries: &[ManifestEntry],
    cfg: &PipelineConfig,
) -> FeatureRun {
    let results: Vec<std::result::Result<FeatureVector, (String, String)>> = entries
        .par_iter()
        .map(|entry| {
            read_pgm(&entry.path)
                .and_then(|img| {
                    extract_features(
                        &img,
                        &entry.id,
                        entry.label.as_deref(),
                        cfg.wavelet_scales,
                        &cfg.curvelet,
                    )
                })
                .map_err(|e| (entry.id.clone(), e.to_string()))
        })
        .collect();

    let mut vectors = Vec::with_capacity(entries.len());
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(v) => vectors.push(v),
            Err(f) => failures.push(f),
        }
    }
    FeatureRun { vectors, failures }
}

/// `features` subcommand: manifest in, feature CSV out. Per-image
/// failures come back in the run (nonzero exit is decided by the caller).
pub fn cmd_features(manifest: &Path, out_csv: &Path, cfg: &PipelineConfig) -> Result<FeatureRun> {
    let entries = read_manifest(manifest)?;
    let run = extract_manifest_features(&entries, cfg);
    let text = feature_csv(
        &run.vectors,
        cfg.wavelet_scales,
        cfg.curvelet.total_bands(),
    )
    .map_err(|e| CliError::data("rendering feature csv", e))?;
    std::fs::write(out_csv, text).map_err(|e| CliError::io(format!("writing {out_csv:?}"), e))?;
    Ok(run)
}

/// Human-readable tag for a feature column, e.g.
/// `curvelet band 13 (scale 4, ridgelet band 1), 4th order moment`.
pub fn describe_feature(index: usize, cfg: &PipelineConfig) -> String {
    let per = 3;
    let wavelet_cols = cfg.wavelet_scales * per;
    let order = ["2nd", "3rd", "4th"][index % per];
    if index < wavelet_cols {
        format!("wavelet scale {}, {order} order moment", index / per + 1)
    } else {
        let band = (index - wavelet_cols) / per + 1;
        let mut labels = Vec::new();
        for (scale, &depth) in cfg.curvelet.ridgelet_depths.iter().enumerate() {
            for r in 1..=depth {
                labels.push((scale + 1, r));
            }
        }
        if cfg.curvelet.include_smooth_band {
            labels.push((cfg.curvelet.wavelet_scales + 1, 0));
        }
        match labels.get(band - 1) {
            Some((scale, 0)) => format!(
                "curvelet band {band} (scale {scale} smooth), {order} order moment"
            ),
            Some((scale, r)) => format!(
                "curvelet band {band} (scale {scale}, ridgelet band {r}), {order} order moment"
            ),
            None => format!("curvelet band {band}, {order} order moment"),
        }
    }
}

/// A feature whose contribution to a retained factor exceeds the
/// threshold.
#[derive(Debug, Clone)]
pub struct StrongContribution {
    pub factor: usize,
    pub feature_index: usize,
    pub column: String,
    pub description: String,
    pub value: f64,
}

/// Full pipeline result; files are also written to the output directory.
pub struct PipelineReport {
    pub factors: usize,
    pub inertia_shares: Vec<f64>,
    pub clipped_entries: usize,
    /// Feature columns excluded for zero mass after clipping.
    pub dropped_features: Vec<String>,
    pub sweep: Vec<(usize, usize)>,
    pub best_dimension: usize,
    pub best_correct: usize,
    pub raw_correct: usize,
    pub test_size: usize,
    pub confusion: ConfusionMatrix,
    pub strong_contributions: Vec<StrongContribution>,
}

fn labeled_points(
    vectors: &[FeatureVector],
    coords: Vec<Vec<f64>>,
) -> std::result::Result<LabeledPoints, grader_core::Error> {
    LabeledPoints::new(
        vectors.iter().map(|v| v.image_id.clone()).collect(),
        vectors
            .iter()
            .map(|v| v.label.clone().unwrap_or_default())
            .collect(),
        coords,
    )
}

fn factor_csv(points: &LabeledPoints) -> String {
    let mut out = String::from("id,label");
    for k in 1..=points.dims() {
        let _ = write!(out, ",f{k}");
    }
    out.push('\n');
    for ((id, label), coords) in points.ids.iter().zip(&points.labels).zip(&points.coords) {
        let _ = write!(out, "{id},{label}");
        for c in coords {
            let _ = write!(out, ",{c:.16e}");
        }
        out.push('\n');
    }
    out
}

/// Parses a factor CSV (`id,label,f1..fK`) back into labeled points.
pub fn parse_factor_csv(text: &str) -> Result<LabeledPoints> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::config("empty factor csv"))?;
    if !header.starts_with("id,label,f1") {
        return Err(CliError::config(format!(
            "bad factor csv header {header:?}"
        )));
    }
    let (mut ids, mut labels, mut coords) = (Vec::new(), Vec::new(), Vec::new());
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts.next().unwrap_or_default();
        let label = parts.next().unwrap_or_default();
        let row: Vec<f64> = parts
            .map(|v| {
                v.parse().map_err(|_| {
                    CliError::config(format!("factor csv line {}: bad value {v:?}", lineno + 2))
                })
            })
            .collect::<Result<_>>()?;
        ids.push(id.to_string());
        labels.push(label.to_string());
        coords.push(row);
    }
    labeled_points(
        &ids.iter()
            .zip(&labels)
            .map(|(id, label)| FeatureVector {
                image_id: id.clone(),
                label: (!label.is_empty()).then(|| label.clone()),
                values: Vec::new(),
            })
            .collect::<Vec<_>>(),
        coords,
    )
    .map_err(|e| CliError::data("assembling factor points", e))
}

/// Factor embedding of a train/test feature split.
pub struct FactorSpace {
    pub model: FactorModel,
    pub table: NonnegTable,
    /// Original feature indices of the columns kept in the analysis.
    pub kept_columns: Vec<usize>,
    /// Original feature indices dropped for having zero mass after
    /// clipping (a zero-mass column carries no chi-squared information).
    pub dropped_columns: Vec<usize>,
    pub train_coords: Vec<Vec<f64>>,
    pub test_coords: Vec<Vec<f64>>,
}

/// Fits the correspondence analysis for the configured mode and returns
/// the model plus factor coordinates for train and test rows.
pub fn fit_factor_space(
    train: &[FeatureVector],
    test: &[FeatureVector],
    mode: CaMode,
) -> Result<FactorSpace> {
    let cols = train
        .first()
        .or_else(|| test.first())
        .map(|v| v.values.len())
        .ok_or_else(|| CliError::config("no feature vectors to analyze"))?;

    let active: Vec<&FeatureVector> = match mode {
        CaMode::AllActive => train.iter().chain(test.iter()).collect(),
        CaMode::TrainActive => train.iter().collect(),
    };

    // Columns that clip to zero mass (e.g. a skewness that is negative for
    // every image) are excluded up front; nonneg_prepare would reject them
    // and they contribute nothing to row profiles.
    let kept_columns: Vec<usize> = (0..cols)
        .filter(|&j| active.iter().any(|v| v.values[j] > 0.0))
        .collect();
    let dropped_columns: Vec<usize> =
        (0..cols).filter(|j| !kept_columns.contains(j)).collect();
    if kept_columns.len() < 2 {
        return Err(CliError::config(format!(
            "only {} features carry positive mass",
            kept_columns.len()
        )));
    }

    let reduce = |v: &FeatureVector| -> Vec<f64> {
        kept_columns.iter().map(|&j| v.values[j]).collect()
    };
    let mut values = Vec::with_capacity(active.len() * kept_columns.len());
    for v in &active {
        values.extend(reduce(v));
    }
    let table = nonneg_prepare(active.len(), kept_columns.len(), &values)
        .map_err(|e| CliError::data("preparing nonnegative table", e))?;
    let model = ca_fit(&table).map_err(|e| CliError::data("correspondence analysis", e))?;

    let (train_coords, test_coords) = match mode {
        CaMode::AllActive => {
            let coords = model.row_coords.clone();
            (
                coords[..train.len()].to_vec(),
                coords[train.len()..].to_vec(),
            )
        }
        CaMode::TrainActive => {
            let train_coords = model.row_coords.clone();
            let test_coords = test
                .iter()
                .map(|v| {
                    // Same clipping rule as the active table.
                    let clipped: Vec<f64> = reduce(v).iter().map(|&x| x.max(0.0)).collect();
                    project_supplementary(&model, &clipped)
                        .map_err(|e| CliError::data(format!("projecting {}", v.image_id), e))
                })
                .collect::<Result<_>>()?;
            (train_coords, test_coords)
        }
    };
    Ok(FactorSpace {
        model,
        table,
        kept_columns,
        dropped_columns,
        train_coords,
        test_coords,
    })
}

/// Runs the full pipeline and writes every artifact into `out_dir`:
/// feature CSVs, the factor CSV and model file, the sweep CSV, the
/// confusion matrix (text + CSV) and the contribution summary.
pub fn cmd_pipeline(
    train_manifest: &Path,
    test_manifest: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<PipelineReport> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::io(format!("creating {out_dir:?}"), e))?;

    let train_entries = read_manifest(train_manifest)?;
    let test_entries = read_manifest(test_manifest)?;

    let train_run = extract_manifest_features(&train_entries, cfg);
    let test_run = extract_manifest_features(&test_entries, cfg);
    if let Some((id, err)) = train_run.failures.first().or(test_run.failures.first()) {
        return Err(CliError::Failure(format!(
            "feature extraction failed for {id}: {err}"
        )));
    }
    let (train, test) = (train_run.vectors, test_run.vectors);

    let bands = cfg.curvelet.total_bands();
    for (name, vectors) in [("features_train.csv", &train), ("features_test.csv", &test)] {
        let text = feature_csv(vectors, cfg.wavelet_scales, bands)
            .map_err(|e| CliError::data("rendering feature csv", e))?;
        std::fs::write(out_dir.join(name), text)
            .map_err(|e| CliError::io(format!("writing {name}"), e))?;
    }

    let space = fit_factor_space(&train, &test, cfg.ca_mode)?;
    let model = &space.model;
    let clipped_entries = space.table.clipped;

    let train_points = labeled_points(&train, space.train_coords.clone())
        .map_err(|e| CliError::data("train factors", e))?;
    let test_points = labeled_points(&test, space.test_coords.clone())
        .map_err(|e| CliError::data("test factors", e))?;

    let mut factors_text = factor_csv(&train_points);
    // One CSV holds both splits; rows keep manifest order.
    factors_text.push_str(
        factor_csv(&test_points)
            .split_once('\n')
            .map(|(_, body)| body)
            .unwrap_or(""),
    );
    std::fs::write(out_dir.join("factors.csv"), factors_text)
        .map_err(|e| CliError::io("writing factors.csv", e))?;
    std::fs::write(out_dir.join("model.txt"), model_to_text(model))
        .map_err(|e| CliError::io("writing model.txt", e))?;

    let k_total = model.factors();
    let dmin = cfg.sweep_min.min(k_total).max(1);
    let dmax = cfg.sweep_max.unwrap_or(k_total).min(k_total);
    let sweep = dimension_sweep(&train_points, &test_points, dmin, dmax, cfg.knn_k)
        .map_err(|e| CliError::data("dimension sweep", e))?;

    let mut sweep_csv = String::from("d,total_correct\n");
    for (d, correct) in &sweep {
        let _ = writeln!(sweep_csv, "{d},{correct}");
    }
    std::fs::write(out_dir.join("sweep.csv"), sweep_csv)
        .map_err(|e| CliError::io("writing sweep.csv", e))?;

    let &(best_dimension, best_correct) = sweep
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .ok_or_else(|| CliError::config("empty dimension sweep"))?;

    let matrix = confusion(&train_points, &test_points, best_dimension, cfg.knn_k)
        .map_err(|e| CliError::data("confusion matrix", e))?;
    std::fs::write(out_dir.join("confusion.txt"), matrix.to_text())
        .map_err(|e| CliError::io("writing confusion.txt", e))?;
    std::fs::write(out_dir.join("confusion.csv"), matrix.to_csv())
        .map_err(|e| CliError::io("writing confusion.csv", e))?;

    // Raw feature-space baseline over all dimensions, the comparison the
    // factor subspace is judged against.
    let raw_train = labeled_points(&train, train.iter().map(|v| v.values.clone()).collect())
        .map_err(|e| CliError::data("raw train points", e))?;
    let raw_test = labeled_points(&test, test.iter().map(|v| v.values.clone()).collect())
        .map_err(|e| CliError::data("raw test points", e))?;
    let raw_dims = raw_train.dims();
    let raw_correct = dimension_sweep(&raw_train, &raw_test, raw_dims, raw_dims, cfg.knn_k)
        .map_err(|e| CliError::data("raw-space baseline", e))?[0]
        .1;

    let names = feature_column_names(cfg.wavelet_scales, bands);
    let mut strong_contributions = Vec::new();
    for factor in 1..=best_dimension.min(k_total) {
        let all =
            contributions(model, factor).map_err(|e| CliError::data("contributions", e))?;
        for c in all {
            if c.value > CONTRIBUTION_THRESHOLD {
                // Map the reduced column index back to the feature layout.
                let original = space.kept_columns[c.feature];
                strong_contributions.push(StrongContribution {
                    factor,
                    feature_index: original,
                    column: names[original].clone(),
                    description: describe_feature(original, cfg),
                    value: c.value,
                });
            }
        }
    }

    let report = PipelineReport {
        factors: k_total,
        inertia_shares: model.inertia_shares.clone(),
        clipped_entries,
        dropped_features: space
            .dropped_columns
            .iter()
            .map(|&j| names[j].clone())
            .collect(),
        sweep,
        best_dimension,
        best_correct,
        raw_correct,
        test_size: test_points.len(),
        confusion: matrix,
        strong_contributions,
    };
    std::fs::write(out_dir.join("summary.txt"), render_summary(&report, cfg))
        .map_err(|e| CliError::io("writing summary.txt", e))?;
    Ok(report)
}

fn render_summary(report: &PipelineReport, cfg: &PipelineConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "pipeline summary");
    let _ = writeln!(out, "ca mode: {}", cfg.ca_mode);
    let _ = writeln!(out, "factors: {}", report.factors);
    if let Some(first) = report.inertia_shares.first() {
        let _ = writeln!(out, "first factor inertia share: {:.4}", first);
    }
    let _ = writeln!(
        out,
        "negative entries clipped to zero: {}",
        report.clipped_entries
    );
    if !report.dropped_features.is_empty() {
        let _ = writeln!(
            out,
            "features dropped for zero mass: {}",
            report.dropped_features.join(", ")
        );
    }
    let _ = writeln!(
        out,
        "best subspace: d = {} with {}/{} correct",
        report.best_dimension, report.best_correct, report.test_size
    );
    let _ = writeln!(
        out,
        "raw feature space: {}/{} correct",
        report.raw_correct, report.test_size
    );
    let _ = writeln!(
        out,
        "features with contribution > {CONTRIBUTION_THRESHOLD} on factors 1..={}:",
        report.best_dimension.min(report.factors)
    );
    for c in &report.strong_contributions {
        let _ = writeln!(
            out,
            "  factor {}: {} = {:.4}  [{}]",
            c.factor, c.column, c.value, c.description
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_descriptions() {
        let cfg = PipelineConfig::default();
        assert_eq!(describe_feature(0, &cfg), "wavelet scale 1, 2nd order moment");
        assert_eq!(describe_feature(14, &cfg), "wavelet scale 5, 4th order moment");
        assert_eq!(
            describe_feature(15, &cfg),
            "curvelet band 1 (scale 1, ridgelet band 1), 2nd order moment"
        );
        // Band 13 carries the (scale 4, first ridgelet band) tag.
        assert_eq!(
            describe_feature(15 + 12 * 3 + 2, &cfg),
            "curvelet band 13 (scale 4, ridgelet band 1), 4th order moment"
        );
        assert_eq!(
            describe_feature(15 + 18 * 3 + 1, &cfg),
            "curvelet band 19 (scale 6 smooth), 3rd order moment"
        );
    }

    #[test]
    fn factor_csv_round_trip() {
        let points = LabeledPoints::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), String::new()],
            vec![vec![1.0, -2.0, 0.25], vec![0.5, 3.0, -1.0]],
        )
        .unwrap();
        let text = factor_csv(&points);
        assert!(text.starts_with("id,label,f1,f2,f3\n"));
        let back = parse_factor_csv(&text).unwrap();
        assert_eq!(back.ids, points.ids);
        assert_eq!(back.labels, points.labels);
        assert_eq!(back.coords, points.coords);
    }

    fn synthetic_vectors(count: usize, offset: f64) -> Vec<FeatureVector> {
        (0..count)
            .map(|i| FeatureVector {
                image_id: format!("v{offset}_{i}"),
                label: Some(if i % 2 == 0 { "even" } else { "odd" }.into()),
                values: (0..6)
                    .map(|j| offset + (i * 7 + j * 3) as f64 % 11.0 + 0.5)
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn factor_space_modes() {
        let train = synthetic_vectors(6, 1.0);
        let test = synthetic_vectors(4, 2.0);

        let all = fit_factor_space(&train, &test, CaMode::AllActive).unwrap();
        assert_eq!(all.table.rows, 10);
        assert_eq!(all.train_coords.len(), 6);
        assert_eq!(all.test_coords.len(), 4);

        let ta = fit_factor_space(&train, &test, CaMode::TrainActive).unwrap();
        assert_eq!(ta.table.rows, 6);
        assert_eq!(ta.train_coords.len(), 6);
        assert_eq!(ta.test_coords.len(), 4);
        assert_eq!(ta.train_coords, ta.model.row_coords);
        // A test row equal to a training row projects onto its coordinates.
        let echo = fit_factor_space(&train, &train[..2].to_vec(), CaMode::TrainActive).unwrap();
        for (projected, active) in echo.test_coords.iter().zip(&echo.train_coords[..2]) {
            for (a, b) in projected.iter().zip(active) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_mass_columns_are_dropped() {
        let mut train = synthetic_vectors(5, 1.0);
        for v in &mut train {
            v.values[2] = -1.0; // negative everywhere: zero mass
        }
        let space = fit_factor_space(&train, &[], CaMode::AllActive).unwrap();
        assert_eq!(space.dropped_columns, vec![2]);
        assert_eq!(space.kept_columns, vec![0, 1, 3, 4, 5]);
        assert_eq!(space.table.cols, 5);
    }
}
