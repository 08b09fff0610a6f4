//! Correspondence analysis of a nonnegative images x features table.
//!
//! The table is converted to relative frequencies, row and column masses
//! are its marginals, and the standardized residuals
//! `(p_ij - f_i f_j) / sqrt(f_i f_j)` are decomposed by singular values.
//! Row coordinates `F_ik = sigma_k u_ik / sqrt(f_i)` (and their column
//! counterparts) embed the chi-squared metric on profiles into an ordinary
//! Euclidean factor space; the trivial dimension is removed by the
//! centering itself. Inertia decomposes as the squared singular values,
//! and per-factor column contributions `f_j G_jk^2 / sigma_k^2` sum to 1.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
const RANK_CUTOFF: f64 = 1e-12;

/// Result of clipping a feature table to nonnegative values.
#[derive(Debug, Clone)]
pub struct NonnegTable {
    pub rows: usize,
    pub cols: usize,
    /// Row-major table values, all >= 0.
    pub values: Vec<f64>,
    /// How many entries were clipped to zero.
    pub clipped: usize,
}

impl NonnegTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Replaces negative entries (possible for skewness features) by zero and
/// rejects rows or columns left without any mass.
pub fn nonneg_prepare(rows: usize, cols: usize, values: &[f64]) -> Result<NonnegTable> {
    if values.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            actual: values.len(),
        });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::CaInput(format!("non-finite table entry {v}")));
    }
    let mut clipped = 0;
    let table: Vec<f64> = values
        .iter()
        .map(|&v| {
            if v < 0.0 {
                clipped += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    for i in 0..rows {
        if table[i * cols..(i + 1) * cols].iter().sum::<f64>() <= 0.0 {
            return Err(Error::ZeroMarginal {
                which: format!("row {i}"),
            });
        }
    }
    for j in 0..cols {
        if (0..rows).map(|i| table[i * cols + j]).sum::<f64>() <= 0.0 {
            return Err(Error::ZeroMarginal {
                which: format!("column {j}"),
            });
        }
    }
    Ok(NonnegTable {
        rows,
        cols,
        values: table,
        clipped,
    })
}

/// Factor decomposition of a table.
#[derive(Debug, Clone)]
pub struct FactorModel {
    pub row_masses: Vec<f64>,
    pub col_masses: Vec<f64>,
    /// Nontrivial singular values, descending.
    pub singular_values: Vec<f64>,
    /// n x K row factor coordinates, row-major.
    pub row_coords: Vec<Vec<f64>>,
    /// m x K column factor coordinates.
    pub col_coords: Vec<Vec<f64>>,
    /// sigma_k^2 / total inertia, summing to 1 (empty if inertia is 0).
    pub inertia_shares: Vec<f64>,
    pub grand_total: f64,
}

impl FactorModel {
    /// Number of retained factors.
    pub fn factors(&self) -> usize {
        self.singular_values.len()
    }

    /// Total inertia: sum of squared singular values.
    pub fn total_inertia(&self) -> f64 {
        self.singular_values.iter().map(|s| s * s).sum()
    }
}

/// Fits the correspondence analysis of a nonnegative table.
pub fn ca_fit(table: &NonnegTable) -> Result<FactorModel> {
    let (n, m) = (table.rows, table.cols);
    if n < 2 || m < 2 {
        return Err(Error::CaInput(format!("table {n}x{m} too small")));
    }

    let grand_total: f64 = table.values.iter().sum();
    let row_masses: Vec<f64> = (0..n)
        .map(|i| table.row(i).iter().sum::<f64>() / grand_total)
        .collect();
    let col_masses: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| table.get(i, j)).sum::<f64>() / grand_total)
        .collect();

    let residuals = DMatrix::from_fn(n, m, |i, j| {
        let p = table.get(i, j) / grand_total;
        let expected = row_masses[i] * col_masses[j];
        (p - expected) / expected.sqrt()
    });

    let svd = residuals.svd(true, true);
    let u = svd.u.as_ref().ok_or(Error::SvdFailed)?;
    let vt = svd.v_t.as_ref().ok_or(Error::SvdFailed)?;

    // Descending order, then drop numerically-zero tails and anything
    // beyond the min(n-1, m-1) nontrivial dimensions.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let k_max = (n - 1).min(m - 1);
    let sigma_1 = svd.singular_values[order[0]];
    let kept: Vec<usize> = order
        .into_iter()
        .take(k_max)
        .filter(|&k| svd.singular_values[k] > RANK_CUTOFF * sigma_1 && svd.singular_values[k] > 0.0)
        .collect();

    let singular_values: Vec<f64> = kept.iter().map(|&k| svd.singular_values[k]).collect();
    let total_inertia: f64 = singular_values.iter().map(|s| s * s).sum();

    let row_coords: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            kept.iter()
                .zip(&singular_values)
                .map(|(&k, sigma)| sigma * u[(i, k)] / row_masses[i].sqrt())
                .collect()
        })
        .collect();
    let col_coords: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            kept.iter()
                .zip(&singular_values)
                .map(|(&k, sigma)| sigma * vt[(k, j)] / col_masses[j].sqrt())
                .collect()
        })
        .collect();
    let inertia_shares = if total_inertia > 0.0 {
        singular_values
            .iter()
            .map(|s| s * s / total_inertia)
            .collect()
    } else {
        Vec::new()
    };

    Ok(FactorModel {
        row_masses,
        col_masses,
        singular_values,
        row_coords,
        col_coords,
        inertia_shares,
        grand_total,
    })
}

/// One feature's share of one factor's inertia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    /// Column index, 0-based.
    pub feature: usize,
    /// Factor index, 1-based.
    pub factor: usize,
    /// `f_j G_jk^2 / sigma_k^2`, in [0, 1].
    pub value: f64,
}

/// Eigenvalue-normalized column contributions to factor `k` (1-based);
/// they sum to 1 over the columns.
pub fn contributions(model: &FactorModel, k: usize) -> Result<Vec<Contribution>> {
    if k == 0 || k > model.factors() {
        return Err(Error::FactorIndex {
            k,
            kmax: model.factors(),
        });
    }
    let sigma2 = model.singular_values[k - 1].powi(2);
    Ok(model
        .col_masses
        .iter()
        .zip(&model.col_coords)
        .enumerate()
        .map(|(j, (&mass, coords))| Contribution {
            feature: j,
            factor: k,
            value: mass * coords[k - 1] * coords[k - 1] / sigma2,
        })
        .collect())
}

/// Raw (unnormalized) contributions `f_j G_jk^2`; these sum to
/// `sigma_k^2` over the columns.
pub fn contributions_raw(model: &FactorModel, k: usize) -> Result<Vec<Contribution>> {
    let sigma2 = model
        .singular_values
        .get(k.wrapping_sub(1))
        .map(|s| s * s)
        .unwrap_or(0.0);
    contributions(model, k).map(|list| {
        list.into_iter()
            .map(|c| Contribution {
                value: c.value * sigma2,
                ..c
            })
            .collect()
    })
}

/// Projects a new (supplementary) row into the factor space via the
/// transition formula `F_k = (1/sigma_k) sum_j profile_j G_jk`.
pub fn project_supplementary(model: &FactorModel, row: &[f64]) -> Result<Vec<f64>> {
    if row.len() != model.col_masses.len() {
        return Err(Error::DimensionMismatch {
            expected: model.col_masses.len(),
            actual: row.len(),
        });
    }
    if row.iter().any(|v| *v < 0.0) {
        return Err(Error::CaInput("supplementary row has negative entries".into()));
    }
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroMarginal {
            which: "supplementary row".into(),
        });
    }
    Ok((0..model.factors())
        .map(|k| {
            let sum: f64 = row
                .iter()
                .zip(&model.col_coords)
                .map(|(&x, coords)| (x / total) * coords[k])
                .sum();
            sum / model.singular_values[k]
        })
        .collect())
}

/// Chi-squared distance between two rows of a table, the metric the factor
/// space preserves.
pub fn chi2_row_distance(table: &NonnegTable, i: usize, i2: usize) -> f64 {
    let grand_total: f64 = table.values.iter().sum();
    let ri: f64 = table.row(i).iter().sum();
    let ri2: f64 = table.row(i2).iter().sum();
    (0..table.cols)
        .map(|j| {
            let fj: f64 = (0..table.rows).map(|r| table.get(r, j)).sum::<f64>() / grand_total;
            let d = table.get(i, j) / ri - table.get(i2, j) / ri2;
            d * d / fj
        })
        .sum::<f64>()
        .sqrt()
}

/// Total inertia computed directly from the table, independent of the
/// decomposition: `sum_ij (p_ij - f_i f_j)^2 / (f_i f_j)`.
pub fn direct_total_inertia(table: &NonnegTable) -> f64 {
    let grand_total: f64 = table.values.iter().sum();
    let row_masses: Vec<f64> = (0..table.rows)
        .map(|i| table.row(i).iter().sum::<f64>() / grand_total)
        .collect();
    let col_masses: Vec<f64> = (0..table.cols)
        .map(|j| (0..table.rows).map(|i| table.get(i, j)).sum::<f64>() / grand_total)
        .collect();
    let mut total = 0.0;
    for (i, &ri) in row_masses.iter().enumerate() {
        for (j, &cj) in col_masses.iter().enumerate() {
            let p = table.get(i, j) / grand_total;
            let e = ri * cj;
            total += (p - e) * (p - e) / e;
        }
    }
    total
}

/// Serializes the model as plain-text sections, 17 significant digits,
/// sufficient to reload for supplementary projection.
pub fn model_to_text(model: &FactorModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# correspondence analysis model");
    let _ = writeln!(out, "grand_total {:.16e}", model.grand_total);
    let write_vec = |out: &mut String, name: &str, values: &[f64]| {
        let _ = writeln!(out, "[{name}] {}", values.len());
        for v in values {
            let _ = writeln!(out, "{v:.16e}");
        }
    };
    write_vec(&mut out, "row_masses", &model.row_masses);
    write_vec(&mut out, "col_masses", &model.col_masses);
    write_vec(&mut out, "singular_values", &model.singular_values);
    let _ = writeln!(
        out,
        "[col_coords] {} {}",
        model.col_coords.len(),
        model.factors()
    );
    for coords in &model.col_coords {
        let line: Vec<String> = coords.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// Reloads a model written by [`model_to_text`]. Row coordinates are not
/// serialized; the reloaded model supports projection and contributions.
pub fn model_from_text(text: &str) -> Result<FactorModel> {
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
    let mut next = || {
        lines
            .next()
            .ok_or_else(|| Error::ModelParse("unexpected end of model file".into()))
    };
    let parse_f64 = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::ModelParse(format!("bad number {s:?}")))
    };

    let first = next()?;
    let grand_total = parse_f64(first.strip_prefix("grand_total ").ok_or_else(|| {
        Error::ModelParse(format!("expected grand_total line, got {first:?}"))
    })?)?;

    let mut read_section = |name: &str| -> Result<Vec<f64>> {
        let header = next()?;
        let rest = header
            .strip_prefix(&format!("[{name}] "))
            .ok_or_else(|| Error::ModelParse(format!("expected [{name}], got {header:?}")))?;
        let count: usize = rest
            .trim()
            .parse()
            .map_err(|_| Error::ModelParse(format!("bad count in {header:?}")))?;
        (0..count).map(|_| next().and_then(parse_f64)).collect()
    };

    let row_masses = read_section("row_masses")?;
    let col_masses = read_section("col_masses")?;
    let singular_values = read_section("singular_values")?;

    let header = next()?;
    let dims = header
        .strip_prefix("[col_coords] ")
        .ok_or_else(|| Error::ModelParse(format!("expected [col_coords], got {header:?}")))?;
    let mut parts = dims.split_whitespace();
    let rows: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::ModelParse("bad col_coords dims".into()))?;
    let k: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::ModelParse("bad col_coords dims".into()))?;
    if k != singular_values.len() || rows != col_masses.len() {
        return Err(Error::ModelParse("inconsistent model dimensions".into()));
    }
    let mut col_coords = Vec::with_capacity(rows);
    for _ in 0..rows {
        let line = next()?;
        let coords: Vec<f64> = line
            .split_whitespace()
            .map(parse_f64)
            .collect::<Result<_>>()?;
        if coords.len() != k {
            return Err(Error::ModelParse(format!(
                "col_coords row has {} values, expected {k}",
                coords.len()
            )));
        }
        col_coords.push(coords);
    }

    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    let inertia_shares = if total > 0.0 {
        singular_values.iter().map(|s| s * s / total).collect()
    } else {
        Vec::new()
    };
    Ok(FactorModel {
        row_masses,
        col_masses,
        singular_values,
        row_coords: Vec::new(),
        col_coords,
        inertia_shares,
        grand_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(rows: usize, cols: usize, seed: u64) -> NonnegTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(0.1..10.0)).collect();
        nonneg_prepare(rows, cols, &values).unwrap()
    }

    #[test]
    fn clipping_is_minimal() {
        let values = vec![1.0, -0.5, 2.0, 3.0, 4.0, 5.0];
        let table = nonneg_prepare(2, 3, &values).unwrap();
        assert_eq!(table.values, vec![1.0, 0.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(table.clipped, 1);

        let clean = nonneg_prepare(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(clean.clipped, 0);
        assert_eq!(clean.values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn all_negative_row_rejected() {
        let values = vec![-1.0, -2.0, 3.0, 4.0];
        match nonneg_prepare(2, 2, &values) {
            Err(Error::ZeroMarginal { which }) => assert_eq!(which, "row 0"),
            other => panic!("expected zero-marginal error, got {other:?}"),
        }
    }

    #[test]
    fn rank_one_table_has_zero_inertia() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, 0.5, 2.0, 1.0];
        let values: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
        let table = nonneg_prepare(3, 4, &values).unwrap();
        let model = ca_fit(&table).unwrap();
        assert!(model.total_inertia() < 1e-10);
        for coords in &model.row_coords {
            assert!(coords.iter().all(|c| c.abs() < 1e-7));
        }
    }

    #[test]
    fn identity_2x2_table() {
        let table = nonneg_prepare(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let model = ca_fit(&table).unwrap();
        assert_eq!(model.factors(), 1);
        assert!((model.singular_values[0] - 1.0).abs() < 1e-12);
        assert!((model.inertia_shares[0] - 1.0).abs() < 1e-12);
        assert!((model.total_inertia() - 1.0).abs() < 1e-12);
        let contribs = contributions(&model, 1).unwrap();
        assert!((contribs[0].value - 0.5).abs() < 1e-10);
        assert!((contribs[1].value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn inertia_matches_direct_computation() {
        for seed in 0..5 {
            let table = random_table(10, 15, seed);
            let model = ca_fit(&table).unwrap();
            let direct = direct_total_inertia(&table);
            assert!(
                (model.total_inertia() - direct).abs() < 1e-10,
                "{} vs {direct}",
                model.total_inertia()
            );
        }
    }

    #[test]
    fn factor_distances_match_chi2() {
        let table = random_table(10, 15, 42);
        let model = ca_fit(&table).unwrap();
        for i in 0..table.rows {
            for i2 in (i + 1)..table.rows {
                let chi2 = chi2_row_distance(&table, i, i2);
                let euclid: f64 = model.row_coords[i]
                    .iter()
                    .zip(&model.row_coords[i2])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(
                    (chi2 - euclid).abs() < 1e-8 * chi2.max(1.0),
                    "rows {i},{i2}: chi2 {chi2} vs euclid {euclid}"
                );
            }
        }
    }

    #[test]
    fn contributions_sum_to_one_per_factor() {
        let table = random_table(8, 12, 7);
        let model = ca_fit(&table).unwrap();
        for k in 1..=model.factors() {
            let total: f64 = contributions(&model, k).unwrap().iter().map(|c| c.value).sum();
            assert!((total - 1.0).abs() < 1e-10, "factor {k}: {total}");
            let raw: f64 = contributions_raw(&model, k)
                .unwrap()
                .iter()
                .map(|c| c.value)
                .sum();
            let sigma2 = model.singular_values[k - 1].powi(2);
            assert!((raw - sigma2).abs() < 1e-12 + 1e-10 * sigma2);
        }
        assert!(matches!(
            contributions(&model, 0),
            Err(Error::FactorIndex { .. })
        ));
        assert!(contributions(&model, model.factors() + 1).is_err());
    }

    #[test]
    fn barycenter_is_origin() {
        let table = random_table(9, 6, 3);
        let model = ca_fit(&table).unwrap();
        for k in 0..model.factors() {
            let center: f64 = model
                .row_masses
                .iter()
                .zip(&model.row_coords)
                .map(|(&m, coords)| m * coords[k])
                .sum();
            assert!(center.abs() < 1e-10, "factor {}: {center}", k + 1);
        }
    }

    #[test]
    fn active_rows_reproject_onto_themselves() {
        let table = random_table(8, 12, 9);
        let model = ca_fit(&table).unwrap();
        for i in 0..table.rows {
            let projected = project_supplementary(&model, table.row(i)).unwrap();
            for (a, b) in projected.iter().zip(&model.row_coords[i]) {
                assert!((a - b).abs() < 1e-8, "row {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn centroid_row_projects_to_origin() {
        let table = random_table(6, 9, 13);
        let model = ca_fit(&table).unwrap();
        let row: Vec<f64> = model.col_masses.iter().map(|m| m * 100.0).collect();
        let projected = project_supplementary(&model, &row).unwrap();
        assert!(projected.iter().all(|c| c.abs() < 1e-10));
    }

    #[test]
    fn projection_is_scale_invariant() {
        let table = random_table(6, 9, 17);
        let model = ca_fit(&table).unwrap();
        let row: Vec<f64> = table.row(2).to_vec();
        let scaled: Vec<f64> = row.iter().map(|v| v * 10.0).collect();
        let a = project_supplementary(&model, &row).unwrap();
        let b = project_supplementary(&model, &scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(project_supplementary(&model, &[0.0; 9]).is_err());
    }

    #[test]
    fn row_scale_invariance() {
        // A row and the same row scaled by 10 land on identical factor
        // coordinates: profiles discard absolute scale. (A full refit does
        // not have this property, since scaling a row shifts the masses
        // and with them the axes.)
        let table = random_table(8, 12, 23);
        let model = ca_fit(&table).unwrap();
        for i in 0..table.rows {
            let scaled: Vec<f64> = table.row(i).iter().map(|v| v * 10.0).collect();
            let projected = project_supplementary(&model, &scaled).unwrap();
            for (a, b) in projected.iter().zip(&model.row_coords[i]) {
                assert!((a - b).abs() < 1e-8, "row {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn model_text_round_trip() {
        let table = random_table(7, 10, 31);
        let model = ca_fit(&table).unwrap();
        let text = model_to_text(&model);
        let back = model_from_text(&text).unwrap();
        assert_eq!(back.singular_values, model.singular_values);
        assert_eq!(back.col_masses, model.col_masses);
        assert_eq!(back.col_coords, model.col_coords);
        // The reloaded model projects supplementary rows identically.
        let projected = project_supplementary(&back, table.row(4)).unwrap();
        for (a, b) in projected.iter().zip(&model.row_coords[4]) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
