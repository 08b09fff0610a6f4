//! k-nearest-neighbor classification in truncated factor subspaces.
//!
//! Neighbor search is an exhaustive linear scan (training sets stay in the
//! low thousands). Tie rules are fixed for reproducibility: equal
//! distances prefer the smaller training index, and tied votes prefer the
//! class that sorts first.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Labeled points in a d-dimensional embedding.
#[derive(Debug, Clone)]
pub struct LabeledPoints {
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    /// One coordinate row per point.
    pub coords: Vec<Vec<f64>>,
}

impl LabeledPoints {
    pub fn new(ids: Vec<String>, labels: Vec<String>, coords: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != coords.len() || labels.len() != coords.len() {
            return Err(Error::DimensionMismatch {
                expected: coords.len(),
                actual: ids.len().min(labels.len()),
            });
        }
        if let Some(first) = coords.first() {
            let d = first.len();
            if d == 0 || coords.iter().any(|c| c.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d.max(1),
                    actual: coords.iter().map(Vec::len).find(|&l| l != d).unwrap_or(0),
                });
            }
        }
        Ok(Self { ids, labels, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.coords.first().map_or(0, Vec::len)
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Vec<String> {
        let mut classes: Vec<String> = self.labels.clone();
        classes.sort();
        classes.dedup();
        classes
    }
}

/// Majority label among the k nearest training points in the first `dims`
/// coordinates; `dims = None` uses the full embedding.
pub fn knn_classify(
    train: &LabeledPoints,
    query: &[f64],
    k: usize,
    dims: Option<usize>,
) -> Result<String> {
    let d = dims.unwrap_or(train.dims());
    if d == 0 || d > train.dims() || query.len() < d {
        return Err(Error::DimensionMismatch {
            expected: train.dims(),
            actual: query.len().min(d),
        });
    }
    if k == 0 || k > train.len() {
        return Err(Error::CaInput(format!(
            "k = {k} outside 1..={}",
            train.len()
        )));
    }

    // (squared distance, training index), settled by the index on ties.
    let mut neighbors: Vec<(f64, usize)> = train
        .coords
        .iter()
        .enumerate()
        .map(|(idx, row)| {
            let dist: f64 = row[..d]
                .iter()
                .zip(&query[..d])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (dist, idx)
        })
        .collect();
    neighbors.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let mut votes: Vec<(&str, usize)> = Vec::new();
    for &(_, idx) in &neighbors[..k] {
        let label = train.labels[idx].as_str();
        match votes.iter_mut().find(|(l, _)| *l == label) {
            Some(entry) => entry.1 += 1,
            None => votes.push((label, 1)),
        }
    }
    let top = votes.iter().map(|&(_, n)| n).max().expect("k >= 1");
    let winner = votes
        .iter()
        .filter(|&&(_, n)| n == top)
        .map(|&(l, _)| l)
        .min()
        .expect("nonempty votes");
    Ok(winner.to_string())
}

/// Classifies every test point in the first `d` coordinates and counts
/// correct assignments, for each d in `dmin..=dmax`.
pub fn dimension_sweep(
    train: &LabeledPoints,
    test: &LabeledPoints,
    dmin: usize,
    dmax: usize,
    k: usize,
) -> Result<Vec<(usize, usize)>> {
    let limit = train.dims().min(test.dims());
    if dmin == 0 || dmin > dmax || dmax > limit {
        return Err(Error::DimensionMismatch {
            expected: limit,
            actual: dmax,
        });
    }
    (dmin..=dmax)
        .map(|d| {
            let correct = test
                .coords
                .par_iter()
                .zip(&test.labels)
                .map(|(query, truth)| {
                    knn_classify(train, query, k, Some(d)).map(|found| usize::from(found == *truth))
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            Ok((d, correct))
        })
        .collect()
}

/// Row = true class, column = predicted class, in sorted class order.
#[derive(Debug, Clone)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Aligned text table, true classes down the side.
    pub fn to_text(&self) -> String {
        let width = self.classes.iter().map(|c| c.len()).max().unwrap_or(0).max(6);
        // Row labels occupy "(real) class" plus one padded class name.
        let side = 12 + 1 + width;
        let mut out = String::new();
        out.push_str(&format!("{:>side$} |", "(found) class"));
        for class in &self.classes {
            out.push_str(&format!(" {class:>width$}"));
        }
        out.push('\n');
        for (i, class) in self.classes.iter().enumerate() {
            let tag = if i == 0 { "(real) class" } else { "" };
            out.push_str(&format!("{tag:>12} {class:>width$} |"));
            for count in &self.counts[i] {
                out.push_str(&format!(" {count:>width$}"));
            }
            out.push('\n');
        }
        out
    }

    /// CSV with a `true\predicted` corner cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for class in &self.classes {
            out.push(',');
            out.push_str(class);
        }
        out.push('\n');
        for (i, class) in self.classes.iter().enumerate() {
            out.push_str(class);
            for count in &self.counts[i] {
                out.push_str(&format!(",{count}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Confusion matrix of k-NN assignments in the first `d` coordinates.
pub fn confusion(
    train: &LabeledPoints,
    test: &LabeledPoints,
    d: usize,
    k: usize,
) -> Result<ConfusionMatrix> {
    let mut classes = train.classes();
    for label in test.labels.iter() {
        if !classes.contains(label) {
            classes.push(label.clone());
        }
    }
    classes.sort();

    let assignments: Vec<String> = test
        .coords
        .par_iter()
        .map(|query| knn_classify(train, query, k, Some(d)))
        .collect::<Result<_>>()?;

    let index = |label: &str| classes.iter().position(|c| c == label).expect("known class");
    let mut counts = vec![vec![0usize; classes.len()]; classes.len()];
    for (truth, found) in test.labels.iter().zip(&assignments) {
        counts[index(truth)][index(found)] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points(coords: Vec<Vec<f64>>, labels: &[&str]) -> LabeledPoints {
        let ids = (0..coords.len()).map(|i| format!("p{i}")).collect();
        let labels = labels.iter().map(|s| s.to_string()).collect();
        LabeledPoints::new(ids, labels, coords).unwrap()
    }

    #[test]
    fn exact_match_wins_at_k1() {
        let train = points(
            vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![9.0, 1.0]],
            &["a", "b", "c"],
        );
        assert_eq!(knn_classify(&train, &[5.0, 5.0], 1, None).unwrap(), "b");
    }

    #[test]
    fn distance_tie_prefers_lower_index() {
        let train = points(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], &["far", "near"]);
        // Both at distance 1 from the origin; index 0 wins.
        assert_eq!(knn_classify(&train, &[0.0, 0.0], 1, None).unwrap(), "far");
    }

    #[test]
    fn vote_tie_prefers_sorted_first_class() {
        let train = points(
            vec![vec![0.0], vec![2.0], vec![4.0], vec![6.0]],
            &["zeta", "alpha", "zeta", "alpha"],
        );
        // k=4: two votes each; "alpha" sorts first.
        assert_eq!(knn_classify(&train, &[3.0], 4, None).unwrap(), "alpha");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let train = points(vec![vec![0.0, 0.0]], &["a"]);
        assert!(knn_classify(&train, &[1.0], 1, None).is_err());
        assert!(knn_classify(&train, &[1.0, 2.0], 1, Some(3)).is_err());
        assert!(knn_classify(&train, &[1.0, 2.0], 2, None).is_err());
    }

    /// Independent brute-force 1-NN oracle.
    fn brute_force_1nn(train: &LabeledPoints, query: &[f64], d: usize) -> String {
        let mut best = (f64::INFINITY, 0usize);
        for (idx, row) in train.coords.iter().enumerate() {
            let mut dist = 0.0;
            for t in 0..d {
                dist += (row[t] - query[t]).powi(2);
            }
            if dist < best.0 {
                best = (dist, idx);
            }
        }
        train.labels[best.1].clone()
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train = points(
            (0..200)
                .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            &(0..200)
                .map(|i| ["a", "b", "c"][i % 3])
                .collect::<Vec<_>>(),
        );
        for _ in 0..500 {
            let query: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_eq!(
                knn_classify(&train, &query, 1, None).unwrap(),
                brute_force_1nn(&train, &query, 5)
            );
        }
    }

    #[test]
    fn self_test_is_perfect_at_every_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let train = points(
            (0..60)
                .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            &(0..60).map(|i| ["x", "y"][i % 2]).collect::<Vec<_>>(),
        );
        let sweep = dimension_sweep(&train, &train, 1, 4, 1).unwrap();
        assert_eq!(sweep.len(), 4);
        for (d, correct) in sweep {
            assert_eq!(correct, 60, "dimension {d}");
        }
        let matrix = confusion(&train, &train, 4, 1).unwrap();
        assert_eq!(matrix.correct(), 60);
        for i in 0..matrix.classes.len() {
            for j in 0..matrix.classes.len() {
                if i != j {
                    assert_eq!(matrix.counts[i][j], 0);
                }
            }
        }
    }

    #[test]
    fn separated_clusters_give_diagonal_confusion() {
        let train = points(
            vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 10.0], vec![10.1, 10.0]],
            &["low", "low", "high", "high"],
        );
        let test = points(
            vec![vec![0.05, 0.05], vec![9.9, 10.0]],
            &["low", "high"],
        );
        let matrix = confusion(&train, &test, 2, 1).unwrap();
        assert_eq!(matrix.correct(), 2);
        assert_eq!(matrix.total(), 2);
        let row_sums: Vec<usize> = matrix.counts.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![1, 1]);
    }

    #[test]
    fn random_labels_hover_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let labels: Vec<&str> = (0..400).map(|_| ["a", "b"][rng.gen_range(0..2)]).collect();
        let train = points(
            (0..400)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            &labels,
        );
        let test_labels: Vec<&str> = (0..400).map(|_| ["a", "b"][rng.gen_range(0..2)]).collect();
        let test = points(
            (0..400)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            &test_labels,
        );
        let matrix = confusion(&train, &test, 3, 1).unwrap();
        let off_diagonal = matrix.total() - matrix.correct();
        let fraction = off_diagonal as f64 / matrix.total() as f64;
        assert!(
            (fraction - 0.5).abs() < 0.1,
            "off-diagonal fraction {fraction}"
        );
    }

    #[test]
    fn permuting_training_points_does_not_change_assignments() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let coords: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<&str> = (0..50).map(|i| ["a", "b", "c"][i % 3]).collect();
        let train = points(coords.clone(), &labels);
        let mut reversed_coords = coords;
        reversed_coords.reverse();
        let mut reversed_labels = labels;
        reversed_labels.reverse();
        let train_rev = points(reversed_coords, &reversed_labels);
        for _ in 0..100 {
            let query: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_eq!(
                knn_classify(&train, &query, 1, None).unwrap(),
                knn_classify(&train_rev, &query, 1, None).unwrap()
            );
        }
    }

    #[test]
    fn confusion_text_layout() {
        let train = points(vec![vec![0.0], vec![1.0]], &["a", "b"]);
        let matrix = confusion(&train, &train, 1, 1).unwrap();
        let text = matrix.to_text();
        assert!(text.contains("(found) class"));
        assert!(text.contains("(real) class"));
        let csv = matrix.to_csv();
        assert!(csv.starts_with("true\\predicted,a,b\n"));
    }
}
