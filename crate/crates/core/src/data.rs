//! Synthetic dataset generators, CSV ingestion, and deterministic splits.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{one_hot, SoftLabel};
use crate::theory::{sample_problem, EtaSpec, SyntheticProblem};

/// Descriptive metadata carried along with a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub dim: usize,
    pub num_classes: usize,
    pub seed: Option<u64>,
    pub feature_names: Vec<String>,
    /// Class names in first-appearance order; the class index is the
    /// position in this list.
    pub class_names: Vec<String>,
    /// Name of the label column when saved as CSV.
    pub label_column: String,
}

/// Feature matrix with hard class indices and their one-hot soft labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub hard_labels: Vec<usize>,
    pub soft_labels: Vec<SoftLabel>,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Build a dataset from hard labels; soft labels become their one-hot
    /// encodings.
    pub fn from_hard_labels(
        features: Array2<f64>,
        hard_labels: Vec<usize>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::config(
                "dataset must contain at least one example".to_string(),
            ));
        }
        if features.nrows() != hard_labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                hard_labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(
                "dataset features must all be finite".to_string(),
            ));
        }
        if meta.num_classes < 2 {
            return Err(Error::config(
                "datasets need at least 2 classes".to_string(),
            ));
        }
        let soft_labels = hard_labels
            .iter()
            .map(|&c| one_hot(c, meta.num_classes))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            features,
            hard_labels,
            soft_labels,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.hard_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard_labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.meta.num_classes
    }

    /// Rows of the dataset at `indices` (in the given order).
    fn subset(&self, indices: &[usize], name: String) -> Result<Dataset> {
        let features = self.features.select(Axis(0), indices);
        let hard = indices.iter().map(|&i| self.hard_labels[i]).collect();
        let mut meta = self.meta.clone();
        meta.name = name;
        Dataset::from_hard_labels(features, hard, meta)
    }
}

/// The two-Gaussians toy problem: half the points around (-2, -2) labeled
/// positive (class 0), half around (+2, +2) labeled negative (class 1),
/// identity covariance, plus exactly `floor(flip_fraction * n)` labels
/// swapped at positions chosen uniformly without replacement.
pub fn gen_two_gaussians(n: usize, flip_fraction: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::param(format!("n must be even and >= 2, got {n}")));
    }
    if !(0.0..1.0).contains(&flip_fraction) {
        return Err(Error::param(format!(
            "flip_fraction must be in [0, 1), got {flip_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, 2));
    let mut hard = vec![0usize; n];
    for i in 0..n {
        let center = if i < n / 2 { -2.0 } else { 2.0 };
        hard[i] = usize::from(i >= n / 2);
        for d in 0..2 {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[(i, d)] = center + z;
        }
    }
    let flips = (flip_fraction * n as f64).floor() as usize;
    for i in rand::seq::index::sample(&mut rng, n, flips) {
        hard[i] = 1 - hard[i];
    }
    Dataset::from_hard_labels(
        features,
        hard,
        DatasetMeta {
            name: "two_gaussians".to_string(),
            dim: 2,
            num_classes: 2,
            seed: Some(seed),
            feature_names: vec!["x0".to_string(), "x1".to_string()],
            class_names: vec!["positive".to_string(), "negative".to_string()],
            label_column: "label".to_string(),
        },
    )
}

/// Binary problem with a known smooth label function on the unit cube:
/// `x ~ Uniform([0,1]^D)`, `y ~ Bernoulli(eta(x))`, positive class encoded
/// as class 0. Returns the dataset and the problem record carrying the
/// exact regularity constants.
pub fn gen_smooth_problem(
    n: usize,
    dim: usize,
    eta: EtaSpec,
    seed: u64,
) -> Result<(Dataset, SyntheticProblem)> {
    let problem = SyntheticProblem::uniform_cube(dim, eta)?;
    let sample = sample_problem(&problem, n, seed)?;
    let hard: Vec<usize> = sample.labels.iter().map(|l| l.argmax()).collect();
    let dataset = Dataset::from_hard_labels(
        sample.points,
        hard,
        DatasetMeta {
            name: format!("smooth_{dim}d"),
            dim,
            num_classes: 2,
            seed: Some(seed),
            feature_names: (0..dim).map(|d| format!("x{d}")).collect(),
            class_names: vec!["positive".to_string(), "negative".to_string()],
            label_column: "label".to_string(),
        },
    )?;
    Ok((dataset, problem))
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

/// Load a numeric CSV with one label column.
///
/// Features parse as `f64`; label values map to contiguous class indices in
/// first-appearance order, recorded in the metadata. Row/column positions
/// in errors are 1-based file coordinates.
pub fn load_csv(path: &Path, label_column: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        rows.push(record.map_err(|e| Error::Parse {
            row: rows.len() + 1,
            col: 1,
            msg: e.to_string(),
        })?);
    }
    if rows.is_empty() || (has_header && rows.len() == 1) {
        return Err(Error::config(format!(
            "{} contains no data rows",
            path.display()
        )));
    }

    let header: Option<Vec<String>> = if has_header {
        Some(rows[0].iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    let data_rows = &rows[usize::from(has_header)..];
    let width = data_rows[0].len();
    if width < 2 {
        return Err(Error::config(
            "CSV needs at least one feature column and a label".to_string(),
        ));
    }

    let label_idx = match (label_column, &header) {
        (LabelColumn::Index(i), _) => {
            if *i >= width {
                return Err(Error::config(format!(
                    "label column index {i} out of range for {width} columns"
                )));
            }
            *i
        }
        (LabelColumn::Name(name), Some(names)) => names
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(format!("label column '{name}' not found in header")))?,
        (LabelColumn::Name(name), None) => {
            return Err(Error::config(format!(
                "label column '{name}' given by name but the file has no header"
            )));
        }
    };

    let mut features = Array2::zeros((data_rows.len(), width - 1));
    let mut hard = Vec::with_capacity(data_rows.len());
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    for (i, record) in data_rows.iter().enumerate() {
        let file_row = i + 1 + usize::from(has_header);
        if record.len() != width {
            return Err(Error::Parse {
                row: file_row,
                col: record.len().max(1),
                msg: format!("expected {width} columns, found {}", record.len()),
            });
        }
        let mut feature_col = 0;
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                let label = cell.trim().to_string();
                let idx = *class_index.entry(label.clone()).or_insert_with(|| {
                    class_names.push(label);
                    class_names.len() - 1
                });
                hard.push(idx);
            } else {
                features[(i, feature_col)] =
                    cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                        row: file_row,
                        col: j + 1,
                        msg: format!("'{}' is not numeric: {e}", cell.trim()),
                    })?;
                feature_col += 1;
            }
        }
    }
    if class_names.len() < 2 {
        return Err(Error::config(format!(
            "need at least 2 distinct classes, found {}",
            class_names.len()
        )));
    }

    let feature_names: Vec<String> = match &header {
        Some(names) => names
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != label_idx)
            .map(|(_, n)| n.clone())
            .collect(),
        None => (0..width - 1).map(|d| format!("x{d}")).collect(),
    };
    let label_name = match &header {
        Some(names) => names[label_idx].clone(),
        None => "label".to_string(),
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    let num_classes = class_names.len();
    Dataset::from_hard_labels(
        features,
        hard,
        DatasetMeta {
            name,
            dim: width - 1,
            num_classes,
            seed: None,
            feature_names,
            class_names,
            label_column: label_name,
        },
    )
}

/// Save a dataset as CSV: header with the feature names plus the label
/// column, features printed with full (round-trip) precision, labels as
/// class names.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_to_io)?;
    let mut header: Vec<String> = dataset.meta.feature_names.clone();
    header.push(dataset.meta.label_column.clone());
    writer.write_record(&header).map_err(csv_to_io)?;
    for (row, &label) in dataset.features.outer_iter().zip(&dataset.hard_labels) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        record.push(dataset.meta.class_names[label].clone());
        writer.write_record(&record).map_err(csv_to_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_to_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Deterministic split by a seeded permutation; the test part gets
/// `round(n * test_fraction)` rows (at least 1 on each side). Row order is
/// preserved within each part.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::config(
            "cannot split a dataset with fewer than 2 rows".to_string(),
        ));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_idx: Vec<usize> = order[..n_test].to_vec();
    let mut train_idx: Vec<usize> = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let train = dataset.subset(&train_idx, format!("{}_train", dataset.meta.name))?;
    let test = dataset.subset(&test_idx, format!("{}_test", dataset.meta.name))?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn two_gaussians_labels_match_components_without_flips() {
        let d = gen_two_gaussians(100, 0.0, 3).unwrap();
        for i in 0..100 {
            assert_eq!(d.hard_labels[i], usize::from(i >= 50));
        }
        // Bottom-left component is the positive class.
        let positives: Vec<_> = (0..50).collect();
        for &i in &positives {
            assert!(d.features[(i, 0)] < 2.0 + 6.0);
        }
    }

    #[test]
    fn two_gaussians_flat_flip_count_is_exact() {
        let clean = gen_two_gaussians(1000, 0.0, 7).unwrap();
        let noisy = gen_two_gaussians(1000, 0.1, 7).unwrap();
        let flipped = clean
            .hard_labels
            .iter()
            .zip(&noisy.hard_labels)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(flipped, 100);
        // Features are untouched by flipping.
        assert_eq!(clean.features, noisy.features);
    }

    #[test]
    fn two_gaussians_is_deterministic() {
        let a = gen_two_gaussians(200, 0.1, 11).unwrap();
        let b = gen_two_gaussians(200, 0.1, 11).unwrap();
        assert_eq!(a, b);
        assert!(gen_two_gaussians(3, 0.0, 0).is_err());
        assert!(gen_two_gaussians(10, 1.0, 0).is_err());
    }

    #[test]
    fn smooth_problem_balanced_at_constant_half() {
        let (d, problem) = gen_smooth_problem(4000, 1, EtaSpec::Constant(0.5), 13).unwrap();
        let positives = d.hard_labels.iter().filter(|&&c| c == 0).count() as f64;
        let rate = positives / 4000.0;
        assert!(
            (rate - 0.5).abs() < 3.0 / (4000.0_f64).sqrt(),
            "rate = {rate}"
        );
        assert_eq!(problem.dim, 1);
        let (e, _) = gen_smooth_problem(100, 1, EtaSpec::Constant(0.5), 13).unwrap();
        let (f, _) = gen_smooth_problem(100, 1, EtaSpec::Constant(0.5), 13).unwrap();
        assert_eq!(e, f);
    }

    #[test]
    fn csv_round_trip_and_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "x1,x2,y").unwrap();
        writeln!(f, "0,1,a").unwrap();
        writeln!(f, "1,0,b").unwrap();
        drop(f);

        let d = load_csv(&path, &LabelColumn::Name("y".to_string()), true).unwrap();
        assert_eq!(d.meta.class_names, vec!["a", "b"]);
        assert_eq!(d.hard_labels, vec![0, 1]);
        assert_eq!(d.features[(0, 0)], 0.0);
        assert_eq!(d.features[(0, 1)], 1.0);
        assert_eq!(d.features[(1, 0)], 1.0);

        // Save and re-load: identical values, names, and mapping.
        let path2 = dir.path().join("toy2.csv");
        save_csv(&d, &path2).unwrap();
        let d2 = load_csv(&path2, &LabelColumn::Name("y".to_string()), true).unwrap();
        assert_eq!(d.features, d2.features);
        assert_eq!(d.hard_labels, d2.hard_labels);
        assert_eq!(d.meta.class_names, d2.meta.class_names);
        assert_eq!(d.meta.feature_names, d2.meta.feature_names);
    }

    #[test]
    fn csv_full_precision_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = gen_two_gaussians(50, 0.1, 21).unwrap();
        let path = dir.path().join("gauss.csv");
        save_csv(&d, &path).unwrap();
        let d2 = load_csv(&path, &LabelColumn::Name("label".to_string()), true).unwrap();
        assert_eq!(d.features, d2.features);
        assert_eq!(d.hard_labels, d2.hard_labels);
    }

    #[test]
    fn csv_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            load_csv(&missing, &LabelColumn::Index(0), false),
            Err(Error::Io(_))
        ));

        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,y\n1,a\nzzz,b\n").unwrap();
        match load_csv(&path, &LabelColumn::Name("y".to_string()), true) {
            Err(Error::Parse { row, col, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(col, 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "1,2,a\n1,b\n").unwrap();
        assert!(matches!(
            load_csv(&path, &LabelColumn::Index(2), false),
            Err(Error::Parse { row: 2, .. })
        ));

        let path = dir.path().join("ok.csv");
        std::fs::write(&path, "x,y\n1,a\n2,b\n").unwrap();
        assert!(matches!(
            load_csv(&path, &LabelColumn::Name("missing".to_string()), true),
            Err(Error::Config(_))
        ));
        // Re-loading the same file gives the identical dataset.
        let a = load_csv(&path, &LabelColumn::Name("y".to_string()), true).unwrap();
        let b = load_csv(&path, &LabelColumn::Name("y".to_string()), true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_is_exhaustive_disjoint_and_deterministic() {
        let d = gen_two_gaussians(10, 0.0, 5).unwrap();
        let (train, test) = split(&d, 0.5, 42).unwrap();
        assert_eq!(train.len(), 5);
        assert_eq!(test.len(), 5);
        let (train2, test2) = split(&d, 0.5, 42).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        // Together they contain every original row exactly once.
        let mut all_rows: Vec<Vec<u64>> = Vec::new();
        for part in [&train, &test] {
            for row in part.features.outer_iter() {
                all_rows.push(row.iter().map(|v| v.to_bits()).collect());
            }
        }
        let mut original: Vec<Vec<u64>> = d
            .features
            .outer_iter()
            .map(|row| row.iter().map(|v| v.to_bits()).collect())
            .collect();
        all_rows.sort();
        original.sort();
        assert_eq!(all_rows, original);
        assert!(split(&d, 0.0, 1).is_err());
        assert!(split(&d, 1.0, 1).is_err());
    }
}
