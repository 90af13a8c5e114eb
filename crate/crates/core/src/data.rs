//! CSV ingestion, preprocessing, and seeded sampling into
//! labeled/unlabeled/test splits and k-folds.
//!
//! Randomness contract: all sampling is driven by `ChaCha8Rng` seeded from a
//! [`Seed`]. Repeat `r` of an experiment uses `base_seed.wrapping_add(r)`, so
//! runs are reproducible no matter how repeats are scheduled.

use crate::numerics::{Matrix, Vector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("label column has {got} distinct values, expected exactly 2")]
    LabelCardinality { got: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("column '{column}' has no observed values to impute from")]
    AllMissing { column: String },
    #[error("insufficient rows: requested {requested}, pool has {available}")]
    InsufficientRows { requested: usize, available: usize },
    #[error("dataset still contains missing values; run median imputation first")]
    MissingValues,
    #[error("dataset has no label column loaded")]
    NoLabels,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// 64-bit seed for the ChaCha8 generator behind all sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed(pub u64);

impl Seed {
    /// Stream-split rule: repeat `r` uses `base + r` (wrapping).
    pub fn offset(self, r: u64) -> Seed {
        Seed(self.0.wrapping_add(r))
    }

    pub(crate) fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// A feature table with an optional binary label vector.
///
/// Features exclude the bias column; missing cells are NaN markers until
/// [`impute_median`] clears them.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vector>,
    feature_names: Vec<String>,
    label_name: String,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Option<Vector>,
        feature_names: Vec<String>,
        label_name: String,
    ) -> Result<Self, DataError> {
        if let Some(y) = &labels {
            if y.len() != features.rows() {
                return Err(DataError::Parse(format!(
                    "label count {} does not match row count {}",
                    y.len(),
                    features.rows()
                )));
            }
            if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(DataError::Parse("labels must be 0 or 1".into()));
            }
        }
        Ok(Self { features, labels, feature_names, label_name })
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&Vector> {
        self.labels.as_ref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn has_missing(&self) -> bool {
        self.features.as_slice().iter().any(|v| v.is_nan())
    }
}

/// Loads an RFC-4180-style CSV with a header row. The named label column is
/// mapped to {0,1} by lexicographic order of its two distinct string values
/// (smaller value becomes 0); every other column must be numeric, with empty
/// fields treated as missing.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                DataError::Io(std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()))
            }
            _ => DataError::Parse(e.to_string()),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse(e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            DataError::Parse(format!("label column '{label_column}' not found in header"))
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut raw_labels: Vec<String> = Vec::new();
    let mut cells: Vec<f64> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Parse(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(DataError::Parse(format!(
                "row {}: {} fields, header has {}",
                row_no + 1,
                record.len(),
                headers.len()
            )));
        }
        for (i, field) in record.iter().enumerate() {
            if i == label_idx {
                if field.is_empty() {
                    return Err(DataError::Parse(format!("row {}: empty label", row_no + 1)));
                }
                raw_labels.push(field.to_string());
            } else if field.is_empty() {
                cells.push(f64::NAN);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    DataError::Parse(format!(
                        "row {}, column '{}': '{field}' is not numeric",
                        row_no + 1,
                        headers.get(i).unwrap_or("?")
                    ))
                })?;
                if !v.is_finite() {
                    return Err(DataError::Parse(format!(
                        "row {}: non-finite value '{field}'",
                        row_no + 1
                    )));
                }
                cells.push(v);
            }
        }
    }

    let mut distinct: Vec<&String> = Vec::new();
    for l in &raw_labels {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    if distinct.len() != 2 {
        return Err(DataError::LabelCardinality { got: distinct.len() });
    }
    distinct.sort();
    let zero_value = distinct[0].clone();
    let labels = Vector::new(
        raw_labels
            .iter()
            .map(|l| if *l == zero_value { 0.0 } else { 1.0 })
            .collect(),
    )
    .expect("binary labels are finite");

    let n_rows = raw_labels.len();
    let n_features = feature_names.len();
    let features = Matrix::with_missing_markers(n_rows, n_features, cells);
    Dataset::new(features, Some(labels), feature_names, label_column.to_string())
}

/// Replaces each missing cell by the median of its column's observed values.
/// For an even number of observations the median is the mean of the two
/// middle values. Observed cells are returned bit-identical.
pub fn impute_median(ds: &Dataset) -> Result<Dataset, DataError> {
    if !ds.has_missing() {
        return Ok(ds.clone());
    }
    let (rows, cols) = (ds.n_rows(), ds.n_features());
    let mut medians = vec![0.0; cols];
    for j in 0..cols {
        let mut observed: Vec<f64> = (0..rows)
            .map(|i| ds.features.get(i, j))
            .filter(|v| !v.is_nan())
            .collect();
        if observed.is_empty() {
            return Err(DataError::AllMissing { column: ds.feature_names[j].clone() });
        }
        observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = observed.len();
        medians[j] = if m % 2 == 1 {
            observed[m / 2]
        } else {
            0.5 * (observed[m / 2 - 1] + observed[m / 2])
        };
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = ds.features.get(i, j);
            data.push(if v.is_nan() { medians[j] } else { v });
        }
    }
    Ok(Dataset {
        features: Matrix::new_unchecked(rows, cols, data),
        labels: ds.labels.clone(),
        feature_names: ds.feature_names.clone(),
        label_name: ds.label_name.clone(),
    })
}

/// Prepends a column of ones. Not idempotent: augmenting twice stacks two
/// ones-columns.
pub fn augment_bias(features: &Matrix) -> Matrix {
    let (rows, cols) = (features.rows(), features.cols());
    let mut data = Vec::with_capacity(rows * (cols + 1));
    for i in 0..rows {
        data.push(1.0);
        data.extend_from_slice(features.row(i));
    }
    Matrix::new_unchecked(rows, cols + 1, data)
}

/// Labeled block, unlabeled block with hidden true labels, and an optional
/// test block. All design matrices are bias-augmented and share a column
/// count; invariants are checked on construction.
#[derive(Debug, Clone)]
pub struct SemiSplit {
    x: Matrix,
    y: Vector,
    x_u: Matrix,
    y_u_true: Vector,
    x_test: Option<Matrix>,
    y_test: Option<Vector>,
}

impl SemiSplit {
    pub fn new(
        x: Matrix,
        y: Vector,
        x_u: Matrix,
        y_u_true: Vector,
        x_test: Option<Matrix>,
        y_test: Option<Vector>,
    ) -> Result<Self, DataError> {
        if x.rows() == 0 {
            return Err(DataError::InsufficientRows { requested: 1, available: 0 });
        }
        let check_block = |m: &Matrix, name: &str| -> Result<(), DataError> {
            if m.cols() != x.cols() {
                return Err(DataError::Parse(format!(
                    "{name} has {} columns, labeled block has {}",
                    m.cols(),
                    x.cols()
                )));
            }
            for i in 0..m.rows() {
                if m.get(i, 0) != 1.0 {
                    return Err(DataError::Parse(format!(
                        "{name} row {i} is not bias-augmented"
                    )));
                }
            }
            Ok(())
        };
        check_block(&x, "labeled block")?;
        check_block(&x_u, "unlabeled block")?;
        if let Some(t) = &x_test {
            check_block(t, "test block")?;
        }
        let check_binary = |v: &Vector, name: &str| -> Result<(), DataError> {
            if v.iter().any(|l| *l != 0.0 && *l != 1.0) {
                return Err(DataError::Parse(format!("{name} labels must be 0 or 1")));
            }
            Ok(())
        };
        check_binary(&y, "labeled")?;
        check_binary(&y_u_true, "unlabeled")?;
        if y.len() != x.rows() || y_u_true.len() != x_u.rows() {
            return Err(DataError::Parse("label/row count mismatch".into()));
        }
        if let (Some(t), Some(yt)) = (&x_test, &y_test) {
            check_binary(yt, "test")?;
            if yt.len() != t.rows() {
                return Err(DataError::Parse("test label/row count mismatch".into()));
            }
        }
        Ok(Self { x, y, x_u, y_u_true, x_test, y_test })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn x_unlabeled(&self) -> &Matrix {
        &self.x_u
    }

    /// Hidden ground truth for the unlabeled block; evaluation only.
    pub fn y_unlabeled_true(&self) -> &Vector {
        &self.y_u_true
    }

    pub fn x_test(&self) -> Option<&Matrix> {
        self.x_test.as_ref()
    }

    pub fn y_test(&self) -> Option<&Vector> {
        self.y_test.as_ref()
    }

    pub fn n_labeled(&self) -> usize {
        self.x.rows()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.x_u.rows()
    }

    pub fn n_columns(&self) -> usize {
        self.x.cols()
    }

    /// `[X; X_u]` stacked design over labeled and unlabeled objects.
    pub fn extended_design(&self) -> Matrix {
        Matrix::vstack(&self.x, &self.x_u)
    }

    /// `[y; y_u*]` with the hidden true labels; evaluation only.
    pub fn extended_true_labels(&self) -> Vector {
        self.y.concat(&self.y_u_true)
    }
}

/// Optional feature transforms applied while assembling a split.
#[derive(Debug, Clone, Copy, Default)]
pub struct SplitOptions {
    /// Z-score features using labeled+unlabeled statistics before
    /// bias augmentation. Constant columns are left unscaled.
    pub standardize: bool,
}

/// Assembles a [`SemiSplit`] from explicit row indices. Duplicate indices
/// are allowed (sampling with replacement produces them).
pub fn split_from_indices(
    ds: &Dataset,
    labeled: &[usize],
    unlabeled: &[usize],
    test: &[usize],
    opts: SplitOptions,
) -> Result<SemiSplit, DataError> {
    let y_all = ds.labels().ok_or(DataError::NoLabels)?;
    if ds.has_missing() {
        return Err(DataError::MissingValues);
    }
    if labeled.is_empty() {
        return Err(DataError::InsufficientRows { requested: 1, available: 0 });
    }
    let d = ds.n_features();
    let gather = |idx: &[usize]| -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(ds.features().row(i));
        }
        Matrix::new_unchecked(idx.len(), d, data)
    };
    let gather_labels = |idx: &[usize]| -> Vector {
        Vector::new_unchecked(idx.iter().map(|&i| y_all[i]).collect())
    };

    let mut x_l = gather(labeled);
    let mut x_u = gather(unlabeled);
    let mut x_t = if test.is_empty() { None } else { Some(gather(test)) };

    if opts.standardize && d > 0 {
        let n_stat = x_l.rows() + x_u.rows();
        let mut mean = vec![0.0; d];
        for m in [&x_l, &x_u] {
            for i in 0..m.rows() {
                for (acc, v) in mean.iter_mut().zip(m.row(i)) {
                    *acc += v;
                }
            }
        }
        for v in &mut mean {
            *v /= n_stat as f64;
        }
        let mut var = vec![0.0; d];
        for m in [&x_l, &x_u] {
            for i in 0..m.rows() {
                for ((acc, mu), v) in var.iter_mut().zip(&mean).zip(m.row(i)) {
                    let centered = v - mu;
                    *acc += centered * centered;
                }
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = (v / n_stat as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let apply = |m: &mut Matrix| {
            for i in 0..m.rows() {
                for (j, v) in m.row_mut(i).iter_mut().enumerate() {
                    *v = (*v - mean[j]) / scale[j];
                }
            }
        };
        apply(&mut x_l);
        apply(&mut x_u);
        if let Some(t) = &mut x_t {
            apply(t);
        }
    }

    SemiSplit::new(
        augment_bias(&x_l),
        gather_labels(labeled),
        augment_bias(&x_u),
        gather_labels(unlabeled),
        x_t.map(|t| augment_bias(&t)),
        if test.is_empty() { None } else { Some(gather_labels(test)) },
    )
}

pub(crate) struct DrawnIndices {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws the index sets behind [`sample_split`]. Labeled rows are always
/// drawn without replacement; unlabeled/test rows come either with
/// replacement from the full dataset or without replacement from the pool
/// of rows not yet taken.
pub(crate) fn draw_split_indices(
    n_rows: usize,
    n_labeled: usize,
    n_unlabeled: usize,
    n_test: usize,
    seed: Seed,
    unlabeled_with_replacement: bool,
    test_with_replacement: bool,
) -> Result<DrawnIndices, DataError> {
    let mut rng = seed.rng();
    let mut pool: Vec<usize> = (0..n_rows).collect();
    pool.shuffle(&mut rng);
    if n_labeled > pool.len() {
        return Err(DataError::InsufficientRows {
            requested: n_labeled,
            available: pool.len(),
        });
    }
    let labeled: Vec<usize> = pool.drain(..n_labeled).collect();

    let draw = |count: usize,
                    with_replacement: bool,
                    pool: &mut Vec<usize>,
                    rng: &mut ChaCha8Rng|
     -> Result<Vec<usize>, DataError> {
        if with_replacement {
            Ok((0..count).map(|_| rng.gen_range(0..n_rows)).collect())
        } else {
            if count > pool.len() {
                return Err(DataError::InsufficientRows {
                    requested: count,
                    available: pool.len(),
                });
            }
            Ok(pool.drain(..count).collect())
        }
    };
    let unlabeled = draw(n_unlabeled, unlabeled_with_replacement, &mut pool, &mut rng)?;
    let test = draw(n_test, test_with_replacement, &mut pool, &mut rng)?;
    Ok(DrawnIndices { labeled, unlabeled, test })
}

/// Seeded sampling of a labeled/unlabeled/test split.
///
/// With the replacement flags set, unlabeled and test objects are resampled
/// with replacement from the full dataset; otherwise they are drawn without
/// replacement from the rows not already used.
#[allow(clippy::too_many_arguments)]
pub fn sample_split(
    ds: &Dataset,
    n_labeled: usize,
    n_unlabeled: usize,
    n_test: usize,
    seed: Seed,
    unlabeled_with_replacement: bool,
    test_with_replacement: bool,
) -> Result<SemiSplit, DataError> {
    let drawn = draw_split_indices(
        ds.n_rows(),
        n_labeled,
        n_unlabeled,
        n_test,
        seed,
        unlabeled_with_replacement,
        test_with_replacement,
    )?;
    split_from_indices(
        ds,
        &drawn.labeled,
        &drawn.unlabeled,
        &drawn.test,
        SplitOptions::default(),
    )
}

/// Fold partition driven by a caller-owned generator so protocols can keep
/// drawing from the same per-repeat stream.
pub(crate) fn kfold_from_rng(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    assert!(k >= 2, "k must be at least 2");
    assert!(n >= k, "need at least one row per fold");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let base = n / k;
    let remainder = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < remainder);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    folds
}

/// Seeded partition of `{0..n-1}` into `k` folds whose sizes differ by at
/// most one.
pub fn kfold_indices(n: usize, k: usize, seed: Seed) -> Vec<Vec<usize>> {
    kfold_from_rng(n, k, &mut seed.rng())
}
