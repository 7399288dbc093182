//! Labeled tabular datasets and embedding tables: loading, synthesis,
//! imbalance construction, stratified splitting, and standardization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::train::HeadWeights;

/// Labeled feature matrix with dense class ids in [0, C).
///
/// `num_classes` is fixed at construction and survives subsetting, so a
/// split that happens to drop a class keeps the original class space.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    features: Matrix<F>,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
    num_classes: usize,
    /// Source label value for each dense class id.
    original_class_ids: Vec<u64>,
}

impl<F: Scalar> Dataset<F> {
    /// Builds a dataset, validating labels, shapes, and finiteness.
    pub fn new(
        features: Matrix<F>,
        labels: Vec<usize>,
        num_classes: usize,
        original_class_ids: Vec<u64>,
    ) -> Result<Self> {
        if features.n_rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.n_rows(),
                labels.len()
            )));
        }
        if features.n_rows() == 0 {
            return Err(Error::InvalidData("empty dataset".into()));
        }
        if features.n_cols() == 0 {
            return Err(Error::InvalidData("dataset needs at least one feature".into()));
        }
        if num_classes == 0 || original_class_ids.len() != num_classes {
            return Err(Error::InvalidData(format!(
                "{} original class ids for {num_classes} classes",
                original_class_ids.len()
            )));
        }
        for (i, row) in features.iter_rows().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite feature value in row {i}")));
            }
        }
        let mut class_counts = vec![0usize; num_classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= num_classes {
                return Err(Error::InvalidData(format!(
                    "label {l} in row {i} outside [0, {num_classes})"
                )));
            }
            class_counts[l] += 1;
        }
        Ok(Dataset { features, labels, class_counts, num_classes, original_class_ids })
    }

    /// Dataset whose dense ids are the identity mapping 0..C.
    pub fn with_dense_ids(features: Matrix<F>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ids = (0..num_classes as u64).collect();
        Dataset::new(features, labels, num_classes, ids)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.n_cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix<F> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn original_class_ids(&self) -> &[u64] {
        &self.original_class_ids
    }

    pub fn row(&self, i: usize) -> &[F] {
        self.features.row(i)
    }

    /// Row indices of one class, ascending.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == class).collect()
    }

    /// Largest per-class training count.
    pub fn max_class_count(&self) -> usize {
        self.class_counts.iter().copied().max().unwrap_or(0)
    }

    /// All classes holding the maximal count (the majority group).
    pub fn majority_classes(&self) -> Vec<usize> {
        let max = self.max_class_count();
        (0..self.num_classes).filter(|&c| self.class_counts[c] == max).collect()
    }

    /// New dataset holding the listed rows; class space is preserved.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(features, labels, self.num_classes, self.original_class_ids.clone())
    }

    /// Replaces the feature matrix, keeping labels and class metadata.
    pub fn with_features(&self, features: Matrix<F>) -> Result<Self> {
        Dataset::new(
            features,
            self.labels.clone(),
            self.num_classes,
            self.original_class_ids.clone(),
        )
    }
}

/// Pooled deep-feature embeddings with labels and an optional trained head.
#[derive(Debug, Clone)]
pub struct EmbeddingSet<F: Scalar> {
    data: Dataset<F>,
    head: Option<HeadWeights<F>>,
}

impl<F: Scalar> EmbeddingSet<F> {
    pub fn new(data: Dataset<F>, head: Option<HeadWeights<F>>) -> Result<Self> {
        if let Some(h) = &head {
            if h.feature_dim() != data.feature_dim() {
                return Err(Error::Shape(format!(
                    "head expects dimension {}, embeddings have {}",
                    h.feature_dim(),
                    data.feature_dim()
                )));
            }
            if h.num_classes() != data.num_classes() {
                return Err(Error::Shape(format!(
                    "head has {} classes, embeddings have {}",
                    h.num_classes(),
                    data.num_classes()
                )));
            }
            let dense = (0..data.num_classes() as u64).collect::<Vec<_>>();
            if data.original_class_ids() != dense.as_slice() {
                return Err(Error::InvalidData(
                    "embedding labels must already be dense 0..C when a head is provided".into(),
                ));
            }
        }
        Ok(EmbeddingSet { data, head })
    }

    pub fn dataset(&self) -> &Dataset<F> {
        &self.data
    }

    pub fn embeddings(&self) -> &Matrix<F> {
        self.data.features()
    }

    pub fn labels(&self) -> &[usize] {
        self.data.labels()
    }

    pub fn head(&self) -> Option<&HeadWeights<F>> {
        self.head.as_ref()
    }

    pub fn feature_dim(&self) -> usize {
        self.data.feature_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.data.num_classes()
    }
}

/// CSV layout for `load_csv`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default)]
    pub has_header: bool,
    /// Zero-based label column; the last column when absent.
    #[serde(default)]
    pub label_column: Option<usize>,
}

/// Floor with a tiny relative guard so values that are mathematically
/// integral but land a hair below (e.g. 0.7 * 90 = 62.999...) floor to the
/// intended integer.
pub(crate) fn floor_guard(x: f64) -> usize {
    (x * (1.0 + 1e-12) + 1e-12).floor() as usize
}

/// Loads a labeled CSV. Labels are remapped to dense ids in [0, C) by
/// ascending source value; row order is preserved.
pub fn load_csv<F: Scalar>(path: &Path, schema: &CsvSchema) -> Result<Dataset<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e.to_string()))?;

    let mut raw_rows: Vec<Vec<F>> = Vec::new();
    let mut raw_labels: Vec<u64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e.to_string()))?;
        let width = record.len();
        if width < 2 {
            return Err(Error::csv(
                path,
                format!("row {row_idx} has {width} columns; need at least one feature and a label"),
            ));
        }
        let label_col = schema.label_column.unwrap_or(width - 1);
        if label_col >= width {
            return Err(Error::csv(
                path,
                format!("label column {label_col} out of range for {width} columns"),
            ));
        }
        let mut row = Vec::with_capacity(width - 1);
        for (col, cell) in record.iter().enumerate() {
            if col == label_col {
                let label: u64 = cell.parse().map_err(|_| {
                    Error::csv(
                        path,
                        format!("row {row_idx}: label '{cell}' is not a non-negative integer"),
                    )
                })?;
                raw_labels.push(label);
            } else {
                let v: F = cell.parse().map_err(|_| {
                    Error::csv(path, format!("row {row_idx} column {col}: cannot parse '{cell}'"))
                })?;
                if !v.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "non-finite value at row {row_idx} column {col}"
                    )));
                }
                row.push(v);
            }
        }
        raw_rows.push(row);
    }
    if raw_rows.is_empty() {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }

    let mut id_map = BTreeMap::new();
    for &l in &raw_labels {
        id_map.entry(l).or_insert(0usize);
    }
    let original_class_ids: Vec<u64> = id_map.keys().copied().collect();
    for (dense, (_, slot)) in id_map.iter_mut().enumerate() {
        *slot = dense;
    }
    let labels: Vec<usize> = raw_labels.iter().map(|l| id_map[l]).collect();
    let num_classes = original_class_ids.len();

    Dataset::new(Matrix::from_rows(raw_rows)?, labels, num_classes, original_class_ids)
}

/// Loads an embedding table (header columns f0..f{D-1} plus `label`) and an
/// optional head weights JSON file {"W": [[..]; C], "b": [..; C]}.
pub fn load_embedding_table<F: Scalar>(
    path: &Path,
    head_path: Option<&Path>,
) -> Result<EmbeddingSet<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e.to_string()))?;

    let headers = reader.headers().map_err(|e| Error::csv(path, e.to_string()))?.clone();
    let mut feature_cols: Vec<(usize, usize)> = Vec::new(); // (feature index, column)
    let mut label_col = None;
    for (col, name) in headers.iter().enumerate() {
        if name == "label" {
            if label_col.is_some() {
                return Err(Error::csv(path, "duplicate label column"));
            }
            label_col = Some(col);
        } else if let Some(idx) = name.strip_prefix('f').and_then(|s| s.parse::<usize>().ok()) {
            feature_cols.push((idx, col));
        } else {
            return Err(Error::csv(path, format!("unexpected column '{name}'")));
        }
    }
    let label_col = label_col.ok_or_else(|| Error::csv(path, "missing label column"))?;
    feature_cols.sort_unstable();
    let dim = feature_cols.len();
    if dim == 0 {
        return Err(Error::csv(path, "no feature columns f0..fN"));
    }
    for (want, &(got, _)) in feature_cols.iter().enumerate() {
        if got != want {
            return Err(Error::csv(path, format!("feature columns not contiguous: missing f{want}")));
        }
    }

    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut raw_labels: Vec<u64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e.to_string()))?;
        let cell = record.get(label_col).ok_or_else(|| {
            Error::csv(path, format!("row {row_idx}: missing label cell"))
        })?;
        let label: u64 = cell.parse().map_err(|_| {
            Error::csv(path, format!("row {row_idx}: label '{cell}' is not a non-negative integer"))
        })?;
        raw_labels.push(label);
        let mut row = Vec::with_capacity(dim);
        for &(fi, col) in &feature_cols {
            let cell = record
                .get(col)
                .ok_or_else(|| Error::csv(path, format!("row {row_idx}: missing f{fi}")))?;
            let v: F = cell.parse().map_err(|_| {
                Error::csv(path, format!("row {row_idx} column f{fi}: cannot parse '{cell}'"))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }

    let mut id_map = BTreeMap::new();
    for &l in &raw_labels {
        id_map.entry(l).or_insert(0usize);
    }
    let original_class_ids: Vec<u64> = id_map.keys().copied().collect();
    for (dense, (_, slot)) in id_map.iter_mut().enumerate() {
        *slot = dense;
    }
    let labels: Vec<usize> = raw_labels.iter().map(|l| id_map[l]).collect();
    let num_classes = original_class_ids.len();
    let data = Dataset::new(Matrix::from_rows(rows)?, labels, num_classes, original_class_ids)?;

    let head = match head_path {
        None => None,
        Some(hp) => {
            let text = std::fs::read_to_string(hp).map_err(|e| Error::io(hp, e))?;
            let head: HeadWeights<F> =
                serde_json::from_str(&text).map_err(|e| Error::json(hp, e.to_string()))?;
            Some(HeadWeights::new(head.weights, head.biases)?)
        }
    };
    EmbeddingSet::new(data, head)
}

/// Subsamples each class down to `targets[c]` rows uniformly at random,
/// keeping original row order among the retained rows.
fn subsample_to_targets<F: Scalar>(
    ds: &Dataset<F>,
    targets: &[usize],
    seed: u64,
) -> Result<Dataset<F>> {
    let mut rng = SeededRng::new(seed);
    let mut kept: Vec<usize> = Vec::new();
    for c in 0..ds.num_classes() {
        let idx = ds.class_indices(c);
        let want = targets[c];
        if idx.len() < want {
            return Err(Error::InvalidData(format!(
                "class {c} has {} instances, needs {want}",
                idx.len()
            )));
        }
        if want == idx.len() {
            kept.extend_from_slice(&idx);
        } else {
            kept.extend(rng.sample_indices(idx.len(), want).into_iter().map(|k| idx[k]));
        }
    }
    kept.sort_unstable();
    ds.subset(&kept)
}

/// Exponentially decaying class counts: class c keeps
/// floor(n_max * ratio^(-c / (C-1))) rows, so class 0 keeps n_max and class
/// C-1 keeps n_max / ratio.
pub fn apply_exponential_imbalance<F: Scalar>(
    ds: &Dataset<F>,
    n_max: usize,
    ratio: f64,
    seed: u64,
) -> Result<Dataset<F>> {
    if ratio < 1.0 {
        return Err(Error::InvalidConfig(format!("imbalance ratio {ratio} must be >= 1")));
    }
    let c_total = ds.num_classes();
    let targets: Vec<usize> = (0..c_total)
        .map(|c| {
            if c_total == 1 {
                n_max
            } else {
                floor_guard(n_max as f64 * ratio.powf(-(c as f64) / (c_total as f64 - 1.0)))
            }
        })
        .collect();
    subsample_to_targets(ds, &targets, seed)
}

/// Two-tier class counts: listed majority classes keep n_maj rows, all
/// others keep n_min.
pub fn apply_step_imbalance<F: Scalar>(
    ds: &Dataset<F>,
    majority_classes: &[usize],
    n_maj: usize,
    n_min: usize,
    seed: u64,
) -> Result<Dataset<F>> {
    if majority_classes.is_empty() {
        return Err(Error::InvalidConfig("step imbalance needs majority classes".into()));
    }
    if n_min == 0 || n_maj < n_min {
        return Err(Error::InvalidConfig(format!(
            "step imbalance needs n_maj >= n_min >= 1, got {n_maj} and {n_min}"
        )));
    }
    for &c in majority_classes {
        if c >= ds.num_classes() {
            return Err(Error::InvalidConfig(format!("majority class {c} out of range")));
        }
    }
    let targets: Vec<usize> = (0..ds.num_classes())
        .map(|c| if majority_classes.contains(&c) { n_maj } else { n_min })
        .collect();
    subsample_to_targets(ds, &targets, seed)
}

/// Per-class 70/30-style split; the train side takes floor(fraction * count)
/// rows of every class and the test side the rest.
pub fn stratified_split<F: Scalar>(
    ds: &Dataset<F>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset<F>, Dataset<F>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for c in 0..ds.num_classes() {
        let mut idx = ds.class_indices(c);
        if idx.len() < 2 {
            return Err(Error::InvalidData(format!(
                "class {c} has {} instance(s); stratified split needs at least 2",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        let n_train = floor_guard(train_fraction * idx.len() as f64);
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((ds.subset(&train_idx)?, ds.subset(&test_idx)?))
}

/// Synthetic Gaussian mixture: per-class mean vectors with one shared
/// diagonal covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GaussianSpec {
    pub fn validate(&self) -> Result<()> {
        if self.means.is_empty() {
            return Err(Error::InvalidConfig("gaussian spec needs at least one class".into()));
        }
        let dim = self.means[0].len();
        if dim == 0 {
            return Err(Error::InvalidConfig("gaussian means need at least one dimension".into()));
        }
        if self.means.iter().any(|m| m.len() != dim) {
            return Err(Error::InvalidConfig("gaussian means must share one dimension".into()));
        }
        if self.variances.len() != dim {
            return Err(Error::InvalidConfig(format!(
                "{} variances for dimension {dim}",
                self.variances.len()
            )));
        }
        if let Some(v) = self.variances.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::InvalidConfig(format!("non-positive variance {v}")));
        }
        if self.counts.len() != self.means.len() {
            return Err(Error::InvalidConfig(format!(
                "{} counts for {} classes",
                self.counts.len(),
                self.means.len()
            )));
        }
        if self.counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidConfig("per-class counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draws a dataset from per-class Gaussians, deterministically under seed.
pub fn synth_gaussian<F: Scalar>(spec: &GaussianSpec, seed: u64) -> Result<Dataset<F>> {
    spec.validate()?;
    let sds: Vec<f64> = spec.variances.iter().map(|v| v.sqrt()).collect();
    let mut rng = SeededRng::new(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, mean) in spec.means.iter().enumerate() {
        for _ in 0..spec.counts[c] {
            let row: Vec<F> = mean
                .iter()
                .zip(&sds)
                .map(|(&m, &sd)| F::from_f64_lossy(m + sd * rng.standard_normal_f64()))
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    Dataset::with_dense_ids(Matrix::from_rows(rows)?, labels, spec.means.len())
}

/// Per-column zero-mean unit-variance transform fitted on training data.
/// Constant columns are shifted to zero and left unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<F> {
    means: Vec<F>,
    scales: Vec<F>,
}

impl<F: Scalar> Standardizer<F> {
    pub fn fit(features: &Matrix<F>) -> Self {
        let n = features.n_rows();
        let d = features.n_cols();
        let inv_n = F::one() / F::from_f64_lossy(n as f64);
        let mut means = vec![F::zero(); d];
        for row in features.iter_rows() {
            for j in 0..d {
                means[j] += row[j];
            }
        }
        for m in &mut means {
            *m = *m * inv_n;
        }
        let mut scales = vec![F::zero(); d];
        for row in features.iter_rows() {
            for j in 0..d {
                let dlt = row[j] - means[j];
                scales[j] += dlt * dlt;
            }
        }
        for s in &mut scales {
            let sd = (*s * inv_n).sqrt();
            *s = if sd > F::zero() { sd } else { F::one() };
        }
        Standardizer { means, scales }
    }

    pub fn transform_row(&self, row: &[F]) -> Vec<F> {
        row.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn transform_matrix(&self, features: &Matrix<F>) -> Result<Matrix<F>> {
        Matrix::from_rows(features.iter_rows().map(|r| self.transform_row(r)).collect())
    }

    pub fn transform_dataset(&self, ds: &Dataset<F>) -> Result<Dataset<F>> {
        ds.with_features(self.transform_matrix(ds.features())?)
    }
}
