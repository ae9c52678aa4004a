//! Regression-tree ensembles: CART with squared-error splits, bagged forests
//! and least-squares gradient boosting.

mod cart;
mod ensemble;
mod serialize;

use thiserror::Error;

pub use cart::{fit_tree, split_candidates, BinnedMatrix, TreeParams};
pub use ensemble::{fit_bagged, fit_boosted, fit_boosted_traced, fit_single_tree, BoostTrace};
pub use serialize::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use crate::spectral::{SegmentFeatures, FEATURE_NAMES, N_FEATURES};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("model has no trees")]
    ModelEmpty,
    #[error("model schema version {found:?} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: String, expected: String },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("invalid fit config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self, TreeError> {
        if data.len() != n_rows * n_cols {
            return Err(TreeError::DimensionMismatch {
                expected: n_rows * n_cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TreeError::DegenerateData("non-finite feature value".into()));
        }
        Ok(Self { data, n_rows, n_cols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, TreeError> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(TreeError::DimensionMismatch {
                    expected: n_cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(data, rows.len(), n_cols)
    }

    pub fn from_features(rows: &[SegmentFeatures]) -> Result<Self, TreeError> {
        let vecs: Vec<[f64; N_FEATURES]> = rows.iter().map(SegmentFeatures::vector).collect();
        if vecs.is_empty() {
            return Self::new(Vec::new(), 0, N_FEATURES);
        }
        Self::from_rows(&vecs)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    /// Rows selected by `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            data,
            n_rows: idx.len(),
            n_cols: self.n_cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    Bagged,
    Boosted,
}

impl std::fmt::Display for EnsembleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnsembleMode::Bagged => "bagged",
            EnsembleMode::Boosted => "boosted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SplitMode {
    /// Every midpoint between consecutive distinct values.
    Exact,
    /// At most `max_bins` quantile thresholds per feature, fixed at fit start.
    Histogram { max_bins: usize },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features considered at each split.
    pub feature_subsample: f64,
    /// Fraction of rows drawn per tree.
    pub row_subsample: f64,
    /// Draw rows with replacement (bagging); otherwise without.
    pub bootstrap: bool,
    pub learning_rate: f64,
    pub split_mode: SplitMode,
    pub seed: u64,
}

impl FitConfig {
    pub fn bagged() -> Self {
        Self {
            n_trees: 300,
            max_depth: 6,
            min_samples_leaf: 5,
            feature_subsample: 1.0 / 3.0,
            row_subsample: 1.0,
            bootstrap: true,
            learning_rate: 0.1,
            split_mode: SplitMode::Exact,
            seed: 0,
        }
    }

    pub fn boosted() -> Self {
        Self {
            feature_subsample: 1.0,
            row_subsample: 0.8,
            bootstrap: false,
            ..Self::bagged()
        }
    }

    /// One deterministic CART on all rows and features.
    pub fn single_tree() -> Self {
        Self {
            n_trees: 1,
            feature_subsample: 1.0,
            bootstrap: false,
            ..Self::bagged()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if self.n_trees == 0 {
            return Err(TreeError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if !frac_ok(self.feature_subsample) || !frac_ok(self.row_subsample) {
            return Err(TreeError::InvalidConfig("subsample fractions must be in (0, 1]".into()));
        }
        if !frac_ok(self.learning_rate) {
            return Err(TreeError::InvalidConfig("learning_rate must be in (0, 1]".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(TreeError::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        if let SplitMode::Histogram { max_bins } = self.split_mode {
            if !(2..=256).contains(&max_bins) {
                return Err(TreeError::InvalidConfig("max_bins must be in 2..=256".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            feature_subsample: self.feature_subsample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingMeta {
    pub config: FitConfig,
    pub n_rows: usize,
    /// SHA-256 of the training matrix and labels.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub mode: EnsembleMode,
    pub trees: Vec<TreeNode>,
    /// Shrinkage; unused for bagged models.
    pub learning_rate: f64,
    /// Initial prediction for boosted models (label mean).
    pub base_score: f64,
    pub feature_names: Vec<String>,
    pub training_meta: TrainingMeta,
}

impl EnsembleModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64, TreeError> {
        if self.trees.is_empty() {
            return Err(TreeError::ModelEmpty);
        }
        if x.len() != self.n_features() {
            return Err(TreeError::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(match self.mode {
            EnsembleMode::Bagged => sum / self.trees.len() as f64,
            EnsembleMode::Boosted => self.base_score + self.learning_rate * sum,
        })
    }

    pub fn predict(&self, x: &SegmentFeatures) -> Result<f64, TreeError> {
        self.predict_row(&x.vector())
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>, TreeError> {
        (0..x.n_rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

pub(crate) fn default_feature_names(n: usize) -> Vec<String> {
    if n == N_FEATURES {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|i| format!("f{i}")).collect()
    }
}

pub(crate) fn fingerprint(x: &Matrix, y: &[f64]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update((x.n_rows() as u64).to_le_bytes());
    h.update((x.n_cols() as u64).to_le_bytes());
    for v in &x.data {
        h.update(v.to_le_bytes());
    }
    for v in y {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_model_predicts_constant() {
        let m = EnsembleModel {
            mode: EnsembleMode::Bagged,
            trees: vec![TreeNode::Leaf { value: 95.0 }],
            learning_rate: 0.1,
            base_score: 0.0,
            feature_names: default_feature_names(7),
            training_meta: TrainingMeta {
                config: FitConfig::single_tree(),
                n_rows: 0,
                fingerprint: String::new(),
            },
        };
        assert_eq!(m.predict_row(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap(), 95.0);
        assert_eq!(m.predict_row(&[-9.0; 7]).unwrap(), 95.0);
        assert!(matches!(
            m.predict_row(&[0.0; 3]),
            Err(TreeError::DimensionMismatch { .. })
        ));
        let empty = EnsembleModel { trees: vec![], ..m };
        assert_eq!(empty.predict_row(&[0.0; 7]), Err(TreeError::ModelEmpty));
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::bagged().validate().is_ok());
        assert!(FitConfig {
            n_trees: 0,
            ..FitConfig::bagged()
        }
        .validate()
        .is_err());
        assert!(FitConfig {
            row_subsample: 1.5,
            ..FitConfig::bagged()
        }
        .validate()
        .is_err());
        assert!(FitConfig {
            learning_rate: 0.0,
            ..FitConfig::boosted()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn matrix_rejects_ragged_and_nan() {
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(Matrix::from_rows(&[vec![f64::NAN]]).is_err());
    }
}
