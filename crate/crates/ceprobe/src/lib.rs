//! Diagnostics toolkit for parametric classifiers under class imbalance.
//!
//! The crate decomposes predictions of logistic regression, RBF-kernel SVM,
//! and linear heads over deep-feature embeddings into per-feature
//! classification embeddings (CE), rebalances training data with five
//! oversampling methods, and measures how few high-magnitude CE dominate
//! each prediction.

pub mod augment;
pub mod chart;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod probe;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// `f64` row-major matrix.
pub type Matrix64 = matrix::Matrix<f64>;
/// `f64` labeled dataset.
pub type Dataset64 = dataset::Dataset<f64>;
/// `f64` embedding table with optional pretrained head.
pub type EmbeddingSet64 = dataset::EmbeddingSet<f64>;
/// `f64` per-feature standardizer.
pub type Standardizer64 = dataset::Standardizer<f64>;
/// `f64` logistic regression model.
pub type LogisticModel64 = train::LogisticModel<f64>;
/// `f64` RBF-kernel SVM model.
pub type SvmModel64 = train::SvmModel<f64>;
/// `f64` softmax head weights.
pub type HeadWeights64 = train::HeadWeights<f64>;
/// `f64` trained model handle for probing.
pub type TrainedModel64 = probe::TrainedModel<f64>;
/// `f64` per-instance CE decomposition.
pub type LogitDecomposition64 = probe::LogitDecomposition<f64>;
/// `f64` batch of CE decompositions.
pub type BatchDecomposition64 = probe::BatchDecomposition<f64>;
/// `f64` augmented training set.
pub type AugmentedSet64 = augment::AugmentedSet<f64>;
