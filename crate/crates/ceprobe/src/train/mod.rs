//! Trainers for the three classifier heads whose predictions the probe
//! decomposes: logistic regression, soft-margin RBF SVM, and a softmax
//! linear head over embeddings.

mod head;
mod logistic;
mod svm;

pub use head::{predict_head, train_softmax_head, HeadPrediction};
pub use logistic::{predict_logistic, train_logistic, BinaryPrediction};
pub use svm::{predict_svm, rbf_kernel, train_svm, SvmPrediction};

pub(crate) use svm::rbf_raw;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// RBF kernel width: either derived from the training data or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaSpec {
    /// gamma = 1 / (F_D * variance of all training feature values).
    #[serde(rename = "auto")]
    Auto,
    #[serde(untagged)]
    Explicit(f64),
}

/// Hyperparameters shared by all trainers. Fields irrelevant to a given
/// trainer are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub l2_strength: f64,
    /// Initial step size for the gradient trainers; halved whenever a step
    /// would increase the loss.
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Gradient infinity-norm stopping threshold for the gradient trainers.
    pub tolerance: f64,
    pub svm_c: f64,
    pub svm_gamma: GammaSpec,
    /// KKT violation threshold at which the SMO solver stops.
    pub svm_tolerance: f64,
    pub svm_max_pair_updates: usize,
    /// Whether soft-labeled batches are accepted (logistic and head only).
    pub soft_label_support: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_strength: 1e-4,
            learning_rate: 0.5,
            max_iterations: 5000,
            tolerance: 1e-7,
            svm_c: 1.0,
            svm_gamma: GammaSpec::Auto,
            svm_tolerance: 1e-3,
            svm_max_pair_updates: 1_000_000,
            soft_label_support: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l2_strength < 0.0 {
            return Err(Error::InvalidConfig("l2_strength must be >= 0".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if self.tolerance <= 0.0 || self.svm_tolerance <= 0.0 {
            return Err(Error::InvalidConfig("tolerances must be > 0".into()));
        }
        if self.svm_c <= 0.0 {
            return Err(Error::InvalidConfig("svm_c must be > 0".into()));
        }
        if let GammaSpec::Explicit(g) = self.svm_gamma {
            if !(g > 0.0) {
                return Err(Error::InvalidConfig("svm_gamma must be > 0".into()));
            }
        }
        if self.svm_max_pair_updates == 0 {
            return Err(Error::InvalidConfig("svm_max_pair_updates must be >= 1".into()));
        }
        Ok(())
    }
}

/// Labels for a training batch: hard class ids, or row-stochastic soft
/// label vectors (one row per sample, one column per class).
#[derive(Debug, Clone)]
pub enum Targets<F> {
    Hard(Vec<usize>),
    Soft(Matrix<F>),
}

impl<F: Scalar> Targets<F> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Hard(v) => v.len(),
            Targets::Soft(m) => m.n_rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_soft(&self) -> bool {
        matches!(self, Targets::Soft(_))
    }

    /// Class with the largest label component; ties go to the smallest id.
    pub fn dominant_label(&self, i: usize) -> usize {
        match self {
            Targets::Hard(v) => v[i],
            Targets::Soft(m) => {
                let row = m.row(i);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            }
        }
    }

    /// Per-sample scalar target for the binary logistic trainer: the weight
    /// on class 1.
    pub fn binary_target(&self, i: usize) -> Result<F> {
        match self {
            Targets::Hard(v) => match v[i] {
                0 => Ok(F::zero()),
                1 => Ok(F::one()),
                other => Err(Error::Training(format!(
                    "binary trainer got class id {other} at sample {i}"
                ))),
            },
            Targets::Soft(m) => {
                if m.n_cols() != 2 {
                    return Err(Error::Training(format!(
                        "binary trainer needs 2 label columns, got {}",
                        m.n_cols()
                    )));
                }
                Ok(m.row(i)[1])
            }
        }
    }
}

/// Convergence record for the gradient trainers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    pub final_loss: f64,
    pub converged: bool,
    /// Loss at the initial point followed by the loss after each accepted
    /// step; non-increasing by construction.
    pub loss_trace: Vec<f64>,
}

/// Solve statistics for the SMO solver.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SvmReport {
    pub pair_updates: usize,
    pub max_kkt_violation: f64,
    pub dual_objective: f64,
    pub converged: bool,
}

/// Binary logistic regression parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LogisticModel<F: Scalar> {
    #[serde(rename = "W")]
    pub weights: Vec<F>,
    #[serde(rename = "b")]
    pub bias: F,
    #[serde(skip)]
    pub config: TrainConfig,
    #[serde(skip)]
    pub report: TrainReport,
}

impl<F: Scalar> LogisticModel<F> {
    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }
}

/// Soft-margin RBF SVM parameters. `dual_coefficients[i]` is the signed
/// product alpha_i * y_i with y_i in {-1, +1}.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SvmModel<F: Scalar> {
    #[serde(rename = "SV")]
    pub support_vectors: Matrix<F>,
    #[serde(rename = "alpha")]
    pub dual_coefficients: Vec<F>,
    #[serde(rename = "b")]
    pub bias: F,
    #[serde(rename = "gamma")]
    pub gamma: F,
    #[serde(skip)]
    pub config: TrainConfig,
    #[serde(skip)]
    pub report: SvmReport,
}

impl<F: Scalar> SvmModel<F> {
    pub fn n_support_vectors(&self) -> usize {
        self.dual_coefficients.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.support_vectors.n_cols()
    }
}

/// Linear softmax head: one weight row and one bias per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HeadWeights<F: Scalar> {
    #[serde(rename = "W")]
    pub weights: Matrix<F>,
    #[serde(rename = "b")]
    pub biases: Vec<F>,
}

impl<F: Scalar> HeadWeights<F> {
    pub fn new(weights: Matrix<F>, biases: Vec<F>) -> Result<Self> {
        if weights.n_rows() != biases.len() {
            return Err(Error::Shape(format!(
                "head has {} weight rows but {} biases",
                weights.n_rows(),
                biases.len()
            )));
        }
        if weights.n_rows() < 2 {
            return Err(Error::InvalidData("head needs at least 2 classes".into()));
        }
        let head = HeadWeights { weights, biases };
        head.check_finite()?;
        Ok(head)
    }

    fn check_finite(&self) -> Result<()> {
        let finite = self.weights.iter_rows().flatten().all(|v| v.is_finite())
            && self.biases.iter().all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidData("head parameters must be finite".into()))
        }
    }

    pub fn num_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.n_cols()
    }
}

/// Full-batch gradient descent with backtracking halving of the step size.
///
/// `eval` returns the loss and gradient at a parameter vector. A step is
/// accepted only if it does not increase the loss, so the recorded trace is
/// non-increasing. Stops when the gradient infinity-norm drops below
/// `cfg.tolerance`, the iteration cap is reached, or no descent step exists.
pub(crate) fn descend<F: Scalar>(
    init: Vec<F>,
    cfg: &TrainConfig,
    eval: impl Fn(&[F]) -> (F, Vec<F>),
) -> Result<(Vec<F>, TrainReport)> {
    let mut params = init;
    let (mut loss, mut grad) = eval(&params);
    if !loss.is_finite() {
        return Err(Error::Training("non-finite loss at iteration 0".into()));
    }
    let mut trace = vec![loss.to_f64().unwrap_or(f64::NAN)];
    let mut lr = cfg.learning_rate;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..cfg.max_iterations {
        if inf_norm(&grad) < F::from_f64_lossy(cfg.tolerance) {
            converged = true;
            break;
        }
        let mut accepted = false;
        let mut saw_nonfinite = false;
        while lr >= 1e-30 {
            let step = F::from_f64_lossy(lr);
            let cand: Vec<F> =
                params.iter().zip(&grad).map(|(&p, &g)| p - step * g).collect();
            let (cand_loss, cand_grad) = eval(&cand);
            if cand_loss.is_finite() && cand_loss <= loss {
                params = cand;
                loss = cand_loss;
                grad = cand_grad;
                trace.push(loss.to_f64().unwrap_or(f64::NAN));
                iterations = it + 1;
                lr = (lr * 2.0).min(cfg.learning_rate);
                accepted = true;
                break;
            }
            if !cand_loss.is_finite() {
                saw_nonfinite = true;
            }
            lr /= 2.0;
        }
        if !accepted {
            if saw_nonfinite {
                return Err(Error::Training(format!("non-finite loss at iteration {it}")));
            }
            // No descent direction left at machine precision; treat the
            // current point as final.
            break;
        }
    }
    if !converged {
        converged = inf_norm(&grad) < F::from_f64_lossy(cfg.tolerance);
    }
    let report = TrainReport {
        iterations,
        final_loss: loss.to_f64().unwrap_or(f64::NAN),
        converged,
        loss_trace: trace,
    };
    Ok((params, report))
}

fn inf_norm<F: Scalar>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |m, &x| m.max(x.abs()))
}

/// Resolves the RBF gamma against the training features.
pub fn resolve_gamma<F: Scalar>(spec: GammaSpec, features: &Matrix<F>) -> Result<f64> {
    match spec {
        GammaSpec::Explicit(g) => Ok(g),
        GammaSpec::Auto => {
            let d = features.n_cols();
            let var = flat_variance(features);
            if var <= 0.0 {
                return Err(Error::InvalidData(
                    "auto gamma undefined: training features have zero variance".into(),
                ));
            }
            Ok(1.0 / (d as f64 * var))
        }
    }
}

/// Population variance of every entry of the matrix, in f64.
pub fn flat_variance<F: Scalar>(features: &Matrix<F>) -> f64 {
    let mut n = 0usize;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for row in features.iter_rows() {
        for &v in row {
            let v = v.to_f64().unwrap_or(f64::NAN);
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
    }
    if n == 0 {
        0.0
    } else {
        m2 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_spec_round_trips_both_forms() {
        let auto: GammaSpec = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(auto, GammaSpec::Auto);
        let explicit: GammaSpec = serde_json::from_str("0.25").unwrap();
        assert_eq!(explicit, GammaSpec::Explicit(0.25));
        assert_eq!(serde_json::to_string(&GammaSpec::Auto).unwrap(), "\"auto\"");
    }

    #[test]
    fn default_config_validates() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = TrainConfig::default();
        cfg.svm_c = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.svm_gamma = GammaSpec::Explicit(-1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn auto_gamma_matches_flat_variance() {
        let m = Matrix::from_rows(vec![vec![0.0_f64, 2.0], vec![2.0, 0.0]]).unwrap();
        // entries {0,2,2,0}: mean 1, population variance 1
        let g = resolve_gamma(GammaSpec::Auto, &m).unwrap();
        assert!((g - 1.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn model_json_uses_documented_keys() {
        let model = LogisticModel {
            weights: vec![1.0_f64, -2.0],
            bias: 0.5,
            config: TrainConfig::default(),
            report: TrainReport::default(),
        };
        let json = serde_json::to_string(&model).unwrap();
        assert_eq!(json, "{\"W\":[1.0,-2.0],\"b\":0.5}");
        let back: LogisticModel<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.weights, model.weights);
        assert_eq!(back.bias, model.bias);
    }

    #[test]
    fn soft_targets_expose_dominant_label() {
        let t: Targets<f64> =
            Targets::Soft(Matrix::from_rows(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap());
        assert_eq!(t.dominant_label(0), 0);
        assert_eq!(t.dominant_label(1), 1);
        assert_eq!(t.binary_target(0).unwrap(), 0.3);
    }
}
