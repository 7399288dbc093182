//! L2-regularized binary logistic regression trained by full-batch
//! gradient descent.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::scalar::Scalar;

use super::{descend, LogisticModel, Targets, TrainConfig};

/// Label and raw score (W·x + b) for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPrediction<F> {
    pub label: usize,
    pub score: F,
}

/// Numerically stable log(1 + exp(s)).
fn softplus<F: Scalar>(s: F) -> F {
    if s > F::zero() {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
fn sigmoid<F: Scalar>(s: F) -> F {
    if s >= F::zero() {
        F::one() / (F::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (F::one() + e)
    }
}

/// Per-sample scalar targets (weight on class 1) extracted and validated.
fn binary_targets<F: Scalar>(targets: &Targets<F>, cfg: &TrainConfig) -> Result<Vec<F>> {
    if targets.is_soft() && !cfg.soft_label_support {
        return Err(Error::InvalidConfig(
            "soft labels passed to a trainer with soft_label_support off".into(),
        ));
    }
    let n = targets.len();
    let mut t = Vec::with_capacity(n);
    for i in 0..n {
        let ti = targets.binary_target(i)?;
        if !(ti >= F::zero() && ti <= F::one()) {
            return Err(Error::Training(format!("target at sample {i} outside [0, 1]")));
        }
        t.push(ti);
    }
    let has_zero = (0..n).any(|i| targets.dominant_label(i) == 0);
    let has_one = (0..n).any(|i| targets.dominant_label(i) == 1);
    if !has_zero || !has_one {
        return Err(Error::Training("single-class training set".into()));
    }
    Ok(t)
}

/// Mean negative log-likelihood plus (l2/2)·‖w‖², with its gradient.
/// Parameter layout: [w_0..w_{d-1}, b]. The bias is not regularized.
fn eval_loss_grad<F: Scalar>(
    features: &Matrix<F>,
    t: &[F],
    l2: F,
    params: &[F],
) -> (F, Vec<F>) {
    let d = params.len() - 1;
    let (w, b) = (&params[..d], params[d]);
    let n = features.n_rows();
    let inv_n = F::one() / F::from_f64_lossy(n as f64);

    let mut loss = F::zero();
    let mut grad = vec![F::zero(); d + 1];
    for i in 0..n {
        let row = features.row(i);
        let s = dot(w, row) + b;
        loss += softplus(s) - t[i] * s;
        let r = sigmoid(s) - t[i];
        for j in 0..d {
            grad[j] += r * row[j];
        }
        grad[d] += r;
    }
    loss = loss * inv_n;
    for j in 0..d {
        grad[j] = grad[j] * inv_n + l2 * w[j];
        loss += l2 / F::from_f64_lossy(2.0) * w[j] * w[j];
    }
    grad[d] = grad[d] * inv_n;
    (loss, grad)
}

/// Trains binary logistic regression on hard {0,1} or soft [0,1] labels.
pub fn train_logistic<F: Scalar>(
    features: &Matrix<F>,
    targets: &Targets<F>,
    cfg: &TrainConfig,
) -> Result<LogisticModel<F>> {
    cfg.validate()?;
    let n = features.n_rows();
    if n < 2 {
        return Err(Error::Training("need at least 2 training samples".into()));
    }
    if targets.len() != n {
        return Err(Error::Shape(format!(
            "{} feature rows but {} targets",
            n,
            targets.len()
        )));
    }
    let t = binary_targets(targets, cfg)?;
    let d = features.n_cols();
    let l2 = F::from_f64_lossy(cfg.l2_strength);

    let init = vec![F::zero(); d + 1];
    let (params, report) = descend(init, cfg, |p| eval_loss_grad(features, &t, l2, p))?;

    Ok(LogisticModel {
        weights: params[..d].to_vec(),
        bias: params[d],
        config: cfg.clone(),
        report,
    })
}

/// Scores one input: score = W·x + b, label = 1 iff score >= 0.
pub fn predict_logistic<F: Scalar>(
    model: &LogisticModel<F>,
    x: &[F],
) -> Result<BinaryPrediction<F>> {
    if x.len() != model.weights.len() {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.len(),
            model.weights.len()
        )));
    }
    let score = dot(&model.weights, x) + model.bias;
    let label = usize::from(score >= F::zero());
    Ok(BinaryPrediction { label, score })
}
