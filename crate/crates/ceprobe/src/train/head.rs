//! L2-regularized softmax linear head trained by full-batch gradient
//! descent. Accepts hard class ids or row-stochastic soft labels.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::scalar::Scalar;

use super::{descend, HeadWeights, Targets, TrainConfig, TrainReport};

/// Predicted class and the full logit vector for one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPrediction<F> {
    pub label: usize,
    pub logits: Vec<F>,
}

/// Row-stochastic target matrix [n × C] built and validated from `targets`.
fn class_targets<F: Scalar>(
    targets: &Targets<F>,
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<Matrix<F>> {
    if targets.is_soft() && !cfg.soft_label_support {
        return Err(Error::InvalidConfig(
            "soft labels passed to a trainer with soft_label_support off".into(),
        ));
    }
    let n = targets.len();
    let t = match targets {
        Targets::Hard(labels) => {
            let mut rows = vec![vec![F::zero(); num_classes]; n];
            for (i, &c) in labels.iter().enumerate() {
                if c >= num_classes {
                    return Err(Error::Training(format!(
                        "class id {c} at sample {i} outside [0, {num_classes})"
                    )));
                }
                rows[i][c] = F::one();
            }
            Matrix::from_rows(rows)?
        }
        Targets::Soft(m) => {
            if m.n_cols() != num_classes {
                return Err(Error::Shape(format!(
                    "soft labels have {} columns, expected {num_classes}",
                    m.n_cols()
                )));
            }
            let tol = F::from_f64_lossy(1e-12);
            for i in 0..n {
                let row = m.row(i);
                if row.iter().any(|&v| v < F::zero()) {
                    return Err(Error::Training(format!("negative label weight at sample {i}")));
                }
                let sum: F = row.iter().copied().sum();
                if (sum - F::one()).abs() > tol {
                    return Err(Error::Training(format!(
                        "soft label at sample {i} sums to {sum}, expected 1"
                    )));
                }
            }
            m.clone()
        }
    };
    // every class must be some sample's dominant label
    let mut seen = vec![false; num_classes];
    for i in 0..n {
        seen[targets.dominant_label(i)] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Training(format!("class {missing} missing from training set")));
    }
    Ok(t)
}

/// Mean cross-entropy plus (l2/2)·‖W‖², with its gradient.
/// Parameter layout: W row-major [C·d] followed by b [C]. Biases are not
/// regularized.
fn eval_loss_grad<F: Scalar>(
    features: &Matrix<F>,
    t: &Matrix<F>,
    l2: F,
    num_classes: usize,
    params: &[F],
) -> (F, Vec<F>) {
    let d = features.n_cols();
    let n = features.n_rows();
    let inv_n = F::one() / F::from_f64_lossy(n as f64);
    let w_row = |c: usize| &params[c * d..(c + 1) * d];
    let b = &params[num_classes * d..];

    let mut loss = F::zero();
    let mut grad = vec![F::zero(); params.len()];
    let mut logits = vec![F::zero(); num_classes];
    for i in 0..n {
        let row = features.row(i);
        for c in 0..num_classes {
            logits[c] = dot(w_row(c), row) + b[c];
        }
        let m = logits.iter().fold(F::neg_infinity(), |a, &v| a.max(v));
        let sum_exp: F = logits.iter().map(|&l| (l - m).exp()).sum();
        let lse = m + sum_exp.ln();
        let trow = t.row(i);
        for c in 0..num_classes {
            loss += trow[c] * (lse - logits[c]);
            let r = (logits[c] - lse).exp() - trow[c];
            let gw = &mut grad[c * d..(c + 1) * d];
            for j in 0..d {
                gw[j] += r * row[j];
            }
            grad[num_classes * d + c] += r;
        }
    }
    loss = loss * inv_n;
    let half = F::from_f64_lossy(0.5);
    for idx in 0..num_classes * d {
        grad[idx] = grad[idx] * inv_n + l2 * params[idx];
        loss += half * l2 * params[idx] * params[idx];
    }
    for idx in num_classes * d..params.len() {
        grad[idx] = grad[idx] * inv_n;
    }
    (loss, grad)
}

/// Trains a softmax head over embeddings.
pub fn train_softmax_head<F: Scalar>(
    embeddings: &Matrix<F>,
    targets: &Targets<F>,
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<(HeadWeights<F>, TrainReport)> {
    cfg.validate()?;
    if num_classes < 2 {
        return Err(Error::Training("head needs at least 2 classes".into()));
    }
    let n = embeddings.n_rows();
    if n < 2 {
        return Err(Error::Training("need at least 2 training samples".into()));
    }
    if targets.len() != n {
        return Err(Error::Shape(format!("{} embedding rows but {} targets", n, targets.len())));
    }
    let t = class_targets(targets, num_classes, cfg)?;
    let d = embeddings.n_cols();
    let l2 = F::from_f64_lossy(cfg.l2_strength);

    let init = vec![F::zero(); num_classes * d + num_classes];
    let (params, report) =
        descend(init, cfg, |p| eval_loss_grad(embeddings, &t, l2, num_classes, p))?;

    let rows: Vec<Vec<F>> = (0..num_classes).map(|c| params[c * d..(c + 1) * d].to_vec()).collect();
    let head = HeadWeights::new(Matrix::from_rows(rows)?, params[num_classes * d..].to_vec())?;
    Ok((head, report))
}

/// Logits and argmax label for one embedding; ties go to the smallest
/// class id.
pub fn predict_head<F: Scalar>(head: &HeadWeights<F>, fe: &[F]) -> Result<HeadPrediction<F>> {
    if fe.len() != head.feature_dim() {
        return Err(Error::Shape(format!(
            "input has {} features, head expects {}",
            fe.len(),
            head.feature_dim()
        )));
    }
    let logits: Vec<F> = (0..head.num_classes())
        .map(|c| dot(head.weights.row(c), fe) + head.biases[c])
        .collect();
    let mut label = 0;
    for (c, &l) in logits.iter().enumerate() {
        if l > logits[label] {
            label = c;
        }
    }
    Ok(HeadPrediction { label, logits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn head_from(rows: Vec<Vec<f64>>, b: Vec<f64>) -> HeadWeights<f64> {
        HeadWeights::new(Matrix::from_rows(rows).unwrap(), b).unwrap()
    }

    #[test]
    fn separated_classes_reach_full_training_accuracy() {
        let mut rng = SeededRng::new(3);
        let means = [[5.0, 0.0, 0.0, 0.0], [0.0, 5.0, 0.0, 0.0], [0.0, 0.0, 5.0, 0.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, mean) in means.iter().enumerate() {
            for _ in 0..15 {
                rows.push(mean.iter().map(|m| m + rng.standard_normal::<f64>() * 0.3).collect());
                labels.push(c);
            }
        }
        let x = Matrix::from_rows(rows).unwrap();
        let (head, _) =
            train_softmax_head(&x, &Targets::Hard(labels.clone()), 3, &TrainConfig::default())
                .unwrap();
        for (i, &c) in labels.iter().enumerate() {
            assert_eq!(predict_head(&head, x.row(i)).unwrap().label, c);
        }
    }

    #[test]
    fn one_hot_soft_labels_reproduce_hard_training() {
        let x = Matrix::from_rows(vec![
            vec![1.0, 0.2],
            vec![0.8, -0.1],
            vec![-0.9, 1.1],
            vec![-1.2, 0.7],
        ])
        .unwrap();
        let labels = vec![0, 0, 1, 1];
        let (hard, _) =
            train_softmax_head(&x, &Targets::Hard(labels), 2, &TrainConfig::default()).unwrap();
        let soft = Matrix::from_rows(vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let (soft_head, _) =
            train_softmax_head(&x, &Targets::Soft(soft), 2, &TrainConfig::default()).unwrap();
        assert_eq!(hard, soft_head);
    }

    #[test]
    fn loss_trace_is_non_increasing_on_synthetic_embeddings() {
        let mut rng = SeededRng::new(17);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3usize {
            for _ in 0..20 {
                let row: Vec<f64> = (0..64)
                    .map(|j| {
                        let shift = if j % 3 == c { 1.5 } else { 0.0 };
                        shift + rng.standard_normal::<f64>()
                    })
                    .collect();
                rows.push(row);
                labels.push(c);
            }
        }
        let x = Matrix::from_rows(rows).unwrap();
        let (_, report) =
            train_softmax_head(&x, &Targets::Hard(labels), 3, &TrainConfig::default()).unwrap();
        assert!(report.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_weights_pick_largest_bias() {
        let head = head_from(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![0.1, 0.2]);
        assert_eq!(predict_head(&head, &[3.0, -4.0]).unwrap().label, 1);
        assert_eq!(predict_head(&head, &[0.0, 0.0]).unwrap().label, 1);
    }

    #[test]
    fn logit_ties_go_to_smallest_class_id() {
        let head = head_from(vec![vec![0.0], vec![0.0], vec![0.0]], vec![0.3, 0.3, 0.1]);
        assert_eq!(predict_head(&head, &[1.0]).unwrap().label, 0);
    }

    #[test]
    fn permuting_class_rows_permutes_logits() {
        let head = head_from(vec![vec![1.0, 2.0], vec![-0.5, 0.5]], vec![0.1, -0.2]);
        let swapped = head_from(vec![vec![-0.5, 0.5], vec![1.0, 2.0]], vec![-0.2, 0.1]);
        let fe = [0.7, -1.3];
        let a = predict_head(&head, &fe).unwrap().logits;
        let b = predict_head(&swapped, &fe).unwrap().logits;
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[0]);
    }

    #[test]
    fn missing_class_is_an_error() {
        let x = Matrix::from_rows(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let err = train_softmax_head(&x, &Targets::Hard(vec![0, 0, 2]), 3, &TrainConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("class 1"));
    }
}
