//! Decomposes model predictions into per-feature classification embeddings
//! (CE) and verifies exact reconstruction of each decision value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sum_ascending, Matrix};
use crate::scalar::Scalar;
use crate::train::{rbf_raw, HeadWeights, LogisticModel, SvmModel};

/// Which decomposition family a model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Svm,
    Head,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Svm => "svm",
            ModelKind::Head => "head",
        }
    }
}

/// CE payload: binary models carry one CE vector, multiclass heads one CE
/// row per class. The bias is kept separate from every CE entry.
#[derive(Debug, Clone, PartialEq)]
pub enum DecompositionBody<F> {
    Binary { ce: Vec<F>, bias: F, decision_value: F },
    PerClass { ce: Matrix<F>, bias: Vec<F>, decision_values: Vec<F> },
}

/// One instance's prediction, decomposed. `ce` has d' entries per decision:
/// d' = F_D for logistic and head models, n_sv for SVMs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDecomposition<F> {
    pub model_kind: ModelKind,
    pub instance_id: usize,
    pub true_label: usize,
    pub predicted_label: usize,
    pub body: DecompositionBody<F>,
}

impl<F: Scalar> LogitDecomposition<F> {
    /// Number of CE entries behind one decision value.
    pub fn d_prime(&self) -> usize {
        match &self.body {
            DecompositionBody::Binary { ce, .. } => ce.len(),
            DecompositionBody::PerClass { ce, .. } => ce.n_cols(),
        }
    }

    pub fn is_true_positive(&self) -> bool {
        self.predicted_label == self.true_label
    }

    /// CE values re-signed so that larger means more support for the
    /// predicted label: binary label 0 negates, head uses the predicted row.
    pub fn directed_ce(&self) -> Vec<F> {
        match &self.body {
            DecompositionBody::Binary { ce, .. } => {
                if self.predicted_label == 1 {
                    ce.clone()
                } else {
                    ce.iter().map(|&c| -c).collect()
                }
            }
            DecompositionBody::PerClass { ce, .. } => ce.row(self.predicted_label).to_vec(),
        }
    }

    /// The class whose decision value the prediction had to beat: the
    /// largest other logit, ties to the smallest id. Binary models compare
    /// against a fixed threshold instead.
    pub fn runner_up(&self) -> Option<usize> {
        match &self.body {
            DecompositionBody::Binary { .. } => None,
            DecompositionBody::PerClass { decision_values, .. } => {
                let mut best = None;
                for (c, &v) in decision_values.iter().enumerate() {
                    if c == self.predicted_label {
                        continue;
                    }
                    match best {
                        None => best = Some(c),
                        Some(b) => {
                            if v > decision_values[b] {
                                best = Some(c);
                            }
                        }
                    }
                }
                best
            }
        }
    }

    /// Directed starting accumulator: the bias re-signed toward the
    /// prediction, minus the runner-up logit for head models. Supporting
    /// CE are piled on top of this value.
    pub fn directed_base(&self) -> F {
        match &self.body {
            DecompositionBody::Binary { bias, .. } => {
                if self.predicted_label == 1 {
                    *bias
                } else {
                    -*bias
                }
            }
            DecompositionBody::PerClass { bias, decision_values, .. } => {
                let r = self.runner_up().expect("head models have >= 2 classes");
                bias[self.predicted_label] - decision_values[r]
            }
        }
    }

    /// Sum of directed CE entries that oppose the prediction (ascending
    /// index order).
    pub fn opposing_directed_sum(&self) -> F {
        let mut acc = F::zero();
        for v in self.directed_ce() {
            if v < F::zero() {
                acc += v;
            }
        }
        acc
    }

    /// The decision value backing the predicted label.
    pub fn predicted_decision(&self) -> F {
        match &self.body {
            DecompositionBody::Binary { decision_value, .. } => *decision_value,
            DecompositionBody::PerClass { decision_values, .. } => {
                decision_values[self.predicted_label]
            }
        }
    }

    /// Checks reconstruction (CE sum plus bias reproduces each decision
    /// value within 1e-9 relative) and tie-rule consistency of the label.
    pub fn validate(&self) -> Result<()> {
        let close = |recon: F, stored: F| {
            let tol = F::from_f64_lossy(1e-9) * F::one().max(stored.abs());
            (recon - stored).abs() <= tol
        };
        match &self.body {
            DecompositionBody::Binary { ce, bias, decision_value } => {
                if !close(sum_ascending(ce) + *bias, *decision_value) {
                    return Err(Error::InvalidData(format!(
                        "instance {}: CE sum does not reconstruct the decision value",
                        self.instance_id
                    )));
                }
                let expect = match self.model_kind {
                    ModelKind::Logistic => usize::from(*decision_value >= F::zero()),
                    ModelKind::Svm => usize::from(*decision_value > F::zero()),
                    ModelKind::Head => {
                        return Err(Error::InvalidData(
                            "head decomposition stored with a binary body".into(),
                        ))
                    }
                };
                if self.predicted_label != expect {
                    return Err(Error::InvalidData(format!(
                        "instance {}: label {} inconsistent with decision value",
                        self.instance_id, self.predicted_label
                    )));
                }
            }
            DecompositionBody::PerClass { ce, bias, decision_values } => {
                if self.model_kind != ModelKind::Head {
                    return Err(Error::InvalidData(
                        "per-class decomposition stored for a binary model".into(),
                    ));
                }
                let classes = decision_values.len();
                if ce.n_rows() != classes || bias.len() != classes || classes < 2 {
                    return Err(Error::Shape(format!(
                        "instance {}: inconsistent per-class decomposition shapes",
                        self.instance_id
                    )));
                }
                for c in 0..classes {
                    if !close(sum_ascending(ce.row(c)) + bias[c], decision_values[c]) {
                        return Err(Error::InvalidData(format!(
                            "instance {}: CE row {c} does not reconstruct its logit",
                            self.instance_id
                        )));
                    }
                }
                let mut argmax = 0;
                for (c, &v) in decision_values.iter().enumerate() {
                    if v > decision_values[argmax] {
                        argmax = c;
                    }
                }
                if self.predicted_label != argmax {
                    return Err(Error::InvalidData(format!(
                        "instance {}: label {} is not the argmax class",
                        self.instance_id, self.predicted_label
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Decomposes a logistic score: ce_i = x_i * w_i, decision = sum(ce) + b.
pub fn decompose_logistic<F: Scalar>(
    model: &LogisticModel<F>,
    x: &[F],
    instance_id: usize,
    true_label: usize,
) -> Result<LogitDecomposition<F>> {
    if x.len() != model.weights.len() {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.len(),
            model.weights.len()
        )));
    }
    let ce: Vec<F> = x.iter().zip(&model.weights).map(|(&xi, &wi)| xi * wi).collect();
    let decision_value = sum_ascending(&ce) + model.bias;
    let predicted_label = usize::from(decision_value >= F::zero());
    let out = LogitDecomposition {
        model_kind: ModelKind::Logistic,
        instance_id,
        true_label,
        predicted_label,
        body: DecompositionBody::Binary { ce, bias: model.bias, decision_value },
    };
    out.validate()?;
    Ok(out)
}

/// Decomposes an SVM decision: ce_i = dual_coefficient_i * K(SV_i, x),
/// decision = sum(ce) + b. d' equals the number of support vectors.
pub fn decompose_svm<F: Scalar>(
    model: &SvmModel<F>,
    x: &[F],
    instance_id: usize,
    true_label: usize,
) -> Result<LogitDecomposition<F>> {
    if x.len() != model.feature_dim() {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.len(),
            model.feature_dim()
        )));
    }
    let ce: Vec<F> = (0..model.n_support_vectors())
        .map(|i| {
            model.dual_coefficients[i] * rbf_raw(model.support_vectors.row(i), x, model.gamma)
        })
        .collect();
    let decision_value = sum_ascending(&ce) + model.bias;
    let predicted_label = usize::from(decision_value > F::zero());
    let out = LogitDecomposition {
        model_kind: ModelKind::Svm,
        instance_id,
        true_label,
        predicted_label,
        body: DecompositionBody::Binary { ce, bias: model.bias, decision_value },
    };
    out.validate()?;
    Ok(out)
}

/// Decomposes every class logit of a linear head: ce[c][i] = fe_i * W[c][i],
/// decision_values[c] = sum(ce[c]) + b[c]. All C rows are retained so the
/// runner-up logit stays available.
pub fn decompose_head<F: Scalar>(
    head: &HeadWeights<F>,
    fe: &[F],
    instance_id: usize,
    true_label: usize,
) -> Result<LogitDecomposition<F>> {
    if fe.len() != head.feature_dim() {
        return Err(Error::Shape(format!(
            "input has {} features, head expects {}",
            fe.len(),
            head.feature_dim()
        )));
    }
    let mut rows = Vec::with_capacity(head.num_classes());
    let mut decision_values = Vec::with_capacity(head.num_classes());
    for c in 0..head.num_classes() {
        let row: Vec<F> =
            fe.iter().zip(head.weights.row(c)).map(|(&xi, &wi)| xi * wi).collect();
        decision_values.push(sum_ascending(&row) + head.biases[c]);
        rows.push(row);
    }
    let mut predicted_label = 0;
    for (c, &v) in decision_values.iter().enumerate() {
        if v > decision_values[predicted_label] {
            predicted_label = c;
        }
    }
    let out = LogitDecomposition {
        model_kind: ModelKind::Head,
        instance_id,
        true_label,
        predicted_label,
        body: DecompositionBody::PerClass {
            ce: Matrix::from_rows(rows)?,
            bias: head.biases.clone(),
            decision_values,
        },
    };
    out.validate()?;
    Ok(out)
}

/// Any trained model the probe can decompose.
#[derive(Debug, Clone)]
pub enum TrainedModel<F: Scalar> {
    Logistic(LogisticModel<F>),
    Svm(SvmModel<F>),
    Head(HeadWeights<F>),
}

impl<F: Scalar> TrainedModel<F> {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Logistic(_) => ModelKind::Logistic,
            TrainedModel::Svm(_) => ModelKind::Svm,
            TrainedModel::Head(_) => ModelKind::Head,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            TrainedModel::Logistic(m) => m.feature_dim(),
            TrainedModel::Svm(m) => m.feature_dim(),
            TrainedModel::Head(h) => h.feature_dim(),
        }
    }

    /// Size of the label space: 2 for binary models, C for heads.
    pub fn num_classes(&self) -> usize {
        match self {
            TrainedModel::Logistic(_) | TrainedModel::Svm(_) => 2,
            TrainedModel::Head(h) => h.num_classes(),
        }
    }

    pub fn decompose(
        &self,
        x: &[F],
        instance_id: usize,
        true_label: usize,
    ) -> Result<LogitDecomposition<F>> {
        match self {
            TrainedModel::Logistic(m) => decompose_logistic(m, x, instance_id, true_label),
            TrainedModel::Svm(m) => decompose_svm(m, x, instance_id, true_label),
            TrainedModel::Head(h) => decompose_head(h, x, instance_id, true_label),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let text = match self {
            TrainedModel::Logistic(m) => serde_json::to_string_pretty(m),
            TrainedModel::Svm(m) => serde_json::to_string_pretty(m),
            TrainedModel::Head(h) => serde_json::to_string_pretty(h),
        };
        text.map_err(|e| Error::Json { path: "<model>".into(), message: e.to_string() })
    }
}

/// Parses a model JSON file, detecting its kind from the keys: "SV" marks
/// an SVM, a nested "W" a head, a flat "W" a logistic model.
pub fn parse_model_json<F: Scalar>(text: &str, origin: &Path) -> Result<TrainedModel<F>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::json(origin, e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::json(origin, "expected a JSON object"))?;
    if obj.contains_key("SV") {
        let model: SvmModel<F> =
            serde_json::from_value(value).map_err(|e| Error::json(origin, e.to_string()))?;
        if model.dual_coefficients.len() != model.support_vectors.n_rows() {
            return Err(Error::json(
                origin,
                format!(
                    "{} dual coefficients for {} support vectors",
                    model.dual_coefficients.len(),
                    model.support_vectors.n_rows()
                ),
            ));
        }
        if model.n_support_vectors() == 0 {
            return Err(Error::json(origin, "SVM model has no support vectors"));
        }
        let finite = model.support_vectors.iter_rows().flatten().all(|v| v.is_finite())
            && model.dual_coefficients.iter().all(|v| v.is_finite())
            && model.bias.is_finite();
        if !finite {
            return Err(Error::json(origin, "non-finite SVM parameter"));
        }
        if !(model.gamma > F::zero() && model.gamma.is_finite()) {
            return Err(Error::json(origin, "gamma must be positive and finite"));
        }
        return Ok(TrainedModel::Svm(model));
    }
    match obj.get("W") {
        Some(w) if w.get(0).is_some_and(|first| first.is_array()) => {
            let head: HeadWeights<F> =
                serde_json::from_value(value).map_err(|e| Error::json(origin, e.to_string()))?;
            let head = HeadWeights::new(head.weights, head.biases)?;
            Ok(TrainedModel::Head(head))
        }
        Some(_) => {
            let model: LogisticModel<F> =
                serde_json::from_value(value).map_err(|e| Error::json(origin, e.to_string()))?;
            if model.weights.is_empty() {
                return Err(Error::json(origin, "logistic model has no weights"));
            }
            let finite =
                model.weights.iter().all(|v| v.is_finite()) && model.bias.is_finite();
            if !finite {
                return Err(Error::json(origin, "non-finite logistic parameter"));
            }
            Ok(TrainedModel::Logistic(model))
        }
        None => Err(Error::json(
            origin,
            "unrecognized model JSON: expected keys W/b (logistic or head) or SV/alpha/b/gamma",
        )),
    }
}

/// Decompositions for a whole feature matrix, with true-positive bookkeeping.
#[derive(Debug, Clone)]
pub struct BatchDecomposition<F: Scalar> {
    /// One decomposition per input row, in input order.
    pub decompositions: Vec<LogitDecomposition<F>>,
    /// True where predicted_label == true_label.
    pub tp_mask: Vec<bool>,
    /// True positives per class; length is the model's class count.
    pub tp_counts: Vec<usize>,
}

impl<F: Scalar> BatchDecomposition<F> {
    /// The true-positive decompositions of one class, in input order.
    pub fn tp_of_class(&self, class: usize) -> Vec<&LogitDecomposition<F>> {
        self.decompositions
            .iter()
            .filter(|d| d.is_true_positive() && d.true_label == class)
            .collect()
    }
}

/// Decomposes every row of `features`, marking true positives per class.
pub fn batch_decompose<F: Scalar>(
    model: &TrainedModel<F>,
    features: &Matrix<F>,
    labels: &[usize],
) -> Result<BatchDecomposition<F>> {
    if features.n_rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} labels",
            features.n_rows(),
            labels.len()
        )));
    }
    let classes = model.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidData(format!(
            "label {bad} outside the model's {classes} classes"
        )));
    }
    let mut decompositions = Vec::with_capacity(labels.len());
    let mut tp_mask = Vec::with_capacity(labels.len());
    let mut tp_counts = vec![0usize; classes];
    for (i, row) in features.iter_rows().enumerate() {
        let d = model.decompose(row, i, labels[i])?;
        let tp = d.is_true_positive();
        if tp {
            tp_counts[labels[i]] += 1;
        }
        tp_mask.push(tp);
        decompositions.push(d);
    }
    Ok(BatchDecomposition { decompositions, tp_mask, tp_counts })
}

/// Serializes decompositions to CSV. Binary models emit one row per
/// instance; heads emit one row per class per instance with a class column.
/// All inputs must share one model kind and CE width.
pub fn decompositions_to_csv<F: Scalar>(decomps: &[LogitDecomposition<F>]) -> Result<String> {
    let first = decomps
        .first()
        .ok_or_else(|| Error::InvalidData("no decompositions to serialize".into()))?;
    let kind = first.model_kind;
    let d_prime = first.d_prime();
    if decomps.iter().any(|d| d.model_kind != kind || d.d_prime() != d_prime) {
        return Err(Error::InvalidData(
            "decompositions mix model kinds or CE widths".into(),
        ));
    }

    let mut out = String::new();
    let ce_header: String =
        (0..d_prime).map(|i| format!(",ce{i}")).collect();
    match kind {
        ModelKind::Logistic | ModelKind::Svm => {
            out.push_str("instance_id,true_label,predicted_label,decision_value");
            out.push_str(&ce_header);
            out.push('\n');
            for d in decomps {
                let DecompositionBody::Binary { ce, decision_value, .. } = &d.body else {
                    return Err(Error::InvalidData(
                        "binary model with per-class decomposition".into(),
                    ));
                };
                out.push_str(&format!(
                    "{},{},{},{}",
                    d.instance_id, d.true_label, d.predicted_label, decision_value
                ));
                for v in ce {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        ModelKind::Head => {
            out.push_str("instance_id,true_label,predicted_label,class,decision_value");
            out.push_str(&ce_header);
            out.push('\n');
            for d in decomps {
                let DecompositionBody::PerClass { ce, decision_values, .. } = &d.body else {
                    return Err(Error::InvalidData(
                        "head model with binary decomposition".into(),
                    ));
                };
                for c in 0..decision_values.len() {
                    out.push_str(&format!(
                        "{},{},{},{},{}",
                        d.instance_id, d.true_label, d.predicted_label, c, decision_values[c]
                    ));
                    for v in ce.row(c) {
                        out.push_str(&format!(",{v}"));
                    }
                    out.push('\n');
                }
            }
        }
    }
    Ok(out)
}
