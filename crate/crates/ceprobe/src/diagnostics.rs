//! Per-instance and per-class metrics over CE decompositions: how few
//! high-magnitude CE carry each prediction, how many distinct CE a class
//! relies on, and how CE usage frequency relates to magnitude.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::floor_guard;
use crate::error::{Error, Result};
use crate::probe::{LogitDecomposition, ModelKind};
use crate::scalar::Scalar;

/// Starting accumulator for the minimal-count search: the bias alone, or
/// the bias plus every CE opposing the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    BiasOnly,
    BiasWithOpposing,
}

impl Default for BaselineMode {
    fn default() -> Self {
        BaselineMode::BiasOnly
    }
}

impl BaselineMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineMode::BiasOnly => "bias_only",
            BaselineMode::BiasWithOpposing => "bias_with_opposing",
        }
    }
}

/// Top-k size for the contribution share: 10% of d' (round half up, at
/// least 1) or an absolute cap of 10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    Fraction,
    Absolute,
}

impl KRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            KRule::Fraction => "fraction",
            KRule::Absolute => "absolute",
        }
    }

    /// Number of top entries summed for a decomposition with d' CE of which
    /// `supporting` point toward the prediction.
    pub fn k_for(&self, d_prime: usize, supporting: usize) -> usize {
        match self {
            KRule::Fraction => floor_guard(0.10 * d_prime as f64 + 0.5).max(1),
            KRule::Absolute => supporting.min(10),
        }
    }
}

/// How many top CE one true positive needs before its prediction stands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSparsity {
    pub instance_id: usize,
    pub class: usize,
    /// Smallest count of supporting CE whose sum, on the baseline, wins.
    pub k: usize,
    /// k / d'.
    pub fraction: f64,
}

/// Unique CE indices a class's true positives draw their top CE from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCoverage {
    pub class: usize,
    pub unique_indices: BTreeSet<usize>,
    /// |unique_indices| / d'.
    pub coverage_fraction: f64,
    pub top_k: usize,
}

/// Share of one instance's supporting CE mass held by its top-k entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionShare {
    pub instance_id: usize,
    pub class: usize,
    pub share: f64,
}

/// One feature's usage count and average CE magnitude within a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqMagEntry {
    pub feature_index: usize,
    pub frequency: usize,
    pub mean_magnitude: f64,
}

/// Per-class usage profile: the top features by mean CE magnitude and the
/// rank correlation between usage frequency and magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMagnitude {
    pub class: usize,
    /// Sorted by mean magnitude descending; at most top_m entries.
    pub entries: Vec<FreqMagEntry>,
    pub spearman_rho: f64,
}

fn require_tp<F: Scalar>(d: &LogitDecomposition<F>) -> Result<()> {
    if !d.is_true_positive() {
        return Err(Error::InvalidData(format!(
            "instance {} is not a true positive (predicted {}, true {})",
            d.instance_id, d.predicted_label, d.true_label
        )));
    }
    Ok(())
}

/// Supporting CE values with their indices, sorted by value descending,
/// ties by ascending index.
fn sorted_supporting<F: Scalar>(d: &LogitDecomposition<F>) -> Vec<(F, usize)> {
    let mut supporting: Vec<(F, usize)> = d
        .directed_ce()
        .into_iter()
        .enumerate()
        .filter(|&(_, v)| v > F::zero())
        .map(|(i, v)| (v, i))
        .collect();
    supporting.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).expect("finite CE values").then(a.1.cmp(&b.1))
    });
    supporting
}

/// Indices of the up-to-top_k largest supporting CE; opposing CE never
/// count as used.
fn top_supporting_indices<F: Scalar>(d: &LogitDecomposition<F>, top_k: usize) -> Vec<usize> {
    let ranked = sorted_supporting(d);
    ranked.iter().take(top_k).map(|&(_, i)| i).collect()
}

/// True when at least one CE points toward the prediction.
pub fn has_supporting_ce<F: Scalar>(d: &LogitDecomposition<F>) -> bool {
    d.directed_ce().iter().any(|&v| v > F::zero())
}

/// Smallest number of supporting CE whose sum on top of the baseline
/// reaches the model's decision threshold: zero for the binary models, the
/// runner-up logit for heads. SVM label 0 compares non-strictly, matching
/// its tie rule.
pub fn minimal_ce_count<F: Scalar>(
    d: &LogitDecomposition<F>,
    mode: BaselineMode,
) -> Result<InstanceSparsity> {
    require_tp(d)?;
    let mut base = d.directed_base();
    if mode == BaselineMode::BiasWithOpposing {
        base += d.opposing_directed_sum();
    }
    let non_strict = d.model_kind == ModelKind::Svm && d.predicted_label == 0;
    let satisfied =
        |acc: F| if non_strict { acc >= F::zero() } else { acc > F::zero() };

    let mut k = None;
    if satisfied(base) {
        k = Some(0);
    } else {
        let mut acc = base;
        for (n, &(v, _)) in sorted_supporting(d).iter().enumerate() {
            acc += v;
            if satisfied(acc) {
                k = Some(n + 1);
                break;
            }
        }
    }
    let k = k.ok_or_else(|| {
        Error::InvalidData(format!(
            "instance {}: no supporting-CE prefix reaches the decision threshold",
            d.instance_id
        ))
    })?;
    Ok(InstanceSparsity {
        instance_id: d.instance_id,
        class: d.true_label,
        k,
        fraction: k as f64 / d.d_prime() as f64,
    })
}

/// Union of the top-k supporting CE indices over one class's true
/// positives, as a fraction of d'.
pub fn class_unique_ce<F: Scalar>(
    decomps: &[&LogitDecomposition<F>],
    top_k: usize,
) -> Result<ClassCoverage> {
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be >= 1".into()));
    }
    let first = decomps
        .first()
        .ok_or_else(|| Error::InvalidData("no decompositions for class coverage".into()))?;
    let class = first.true_label;
    let d_prime = first.d_prime();
    let mut unique_indices = BTreeSet::new();
    for d in decomps {
        require_tp(d)?;
        if d.true_label != class || d.d_prime() != d_prime {
            return Err(Error::InvalidData(format!(
                "instance {} does not match class {class} with d' = {d_prime}",
                d.instance_id
            )));
        }
        unique_indices.extend(top_supporting_indices(d, top_k));
    }
    let coverage_fraction = unique_indices.len() as f64 / d_prime as f64;
    Ok(ClassCoverage { class, unique_indices, coverage_fraction, top_k })
}

/// Fraction of the total supporting CE mass (absolute values) captured by
/// the top-k supporting entries.
pub fn topk_contribution_share<F: Scalar>(
    d: &LogitDecomposition<F>,
    k_rule: KRule,
) -> Result<ContributionShare> {
    require_tp(d)?;
    let ranked = sorted_supporting(d);
    if ranked.is_empty() {
        return Err(Error::InvalidData(format!(
            "instance {} has no supporting CE",
            d.instance_id
        )));
    }
    let k = k_rule.k_for(d.d_prime(), ranked.len());
    // One pass in sorted order: the numerator is a prefix of the
    // denominator's accumulator, so share never exceeds 1.
    let mut numerator = F::zero();
    let mut acc = F::zero();
    for (n, &(v, _)) in ranked.iter().enumerate() {
        acc += v;
        if n + 1 == k.min(ranked.len()) {
            numerator = acc;
        }
    }
    let share = (numerator / acc).to_f64().unwrap_or(f64::NAN);
    Ok(ContributionShare { instance_id: d.instance_id, class: d.true_label, share })
}

/// Average ranks (1-based) of the values in ascending order; tied values
/// share the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values").then(i.cmp(&j)));
    let mut ranks = vec![0.0; n];
    let mut pos = 0;
    while pos < n {
        let mut end = pos + 1;
        while end < n && values[order[end]] == values[order[pos]] {
            end += 1;
        }
        let avg = (pos + 1 + end) as f64 / 2.0;
        for &idx in &order[pos..end] {
            ranks[idx] = avg;
        }
        pos = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; 0.0 when either
/// side has no rank variance or fewer than two points.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return 0.0;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Usage frequency (membership in the per-instance top-k supporting CE)
/// versus mean CE magnitude over one class's true positives.
pub fn frequency_magnitude_profile<F: Scalar>(
    decomps: &[&LogitDecomposition<F>],
    top_k: usize,
    top_m: usize,
) -> Result<FrequencyMagnitude> {
    if top_k == 0 || top_m == 0 {
        return Err(Error::InvalidConfig("top_k and top_m must be >= 1".into()));
    }
    let first = decomps
        .first()
        .ok_or_else(|| Error::InvalidData("no decompositions for frequency profile".into()))?;
    let class = first.true_label;
    let d_prime = first.d_prime();
    let mut frequency = vec![0usize; d_prime];
    let mut magnitude_sum = vec![0.0f64; d_prime];
    for d in decomps {
        require_tp(d)?;
        if d.true_label != class || d.d_prime() != d_prime {
            return Err(Error::InvalidData(format!(
                "instance {} does not match class {class} with d' = {d_prime}",
                d.instance_id
            )));
        }
        for i in top_supporting_indices(d, top_k) {
            frequency[i] += 1;
        }
        for (i, v) in d.directed_ce().iter().enumerate() {
            magnitude_sum[i] += v.abs().to_f64().unwrap_or(f64::NAN);
        }
    }
    let n = decomps.len() as f64;
    let mean_magnitude: Vec<f64> = magnitude_sum.iter().map(|s| s / n).collect();

    let mut order: Vec<usize> = (0..d_prime).collect();
    order.sort_by(|&i, &j| {
        mean_magnitude[j]
            .partial_cmp(&mean_magnitude[i])
            .expect("finite magnitudes")
            .then(i.cmp(&j))
    });
    let entries: Vec<FreqMagEntry> = order
        .iter()
        .take(top_m)
        .map(|&i| FreqMagEntry {
            feature_index: i,
            frequency: frequency[i],
            mean_magnitude: mean_magnitude[i],
        })
        .collect();

    let used: Vec<usize> = (0..d_prime).filter(|&i| frequency[i] > 0).collect();
    let fx: Vec<f64> = used.iter().map(|&i| frequency[i] as f64).collect();
    let fy: Vec<f64> = used.iter().map(|&i| mean_magnitude[i]).collect();
    let rho = spearman_rho(&fx, &fy);
    Ok(FrequencyMagnitude { class, entries, spearman_rho: rho })
}

/// Mean and population standard deviation; None on empty input.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// How per-instance values are pooled before mean/sd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Class,
    MajorityMinority,
}

/// Mean/sd of one pooled group of instance values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

/// Pools (class, value) pairs by class or by majority-vs-minority and
/// summarizes each group. Empty groups are omitted with a warning.
pub fn aggregate(
    values: &[(usize, f64)],
    grouping: Grouping,
    majority_classes: &[usize],
    num_classes: usize,
) -> Vec<GroupSummary> {
    let group_names: Vec<String> = match grouping {
        Grouping::Class => (0..num_classes).map(|c| format!("class_{c}")).collect(),
        Grouping::MajorityMinority => vec!["majority".into(), "minority".into()],
    };
    let group_of = |class: usize| -> usize {
        match grouping {
            Grouping::Class => class,
            Grouping::MajorityMinority => usize::from(!majority_classes.contains(&class)),
        }
    };
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); group_names.len()];
    for &(class, value) in values {
        buckets[group_of(class)].push(value);
    }
    let mut out = Vec::new();
    for (g, bucket) in buckets.iter().enumerate() {
        match mean_sd(bucket) {
            Some((mean, sd)) => out.push(GroupSummary {
                group: group_names[g].clone(),
                mean,
                sd,
                count: bucket.len(),
            }),
            None => log::warn!("group {} has no values; omitted", group_names[g]),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::probe::DecompositionBody;
    use crate::rng::SeededRng;

    fn binary(kind: ModelKind, ce: Vec<f64>, bias: f64) -> LogitDecomposition<f64> {
        let decision_value: f64 = ce.iter().sum::<f64>() + bias;
        let predicted_label = match kind {
            ModelKind::Logistic => usize::from(decision_value >= 0.0),
            ModelKind::Svm => usize::from(decision_value > 0.0),
            ModelKind::Head => panic!("binary helper"),
        };
        LogitDecomposition {
            model_kind: kind,
            instance_id: 0,
            true_label: predicted_label,
            predicted_label,
            body: DecompositionBody::Binary { ce, bias, decision_value },
        }
    }

    fn head_two_class(
        ce_predicted: Vec<f64>,
        bias_predicted: f64,
        runner_up_logit: f64,
    ) -> LogitDecomposition<f64> {
        let d = ce_predicted.len();
        let mut other = vec![0.0; d];
        other[0] = runner_up_logit;
        let dv1: f64 = ce_predicted.iter().sum::<f64>() + bias_predicted;
        assert!(dv1 > runner_up_logit, "fixture must predict class 1");
        LogitDecomposition {
            model_kind: ModelKind::Head,
            instance_id: 0,
            true_label: 1,
            predicted_label: 1,
            body: DecompositionBody::PerClass {
                ce: Matrix::from_rows(vec![other, ce_predicted]).unwrap(),
                bias: vec![0.0, bias_predicted],
                decision_values: vec![runner_up_logit, dv1],
            },
        }
    }

    #[test]
    fn head_worked_example_needs_one_ce() {
        let d = head_two_class(vec![3.0, -1.0, 2.0], 0.0, 2.5);
        let s = minimal_ce_count(&d, BaselineMode::BiasOnly).unwrap();
        assert_eq!(s.k, 1);
        assert_eq!(s.class, 1);
        assert!((s.fraction - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn logistic_worked_example_needs_one_ce() {
        let d = binary(ModelKind::Logistic, vec![0.5, 0.4, -0.2], -0.1);
        assert_eq!(d.predicted_label, 1);
        let s = minimal_ce_count(&d, BaselineMode::BiasOnly).unwrap();
        assert_eq!(s.k, 1);
    }

    #[test]
    fn sufficient_bias_alone_gives_k_zero() {
        let d = binary(ModelKind::Logistic, vec![-0.1, 0.3], 0.5);
        let s = minimal_ce_count(&d, BaselineMode::BiasOnly).unwrap();
        assert_eq!(s.k, 0);
        assert_eq!(s.fraction, 0.0);
    }

    #[test]
    fn svm_label_zero_uses_a_non_strict_threshold() {
        // decision is exactly 0 -> label 0 under the SVM tie rule
        let d = binary(ModelKind::Svm, vec![-0.5], 0.5);
        assert_eq!(d.predicted_label, 0);
        let s = minimal_ce_count(&d, BaselineMode::BiasOnly).unwrap();
        assert_eq!(s.k, 1);

        // a logistic decomposition with the same numbers predicts 1 and its
        // bias alone wins
        let d = binary(ModelKind::Logistic, vec![-0.5], 0.5);
        assert_eq!(d.predicted_label, 1);
        let s = minimal_ce_count(&d, BaselineMode::BiasOnly).unwrap();
        assert_eq!(s.k, 0);
    }

    #[test]
    fn opposing_baseline_needs_more_ce() {
        let d = binary(ModelKind::Logistic, vec![0.6, 0.5, -0.8], 0.0);
        assert_eq!(d.predicted_label, 1);
        let bias_only = minimal_ce_count(&d, BaselineMode::BiasOnly).unwrap();
        assert_eq!(bias_only.k, 1);
        let with_opposing = minimal_ce_count(&d, BaselineMode::BiasWithOpposing).unwrap();
        assert_eq!(with_opposing.k, 2);
    }

    #[test]
    fn non_tp_input_is_rejected() {
        let mut d = binary(ModelKind::Logistic, vec![1.0], 0.0);
        d.true_label = 0;
        assert!(minimal_ce_count(&d, BaselineMode::BiasOnly).is_err());
        assert!(topk_contribution_share(&d, KRule::Fraction).is_err());
    }

    fn random_binary_tp(rng: &mut SeededRng, d_prime: usize) -> LogitDecomposition<f64> {
        loop {
            let ce: Vec<f64> = (0..d_prime).map(|_| rng.standard_normal_f64()).collect();
            let bias = 0.3 * rng.standard_normal_f64();
            let d = binary(ModelKind::Logistic, ce, bias);
            // skip the measure-zero exact-boundary case
            if d.predicted_decision() != 0.0 {
                return d;
            }
        }
    }

    /// Brute-force minimum subset size over all CE subsets, the oracle the
    /// greedy prefix must match.
    fn exhaustive_min_count(d: &LogitDecomposition<f64>, mode: BaselineMode) -> Option<usize> {
        let directed = d.directed_ce();
        let mut base = d.directed_base();
        if mode == BaselineMode::BiasWithOpposing {
            base += d.opposing_directed_sum();
        }
        let n = directed.len();
        let mut best: Option<usize> = None;
        for mask in 0u32..(1 << n) {
            let mut acc = base;
            for (i, &v) in directed.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    acc += v;
                }
            }
            if acc > 0.0 {
                let size = mask.count_ones() as usize;
                best = Some(best.map_or(size, |b: usize| b.min(size)));
            }
        }
        best
    }

    #[test]
    fn greedy_prefix_matches_exhaustive_subset_search() {
        let mut rng = SeededRng::new(51);
        for mode in [BaselineMode::BiasOnly, BaselineMode::BiasWithOpposing] {
            for trial in 0..200 {
                let d_prime = 1 + (trial % 12);
                let d = random_binary_tp(&mut rng, d_prime);
                let greedy = minimal_ce_count(&d, mode);
                match exhaustive_min_count(&d, mode) {
                    Some(expect) => {
                        assert_eq!(greedy.unwrap().k, expect, "mode {mode:?} trial {trial}")
                    }
                    None => assert!(greedy.is_err(), "mode {mode:?} trial {trial}"),
                }
            }
        }
    }

    #[test]
    fn minimal_count_is_permutation_and_scale_invariant() {
        let mut rng = SeededRng::new(52);
        for _ in 0..50 {
            let d = random_binary_tp(&mut rng, 8);
            let k0 = minimal_ce_count(&d, BaselineMode::BiasOnly).unwrap().k;

            let DecompositionBody::Binary { ce, bias, .. } = &d.body else { unreachable!() };
            let mut permuted = ce.clone();
            permuted.reverse();
            let p = binary(ModelKind::Logistic, permuted, *bias);
            assert_eq!(p.predicted_label, d.predicted_label);
            assert_eq!(minimal_ce_count(&p, BaselineMode::BiasOnly).unwrap().k, k0);

            let scaled: Vec<f64> = ce.iter().map(|v| 2.0 * v).collect();
            let s = binary(ModelKind::Logistic, scaled, 2.0 * bias);
            assert_eq!(minimal_ce_count(&s, BaselineMode::BiasOnly).unwrap().k, k0);
        }
    }

    /// A decomposition whose supporting indices are exactly `positive`,
    /// each with the listed value.
    fn with_support(d_prime: usize, positive: &[(usize, f64)]) -> LogitDecomposition<f64> {
        let mut ce = vec![-1e-3; d_prime];
        for &(i, v) in positive {
            ce[i] = v;
        }
        let d = binary(ModelKind::Logistic, ce, 10.0);
        assert_eq!(d.predicted_label, 1);
        d
    }

    #[test]
    fn coverage_of_identical_and_disjoint_top_sets() {
        let a = with_support(64, &(0..10).map(|i| (i, 1.0 + i as f64)).collect::<Vec<_>>());
        let b = a.clone();
        let cov = class_unique_ce(&[&a, &b], 10).unwrap();
        assert_eq!(cov.unique_indices.len(), 10);
        assert!((cov.coverage_fraction - 10.0 / 64.0).abs() < 1e-15);

        let c = with_support(64, &(20..30).map(|i| (i, 2.0)).collect::<Vec<_>>());
        let cov = class_unique_ce(&[&a, &c], 10).unwrap();
        assert_eq!(cov.coverage_fraction, 20.0 / 64.0);
    }

    #[test]
    fn coverage_grows_monotonically_with_instances() {
        let a = with_support(32, &[(0, 3.0), (5, 2.0)]);
        let b = with_support(32, &[(5, 1.0), (9, 4.0)]);
        let solo = class_unique_ce(&[&a], 10).unwrap();
        let both = class_unique_ce(&[&a, &b], 10).unwrap();
        assert!(both.coverage_fraction >= solo.coverage_fraction);
        assert_eq!(both.unique_indices.len(), 3);
    }

    #[test]
    fn coverage_never_counts_opposing_features() {
        // only two supporting entries despite top_k = 10
        let d = with_support(16, &[(3, 1.0), (7, 2.0)]);
        let cov = class_unique_ce(&[&d], 10).unwrap();
        assert_eq!(cov.unique_indices.iter().copied().collect::<Vec<_>>(), vec![3, 7]);
    }

    #[test]
    fn uniform_support_gives_exactly_the_fraction() {
        let positive: Vec<(usize, f64)> = (0..100).map(|i| (i, 0.5)).collect();
        let mut ce = vec![0.0; 100];
        for &(i, v) in &positive {
            ce[i] = v;
        }
        let d = binary(ModelKind::Logistic, ce, 0.0);
        let share = topk_contribution_share(&d, KRule::Fraction).unwrap();
        assert_eq!(share.share, 0.10);
    }

    #[test]
    fn dominant_entry_takes_nearly_all_mass() {
        let d = with_support(3, &[(0, 99.0), (1, 0.5), (2, 0.5)]);
        let share = topk_contribution_share(&d, KRule::Fraction).unwrap();
        assert!(share.share >= 0.99);
    }

    #[test]
    fn absolute_rule_caps_at_ten_entries() {
        let positive: Vec<(usize, f64)> = (0..25).map(|i| (i, 1.0)).collect();
        let d = with_support(30, &positive);
        let share = topk_contribution_share(&d, KRule::Absolute).unwrap();
        assert!((share.share - 10.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn share_is_one_when_fewer_supporting_than_k(){
        let d = with_support(100, &[(4, 1.0), (8, 3.0)]);
        let share = topk_contribution_share(&d, KRule::Fraction).unwrap();
        assert_eq!(share.share, 1.0);
    }

    #[test]
    fn no_supporting_ce_is_an_error() {
        let d = binary(ModelKind::Logistic, vec![-0.1, -0.2], 1.0);
        assert_eq!(d.predicted_label, 1);
        assert!(!has_supporting_ce(&d));
        assert!(topk_contribution_share(&d, KRule::Fraction).is_err());
    }

    #[test]
    fn fraction_k_rule_rounds_half_up_and_floors_at_one() {
        assert_eq!(KRule::Fraction.k_for(100, 50), 10);
        assert_eq!(KRule::Fraction.k_for(64, 50), 6);
        assert_eq!(KRule::Fraction.k_for(5, 5), 1);
        assert_eq!(KRule::Fraction.k_for(4, 4), 1);
        assert_eq!(KRule::Fraction.k_for(15, 15), 2);
        assert_eq!(KRule::Absolute.k_for(1000, 7), 7);
        assert_eq!(KRule::Absolute.k_for(1000, 70), 10);
    }

    #[test]
    fn frequency_profile_matches_a_hand_tally() {
        let mk = |ce: Vec<f64>| {
            let mut d = binary(ModelKind::Logistic, ce, 10.0);
            d.true_label = 1;
            d
        };
        let a = mk(vec![5.0, 3.0, -2.0, 1.0]);
        let b = mk(vec![4.0, -1.0, 2.0, 6.0]);
        let c = mk(vec![1.0, 2.0, 3.0, -4.0]);
        let fm = frequency_magnitude_profile(&[&a, &b, &c], 2, 2).unwrap();
        assert_eq!(fm.entries.len(), 2);
        assert_eq!(fm.entries[0].feature_index, 3);
        assert_eq!(fm.entries[0].frequency, 1);
        assert!((fm.entries[0].mean_magnitude - 11.0 / 3.0).abs() < 1e-12);
        assert_eq!(fm.entries[1].feature_index, 0);
        assert_eq!(fm.entries[1].frequency, 2);
        assert!((fm.entries[1].mean_magnitude - 10.0 / 3.0).abs() < 1e-12);
        // freq = [2,2,1,1], mean magnitude = [10/3, 2, 7/3, 11/3]
        let expect = -2.0 / (4.0f64.sqrt() * 5.0f64.sqrt());
        assert!((fm.spearman_rho - expect).abs() < 1e-12, "rho {}", fm.spearman_rho);
    }

    #[test]
    fn identical_instances_use_identical_features() {
        let mk = || {
            let mut d = binary(ModelKind::Logistic, vec![3.0, 1.0, 0.5, -0.2], 0.0);
            d.true_label = 1;
            d
        };
        let (a, b, c) = (mk(), mk(), mk());
        let fm = frequency_magnitude_profile(&[&a, &b, &c], 2, 5).unwrap();
        let used: Vec<&FreqMagEntry> =
            fm.entries.iter().filter(|e| e.frequency > 0).collect();
        assert_eq!(used.len(), 2);
        assert!(used.iter().all(|e| e.frequency == 3));
    }

    #[test]
    fn comonotone_profile_has_rho_one() {
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[0.1, 0.5, 0.7, 2.0]), 1.0);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[5.0, 4.0, 3.0]), -1.0);
        assert_eq!(spearman_rho(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(spearman_rho(&[1.0], &[2.0]), 0.0);
    }

    #[test]
    fn average_ranks_handle_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 30.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn aggregate_pools_by_class_and_by_group() {
        let values = vec![(0, 0.1), (0, 0.1), (1, 0.3), (2, 0.5)];
        let by_class = aggregate(&values, Grouping::Class, &[0], 3);
        assert_eq!(by_class.len(), 3);
        assert_eq!(by_class[0].group, "class_0");
        assert_eq!(by_class[0].mean, 0.1);
        assert_eq!(by_class[0].sd, 0.0);
        assert_eq!(by_class[0].count, 2);

        let grouped = aggregate(&values, Grouping::MajorityMinority, &[0], 3);
        assert_eq!(grouped.len(), 2);
        assert_eq!(grouped[0].group, "majority");
        assert_eq!(grouped[0].count, 2);
        assert_eq!(grouped[1].group, "minority");
        assert!((grouped[1].mean - 0.4).abs() < 1e-15);
    }

    #[test]
    fn empty_groups_are_omitted() {
        let values = vec![(1, 0.2)];
        let by_class = aggregate(&values, Grouping::Class, &[0], 3);
        assert_eq!(by_class.len(), 1);
        assert_eq!(by_class[0].group, "class_1");
    }

    #[test]
    fn mean_sd_single_value_has_zero_sd() {
        assert_eq!(mean_sd(&[0.7]), Some((0.7, 0.0)));
        assert_eq!(mean_sd(&[]), None);
        let (m, s) = mean_sd(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }
}
