//! Oversampling methods that rebalance minority classes by synthesizing
//! new instances in raw-feature or embedding space.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, EmbeddingSet};
use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::rng::{derive_seed, SeededRng};
use crate::scalar::Scalar;
use crate::train::Targets;

/// Oversampling method. `Base` leaves the training set untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Base,
    Smote,
    Adasyn,
    Remix,
    Dsm,
    Eos,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Smote => "smote",
            Method::Adasyn => "adasyn",
            Method::Remix => "remix",
            Method::Dsm => "dsm",
            Method::Eos => "eos",
        }
    }
}

/// How a synthetic sample was built: sample = (1-lambda)*parent_a +
/// (lambda)*parent_b, computed exactly in that form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub method: Method,
    pub parent_a: usize,
    pub parent_b: usize,
    pub lambda: f64,
}

/// Synthetic samples plus their labels and full provenance.
#[derive(Debug, Clone)]
pub struct SyntheticBatch<F: Scalar> {
    pub samples: Matrix<F>,
    /// Hard class ids for all methods except remix, which emits soft labels.
    pub targets: Targets<F>,
    pub provenance: Vec<Provenance>,
}

impl<F: Scalar> SyntheticBatch<F> {
    pub fn n_samples(&self) -> usize {
        self.samples.n_rows()
    }

    /// Checks batch invariants: aligned lengths, soft rows summing to 1
    /// within 1e-12, lambda in [0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != self.samples.n_rows()
            || self.provenance.len() != self.samples.n_rows()
        {
            return Err(Error::Shape(format!(
                "batch has {} samples, {} targets, {} provenance records",
                self.samples.n_rows(),
                self.targets.len(),
                self.provenance.len()
            )));
        }
        if let Targets::Soft(m) = &self.targets {
            for (i, row) in m.iter_rows().enumerate() {
                let sum: f64 = row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidData(format!(
                        "soft label row {i} sums to {sum}, not 1"
                    )));
                }
            }
        }
        if let Some(p) = self.provenance.iter().find(|p| !(0.0..=1.0).contains(&p.lambda)) {
            return Err(Error::InvalidData(format!("lambda {} outside [0, 1]", p.lambda)));
        }
        Ok(())
    }
}

/// Parameters shared by the oversampling methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub method: Method,
    pub k_neighbors: usize,
    /// Desired per-class totals; defaults to the maximum original count.
    pub target_counts: Option<Vec<usize>>,
    /// Beta(alpha, alpha) concentration for remix mixing draws.
    pub mix_alpha: f64,
    /// Remix label smoothing amount in [0, 1).
    pub smoothing_eps: f64,
    /// Upper end of the eos interpolation range (0, 1].
    pub eos_lambda_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            method: Method::Base,
            k_neighbors: 5,
            target_counts: None,
            mix_alpha: 1.0,
            smoothing_eps: 0.1,
            eos_lambda_max: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::InvalidConfig("k_neighbors must be >= 1".into()));
        }
        if !(self.mix_alpha > 0.0 && self.mix_alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mix_alpha {} must be positive and finite",
                self.mix_alpha
            )));
        }
        if !(0.0..1.0).contains(&self.smoothing_eps) {
            return Err(Error::InvalidConfig(format!(
                "smoothing_eps {} must lie in [0, 1)",
                self.smoothing_eps
            )));
        }
        if !(self.eos_lambda_max > 0.0 && self.eos_lambda_max <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eos_lambda_max {} must lie in (0, 1]",
                self.eos_lambda_max
            )));
        }
        Ok(())
    }
}

/// sample[i] = (1-lambda)*a[i] + lambda*b[i]; the provenance reconstruction
/// recomputes this exact expression.
fn interpolate<F: Scalar>(a: &[F], b: &[F], lambda: f64) -> Vec<F> {
    let lam = F::from_f64_lossy(lambda);
    let inv = F::one() - lam;
    a.iter().zip(b).map(|(&ai, &bi)| inv * ai + lam * bi).collect()
}

/// Indices of the k nearest candidates to `query` by squared Euclidean
/// distance, ties broken by ascending index.
fn knn_among<F: Scalar>(
    points: &Matrix<F>,
    query: &[F],
    candidates: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    if k > candidates.len() {
        return Err(Error::InvalidData(format!(
            "k = {k} neighbors requested from {} candidates",
            candidates.len()
        )));
    }
    let mut ranked: Vec<(F, usize)> =
        candidates.iter().map(|&i| (sq_dist(points.row(i), query), i)).collect();
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1))
    });
    Ok(ranked[..k].iter().map(|&(_, i)| i).collect())
}

/// k nearest neighbors of `points[query_index]` among the other rows.
pub fn knn_same_class<F: Scalar>(
    points: &Matrix<F>,
    query_index: usize,
    k: usize,
) -> Result<Vec<usize>> {
    if query_index >= points.n_rows() {
        return Err(Error::Shape(format!(
            "query index {query_index} out of range for {} points",
            points.n_rows()
        )));
    }
    let candidates: Vec<usize> =
        (0..points.n_rows()).filter(|&i| i != query_index).collect();
    knn_among(points, points.row(query_index), &candidates, k)
}

/// Shared interpolation loop: parents round-robin over `parent_rows`
/// (ascending), partner uniform among that parent's precomputed neighbors,
/// lambda drawn per sample. Parent indices in the output provenance refer
/// to `points` rows.
fn interpolation_batch<F: Scalar>(
    points: &Matrix<F>,
    parent_rows: &[usize],
    neighbors: &[Vec<usize>],
    n_synth: usize,
    label: usize,
    method: Method,
    draw_lambda: &mut dyn FnMut(&mut SeededRng) -> f64,
    rng: &mut SeededRng,
) -> Result<SyntheticBatch<F>> {
    let mut samples = Matrix::zeros(0, points.n_cols());
    let mut provenance = Vec::with_capacity(n_synth);
    for s in 0..n_synth {
        let p = s % parent_rows.len();
        let a = parent_rows[p];
        let b = neighbors[p][rng.index(neighbors[p].len())];
        let lambda = draw_lambda(rng);
        samples.push_row(interpolate(points.row(a), points.row(b), lambda))?;
        provenance.push(Provenance { method, parent_a: a, parent_b: b, lambda });
    }
    let batch = SyntheticBatch {
        samples,
        targets: Targets::Hard(vec![label; n_synth]),
        provenance,
    };
    batch.validate()?;
    Ok(batch)
}

/// SMOTE over one class: parents cycle round-robin through the minority
/// rows, the partner is uniform among the parent's k nearest same-class
/// neighbors, lambda ~ Uniform[0, 1). Provenance indices refer to rows of
/// `minority`; targets use class id 0 as the only class in view, so callers
/// with a wider class space relabel the batch.
pub fn smote<F: Scalar>(
    minority: &Matrix<F>,
    k: usize,
    n_synth: usize,
    seed: u64,
) -> Result<SyntheticBatch<F>> {
    let m = minority.n_rows();
    if m < k + 1 {
        return Err(Error::InvalidData(format!(
            "smote needs at least k+1 = {} minority points, got {m}",
            k + 1
        )));
    }
    let parent_rows: Vec<usize> = (0..m).collect();
    let neighbors: Vec<Vec<usize>> =
        parent_rows.iter().map(|&i| knn_same_class(minority, i, k)).collect::<Result<_>>()?;
    let mut rng = SeededRng::new(seed);
    interpolation_batch(
        minority,
        &parent_rows,
        &neighbors,
        n_synth,
        0,
        Method::Smote,
        &mut |r| r.unit_f64(),
        &mut rng,
    )
}

/// Splits `n_total` proportionally to the density scores `r`, rounding to
/// nearest and assigning the leftover to the highest-r entries (uniformly
/// when all scores are zero). Monotone: r_i > r_j implies g_i >= g_j.
fn adasyn_allocation(r: &[f64], n_total: usize) -> Vec<usize> {
    let m = r.len();
    let sum: f64 = r.iter().sum();
    let mut g: Vec<usize> = if sum > 0.0 {
        r.iter().map(|ri| (n_total as f64 * ri / sum).round() as usize).collect()
    } else {
        vec![n_total / m; m]
    };
    // Order for residue handling: highest r first, ties by ascending index.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| r[j].partial_cmp(&r[i]).expect("finite scores").then(i.cmp(&j)));
    let mut assigned: usize = g.iter().sum();
    let mut cursor = 0;
    while assigned < n_total {
        g[order[cursor % m]] += 1;
        assigned += 1;
        cursor += 1;
    }
    // Over-allocation walks back from the lowest-r end, one unit per entry
    // per pass, which keeps the allocation monotone in r.
    while assigned > n_total {
        for &idx in order.iter().rev() {
            if assigned == n_total {
                break;
            }
            if g[idx] > 0 {
                g[idx] -= 1;
                assigned -= 1;
            }
        }
    }
    g
}

/// ADASYN over one class: each minority point's share of `n_total` follows
/// the fraction of non-target neighbors among its k nearest in the full
/// dataset; interpolation then runs as in smote among same-class neighbors.
/// Provenance indices refer to rows of `ds`.
pub fn adasyn<F: Scalar>(
    ds: &Dataset<F>,
    target_class: usize,
    k: usize,
    n_total: usize,
    seed: u64,
) -> Result<SyntheticBatch<F>> {
    if target_class >= ds.num_classes() {
        return Err(Error::InvalidConfig(format!("target class {target_class} out of range")));
    }
    let minority_rows = ds.class_indices(target_class);
    let m = minority_rows.len();
    if m < k + 1 {
        return Err(Error::InvalidData(format!(
            "adasyn needs at least k+1 = {} instances of class {target_class}, got {m}",
            k + 1
        )));
    }
    if k + 1 > ds.n_samples() {
        return Err(Error::InvalidData(format!(
            "k = {k} too large for a dataset of {} rows",
            ds.n_samples()
        )));
    }

    let all_rows: Vec<usize> = (0..ds.n_samples()).collect();
    let mut r = Vec::with_capacity(m);
    for &i in &minority_rows {
        let candidates: Vec<usize> = all_rows.iter().copied().filter(|&j| j != i).collect();
        let nn = knn_among(ds.features(), ds.row(i), &candidates, k)?;
        let adversaries = nn.iter().filter(|&&j| ds.labels()[j] != target_class).count();
        r.push(adversaries as f64 / k as f64);
    }
    let g = adasyn_allocation(&r, n_total);

    // Same-class neighbor lists for the interpolation stage.
    let mut rng = SeededRng::new(seed);
    let mut samples = Matrix::zeros(0, ds.feature_dim());
    let mut provenance = Vec::with_capacity(n_total);
    for (p, &row) in minority_rows.iter().enumerate() {
        if g[p] == 0 {
            continue;
        }
        let candidates: Vec<usize> =
            minority_rows.iter().copied().filter(|&j| j != row).collect();
        let nn = knn_among(ds.features(), ds.row(row), &candidates, k)?;
        for _ in 0..g[p] {
            let b = nn[rng.index(nn.len())];
            let lambda = rng.unit_f64();
            samples.push_row(interpolate(ds.row(row), ds.row(b), lambda))?;
            provenance.push(Provenance {
                method: Method::Adasyn,
                parent_a: row,
                parent_b: b,
                lambda,
            });
        }
    }
    let n = samples.n_rows();
    let batch = SyntheticBatch {
        samples,
        targets: Targets::Hard(vec![target_class; n]),
        provenance,
    };
    batch.validate()?;
    Ok(batch)
}

/// One remix draw: features = (1-lambda)*x_b + lambda*x_a, soft label
/// lambda*onehot(y_a) + (1-lambda)*onehot(y_b) smoothed by eps.
fn remix_sample<F: Scalar>(
    ds: &Dataset<F>,
    a: usize,
    b: usize,
    lambda: f64,
    eps: f64,
) -> (Vec<F>, Vec<F>) {
    let features = interpolate(ds.row(b), ds.row(a), lambda);
    let c = ds.num_classes();
    let lam = F::from_f64_lossy(lambda);
    let keep = F::from_f64_lossy(1.0 - eps);
    let fill = F::from_f64_lossy(eps) / F::from_f64_lossy(c as f64);
    let mut label = vec![F::zero(); c];
    label[ds.labels()[a]] += lam;
    label[ds.labels()[b]] += F::one() - lam;
    for l in &mut label {
        *l = keep * *l + fill;
    }
    (features, label)
}

/// Remix: mixup pairs drawn uniformly from the full dataset with
/// Beta(alpha, alpha) weights and smoothed soft labels; a draw is retained
/// only when its dominant label component is a class with unmet quota.
/// Provenance indices refer to rows of `ds`; parent_b is the
/// lambda-weighted row.
pub fn remix<F: Scalar>(
    ds: &Dataset<F>,
    cfg: &AugmentConfig,
    quotas: &[usize],
    seed: u64,
) -> Result<SyntheticBatch<F>> {
    cfg.validate()?;
    if quotas.len() != ds.num_classes() {
        return Err(Error::Shape(format!(
            "{} quotas for {} classes",
            quotas.len(),
            ds.num_classes()
        )));
    }
    let total: usize = quotas.iter().sum();
    let mut remaining = quotas.to_vec();
    let mut rng = SeededRng::new(seed);
    let mut samples = Matrix::zeros(0, ds.feature_dim());
    let mut labels = Matrix::zeros(0, ds.num_classes());
    let mut provenance = Vec::with_capacity(total);
    let max_draws = 1000 * total.max(1);
    let mut produced = 0;
    let mut draws = 0;
    while produced < total {
        if draws >= max_draws {
            return Err(Error::Augment(format!(
                "remix failed to draw enough minority-dominant samples after {draws} attempts"
            )));
        }
        draws += 1;
        let a = rng.index(ds.n_samples());
        let b = rng.index(ds.n_samples());
        let lambda = rng.beta_symmetric(cfg.mix_alpha);
        let (features, label) = remix_sample(ds, a, b, lambda, cfg.smoothing_eps);
        let mut dominant = 0;
        for (c, &v) in label.iter().enumerate() {
            if v > label[dominant] {
                dominant = c;
            }
        }
        if remaining[dominant] == 0 {
            continue;
        }
        remaining[dominant] -= 1;
        produced += 1;
        samples.push_row(features)?;
        labels.push_row(label)?;
        provenance.push(Provenance { method: Method::Remix, parent_a: b, parent_b: a, lambda });
    }
    let batch = SyntheticBatch { samples, targets: Targets::Soft(labels), provenance };
    batch.validate()?;
    Ok(batch)
}

/// SMOTE in embedding space: interpolates among same-class embedding rows.
/// Provenance indices refer to rows of the embedding set.
pub fn latent_smote_dsm<F: Scalar>(
    embed: &EmbeddingSet<F>,
    target_class: usize,
    k: usize,
    n_synth: usize,
    seed: u64,
) -> Result<SyntheticBatch<F>> {
    class_interpolation(embed.dataset(), target_class, k, n_synth, Method::Dsm, seed)
}

/// Same-class interpolation over the rows of `ds` labeled `target_class`,
/// with provenance remapped to absolute dataset rows.
fn class_interpolation<F: Scalar>(
    ds: &Dataset<F>,
    target_class: usize,
    k: usize,
    n_synth: usize,
    method: Method,
    seed: u64,
) -> Result<SyntheticBatch<F>> {
    if target_class >= ds.num_classes() {
        return Err(Error::InvalidConfig(format!("target class {target_class} out of range")));
    }
    let rows = ds.class_indices(target_class);
    let m = rows.len();
    if m < k + 1 {
        return Err(Error::InvalidData(format!(
            "{} needs at least k+1 = {} instances of class {target_class}, got {m}",
            method.as_str(),
            k + 1
        )));
    }
    let neighbors: Vec<Vec<usize>> = rows
        .iter()
        .map(|&i| {
            let candidates: Vec<usize> = rows.iter().copied().filter(|&j| j != i).collect();
            knn_among(ds.features(), ds.row(i), &candidates, k)
        })
        .collect::<Result<_>>()?;
    let mut rng = SeededRng::new(seed);
    interpolation_batch(
        ds.features(),
        &rows,
        &neighbors,
        n_synth,
        target_class,
        method,
        &mut |r| r.unit_f64(),
        &mut rng,
    )
}

/// EOS: interpolates each minority embedding toward one of its k nearest
/// adversary-class embeddings with lambda ~ (0, lambda_max], keeping the
/// minority label. Provenance indices refer to rows of the embedding set;
/// parent_b is always the adversary.
pub fn eos<F: Scalar>(
    embed: &EmbeddingSet<F>,
    target_class: usize,
    k: usize,
    n_synth: usize,
    lambda_max: f64,
    seed: u64,
) -> Result<SyntheticBatch<F>> {
    eos_on(embed.dataset(), target_class, k, n_synth, lambda_max, seed)
}

fn eos_on<F: Scalar>(
    ds: &Dataset<F>,
    target_class: usize,
    k: usize,
    n_synth: usize,
    lambda_max: f64,
    seed: u64,
) -> Result<SyntheticBatch<F>> {
    if target_class >= ds.num_classes() {
        return Err(Error::InvalidConfig(format!("target class {target_class} out of range")));
    }
    if !(lambda_max > 0.0 && lambda_max <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "eos lambda_max {lambda_max} must lie in (0, 1]"
        )));
    }
    let rows = ds.class_indices(target_class);
    if rows.is_empty() {
        return Err(Error::InvalidData(format!("no instances of class {target_class}")));
    }
    let adversaries: Vec<usize> =
        (0..ds.n_samples()).filter(|&i| ds.labels()[i] != target_class).collect();
    if adversaries.is_empty() {
        return Err(Error::InvalidData("eos needs at least one adversary-class point".into()));
    }
    if k > adversaries.len() {
        return Err(Error::InvalidData(format!(
            "k = {k} adversary neighbors requested from {}",
            adversaries.len()
        )));
    }
    let neighbors: Vec<Vec<usize>> = rows
        .iter()
        .map(|&i| knn_among(ds.features(), ds.row(i), &adversaries, k))
        .collect::<Result<_>>()?;
    let mut rng = SeededRng::new(seed);
    interpolation_batch(
        ds.features(),
        &rows,
        &neighbors,
        n_synth,
        target_class,
        Method::Eos,
        &mut |r| lambda_max * (1.0 - r.unit_f64()),
        &mut rng,
    )
}

/// Training set after augmentation: originals first (untouched), synthetics
/// appended. Targets are hard except under remix, where originals carry
/// one-hot rows and synthetics their soft labels.
#[derive(Debug, Clone)]
pub struct AugmentedSet<F: Scalar> {
    pub features: Matrix<F>,
    pub targets: Targets<F>,
    /// Dominant class per row; equals the hard label where one exists.
    pub hard_labels: Vec<usize>,
    pub n_original: usize,
    /// One record per synthetic row, aligned with rows n_original.. .
    pub provenance: Vec<Provenance>,
    pub num_classes: usize,
}

impl<F: Scalar> AugmentedSet<F> {
    pub fn n_samples(&self) -> usize {
        self.features.n_rows()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.hard_labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Raises every class to its target count (default: the maximum original
/// count) with the configured method. Originals are never mutated or
/// dropped; synthetic provenance refers to rows of `ds`.
pub fn rebalance<F: Scalar>(
    ds: &Dataset<F>,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<AugmentedSet<F>> {
    cfg.validate()?;
    let c_total = ds.num_classes();
    let targets = match &cfg.target_counts {
        Some(t) => {
            if t.len() != c_total {
                return Err(Error::InvalidConfig(format!(
                    "{} target counts for {c_total} classes",
                    t.len()
                )));
            }
            t.clone()
        }
        None => vec![ds.max_class_count(); c_total],
    };
    for c in 0..c_total {
        if targets[c] < ds.class_counts()[c] {
            return Err(Error::InvalidConfig(format!(
                "target count {} for class {c} below its current {}",
                targets[c],
                ds.class_counts()[c]
            )));
        }
    }
    let needed: Vec<usize> =
        (0..c_total).map(|c| targets[c] - ds.class_counts()[c]).collect();

    let mut batches: Vec<SyntheticBatch<F>> = Vec::new();
    match cfg.method {
        Method::Base => {}
        Method::Smote | Method::Dsm => {
            for c in 0..c_total {
                if needed[c] == 0 {
                    continue;
                }
                batches.push(class_interpolation(
                    ds,
                    c,
                    cfg.k_neighbors,
                    needed[c],
                    cfg.method,
                    derive_seed(seed, c as u64),
                )?);
            }
        }
        Method::Adasyn => {
            for c in 0..c_total {
                if needed[c] == 0 {
                    continue;
                }
                batches.push(adasyn(ds, c, cfg.k_neighbors, needed[c], derive_seed(seed, c as u64))?);
            }
        }
        Method::Eos => {
            for c in 0..c_total {
                if needed[c] == 0 {
                    continue;
                }
                batches.push(eos_on(
                    ds,
                    c,
                    cfg.k_neighbors,
                    needed[c],
                    cfg.eos_lambda_max,
                    derive_seed(seed, c as u64),
                )?);
            }
        }
        Method::Remix => {
            let batch = remix(ds, cfg, &needed, seed)?;
            if batch.n_samples() > 0 {
                batches.push(batch);
            }
        }
    }

    let soft = cfg.method == Method::Remix;
    let mut features = ds.features().clone();
    let mut hard_labels = ds.labels().to_vec();
    let mut provenance = Vec::new();
    let mut soft_rows: Option<Matrix<F>> = if soft {
        let mut m = Matrix::zeros(0, c_total);
        for &l in ds.labels() {
            let mut row = vec![F::zero(); c_total];
            row[l] = F::one();
            m.push_row(row)?;
        }
        Some(m)
    } else {
        None
    };

    for batch in batches {
        for (i, row) in batch.samples.iter_rows().enumerate() {
            features.push_row(row.to_vec())?;
            hard_labels.push(batch.targets.dominant_label(i));
            if let Some(m) = &mut soft_rows {
                match &batch.targets {
                    Targets::Soft(rows) => m.push_row(rows.row(i).to_vec())?,
                    Targets::Hard(_) => {
                        return Err(Error::InvalidData(
                            "remix rebalance produced hard labels".into(),
                        ))
                    }
                }
            }
        }
        provenance.extend(batch.provenance);
    }

    let targets = match soft_rows {
        Some(m) => Targets::Soft(m),
        None => Targets::Hard(hard_labels.clone()),
    };
    Ok(AugmentedSet {
        features,
        targets,
        hard_labels,
        n_original: ds.n_samples(),
        provenance,
        num_classes: c_total,
    })
}

/// Serializes a batch to CSV: features, the dominant label, then
/// provenance columns (method, parent_a, parent_b, lambda).
pub fn synthetic_batch_to_csv<F: Scalar>(batch: &SyntheticBatch<F>) -> String {
    let dim = batch.samples.n_cols();
    let mut out = String::new();
    for i in 0..dim {
        out.push_str(&format!("f{i},"));
    }
    out.push_str("label,method,parent_a,parent_b,lambda\n");
    for (i, row) in batch.samples.iter_rows().enumerate() {
        for v in row {
            out.push_str(&format!("{v},"));
        }
        let p = &batch.provenance[i];
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            batch.targets.dominant_label(i),
            p.method.as_str(),
            p.parent_a,
            p.parent_b,
            p.lambda
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Dataset<f64> {
        Dataset::with_dense_ids(matrix(rows), labels, classes).unwrap()
    }

    /// Asserts every record rebuilds its sample from the referenced parents.
    fn assert_exact_reconstruction(batch: &SyntheticBatch<f64>, points: &Matrix<f64>) {
        for (i, p) in batch.provenance.iter().enumerate() {
            let rebuilt = interpolate(points.row(p.parent_a), points.row(p.parent_b), p.lambda);
            assert_eq!(batch.samples.row(i), rebuilt.as_slice(), "sample {i}");
        }
    }

    #[test]
    fn knn_on_collinear_points() {
        let pts = matrix(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        assert_eq!(knn_same_class(&pts, 1, 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn knn_returns_duplicates_first() {
        let pts = matrix(vec![vec![5.0], vec![5.0], vec![0.0]]);
        assert_eq!(knn_same_class(&pts, 0, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn knn_matches_exhaustive_scan() {
        let mut rng = SeededRng::new(21);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..4).map(|_| rng.standard_normal_f64()).collect())
            .collect();
        let pts = matrix(rows);
        for q in 0..100 {
            let got = knn_same_class(&pts, q, 5).unwrap();
            let mut oracle: Vec<(f64, usize)> = (0..100)
                .filter(|&i| i != q)
                .map(|i| {
                    let d: f64 = pts
                        .row(i)
                        .iter()
                        .zip(pts.row(q))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    (d, i)
                })
                .collect();
            oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expect: Vec<usize> = oracle[..5].iter().map(|&(_, i)| i).collect();
            assert_eq!(got, expect, "query {q}");
        }
    }

    #[test]
    fn knn_rejects_oversized_k() {
        let pts = matrix(vec![vec![0.0], vec![1.0], vec![2.0]]);
        assert!(knn_same_class(&pts, 0, 2).is_ok());
        assert!(knn_same_class(&pts, 0, 3).is_err());
    }

    #[test]
    fn smote_on_identical_points_reproduces_them() {
        let pts = matrix(vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        let batch = smote(&pts, 1, 10, 3).unwrap();
        assert_eq!(batch.n_samples(), 10);
        for row in batch.samples.iter_rows() {
            assert!((row[0] - 1.0).abs() < 1e-15);
            assert!((row[1] - 2.0).abs() < 1e-15);
        }
        assert_exact_reconstruction(&batch, &pts);
    }

    #[test]
    fn interpolation_endpoints_are_exact() {
        let a = vec![0.5, -2.0, 7.5];
        let b = vec![1.5, 3.0, -0.25];
        assert_eq!(interpolate(&a, &b, 0.0), a);
        assert_eq!(interpolate(&a, &b, 1.0), b);
    }

    #[test]
    fn smote_synthetics_stay_on_parent_segments() {
        let mut rng = SeededRng::new(22);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| 2.0 * rng.standard_normal_f64()).collect())
            .collect();
        let pts = matrix(rows);
        let batch = smote(&pts, 5, 1000, 23).unwrap();
        assert_eq!(batch.n_samples(), 1000);
        assert_exact_reconstruction(&batch, &pts);
        for (i, p) in batch.provenance.iter().enumerate() {
            assert!((0.0..1.0).contains(&p.lambda));
            for j in 0..3 {
                let (lo, hi) = {
                    let a = pts.row(p.parent_a)[j];
                    let b = pts.row(p.parent_b)[j];
                    (a.min(b), a.max(b))
                };
                let v = batch.samples.row(i)[j];
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn smote_round_robin_spreads_parents_evenly() {
        let pts = matrix((0..4).map(|i| vec![i as f64]).collect());
        let batch = smote(&pts, 1, 10, 5).unwrap();
        let mut counts = [0usize; 4];
        for p in &batch.provenance {
            counts[p.parent_a] += 1;
        }
        assert_eq!(counts, [3, 3, 2, 2]);
    }

    #[test]
    fn smote_rejects_too_few_points() {
        let pts = matrix(vec![vec![0.0], vec![1.0]]);
        assert!(smote(&pts, 2, 5, 1).is_err());
    }

    #[test]
    fn allocation_matches_the_worked_example() {
        assert_eq!(adasyn_allocation(&[0.6, 0.2], 8), vec![6, 2]);
    }

    #[test]
    fn allocation_falls_back_to_uniform_on_zero_density() {
        assert_eq!(adasyn_allocation(&[0.0, 0.0, 0.0], 7), vec![3, 2, 2]);
    }

    #[test]
    fn allocation_sums_and_monotonicity_hold_over_seeded_configs() {
        let mut rng = SeededRng::new(24);
        for _ in 0..200 {
            let m = 1 + rng.index(12);
            let n = rng.index(50);
            let r: Vec<f64> = (0..m)
                .map(|_| if rng.unit_f64() < 0.2 { 0.0 } else { rng.unit_f64() })
                .collect();
            let g = adasyn_allocation(&r, n);
            assert_eq!(g.iter().sum::<usize>(), n, "r={r:?}");
            for i in 0..m {
                for j in 0..m {
                    if r[i] > r[j] {
                        assert!(g[i] >= g[j], "r={r:?} g={g:?}");
                    }
                    if r[i] == r[j] {
                        assert!(g[i].abs_diff(g[j]) <= 1, "r={r:?} g={g:?}");
                    }
                }
            }
        }
    }

    /// Majority ring around one minority pair plus a far minority cluster:
    /// points near the boundary earn larger allocations.
    #[test]
    fn adasyn_prefers_boundary_points() {
        let mut rows = vec![
            vec![0.0, 0.0],
            vec![0.3, 0.0],
            vec![100.0, 100.0],
            vec![100.3, 100.0],
            vec![100.0, 100.3],
            vec![100.3, 100.3],
        ];
        let mut labels = vec![1, 1, 1, 1, 1, 1];
        for i in 0..8 {
            let angle = std::f64::consts::TAU * i as f64 / 8.0;
            rows.push(vec![0.15 + 0.5 * angle.cos(), 0.5 * angle.sin()]);
            labels.push(0);
        }
        let ds = dataset(rows, labels, 2);
        let batch = adasyn(&ds, 1, 3, 12, 7).unwrap();
        assert_eq!(batch.n_samples(), 12);
        assert_exact_reconstruction(&batch, ds.features());
        let boundary = batch
            .provenance
            .iter()
            .filter(|p| p.parent_a <= 1)
            .count();
        assert!(boundary >= 10, "boundary points got {boundary} of 12");
        // Every parent pair is minority-labeled.
        for p in &batch.provenance {
            assert_eq!(ds.labels()[p.parent_a], 1);
            assert_eq!(ds.labels()[p.parent_b], 1);
        }
    }

    #[test]
    fn adasyn_batch_sizes_match_over_seeded_runs() {
        let mut rng = SeededRng::new(25);
        for trial in 0..20 {
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for _ in 0..12 {
                rows.push(vec![rng.standard_normal_f64(), rng.standard_normal_f64()]);
                labels.push(1);
            }
            for _ in 0..30 {
                rows.push(vec![
                    2.0 + rng.standard_normal_f64(),
                    2.0 + rng.standard_normal_f64(),
                ]);
                labels.push(0);
            }
            let ds = dataset(rows, labels, 2);
            let n = rng.index(40);
            let batch = adasyn(&ds, 1, 5, n, 1000 + trial).unwrap();
            assert_eq!(batch.n_samples(), n, "trial {trial}");
        }
    }

    #[test]
    fn remix_sample_identity_and_smoothing() {
        let ds = dataset(vec![vec![1.0, 2.0], vec![-3.0, 4.0]], vec![0, 1], 2);
        let (x, l) = remix_sample(&ds, 0, 1, 1.0, 0.0);
        assert_eq!(x, vec![1.0, 2.0]);
        assert_eq!(l, vec![1.0, 0.0]);

        let (_, l) = remix_sample(&ds, 0, 1, 1.0, 0.1);
        assert!((l[0] - 0.95).abs() < 1e-15);
        assert!((l[1] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn remix_retains_only_quota_classes() {
        let mut rng = SeededRng::new(26);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..40 {
            rows.push(vec![rng.standard_normal_f64()]);
            labels.push(0);
        }
        for _ in 0..10 {
            rows.push(vec![5.0 + rng.standard_normal_f64()]);
            labels.push(1);
        }
        let ds = dataset(rows, labels, 2);
        let cfg = AugmentConfig { method: Method::Remix, ..AugmentConfig::default() };
        let batch = remix(&ds, &cfg, &[0, 30], 27).unwrap();
        assert_eq!(batch.n_samples(), 30);
        let Targets::Soft(soft) = &batch.targets else { panic!("remix labels must be soft") };
        for i in 0..30 {
            assert_eq!(batch.targets.dominant_label(i), 1, "sample {i}");
            let sum: f64 = soft.row(i).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
        assert_exact_reconstruction(&batch, ds.features());
    }

    #[test]
    fn remix_provenance_weights_parent_b_by_lambda() {
        let ds = dataset(vec![vec![0.0], vec![10.0]], vec![0, 1], 2);
        let cfg = AugmentConfig {
            method: Method::Remix,
            smoothing_eps: 0.0,
            ..AugmentConfig::default()
        };
        let batch = remix(&ds, &cfg, &[2, 2], 5).unwrap();
        for (i, p) in batch.provenance.iter().enumerate() {
            let expect = (1.0 - p.lambda) * ds.row(p.parent_a)[0]
                + p.lambda * ds.row(p.parent_b)[0];
            assert_eq!(batch.samples.row(i)[0], expect);
        }
    }

    #[test]
    fn dsm_runs_in_embedding_space() {
        let data = dataset(
            vec![
                vec![0.5, 0.5, 1.0],
                vec![0.5, 0.5, 1.0],
                vec![9.0, 9.0, 9.0],
                vec![8.0, 9.0, 9.0],
            ],
            vec![1, 1, 0, 0],
            2,
        );
        let embed = EmbeddingSet::new(data, None).unwrap();
        let batch = latent_smote_dsm(&embed, 1, 1, 6, 8).unwrap();
        assert_eq!(batch.samples.n_cols(), 3);
        assert_eq!(batch.n_samples(), 6);
        for row in batch.samples.iter_rows() {
            assert!((row[0] - 0.5).abs() < 1e-15);
            assert!((row[2] - 1.0).abs() < 1e-15);
        }
        let Targets::Hard(labels) = &batch.targets else { panic!("hard labels") };
        assert!(labels.iter().all(|&l| l == 1));
        // provenance is absolute: rows 0 and 1 are the only class-1 rows
        for p in &batch.provenance {
            assert!(p.parent_a <= 1 && p.parent_b <= 1);
        }
    }

    #[test]
    fn eos_interpolates_toward_adversaries_only() {
        let ds = dataset(
            vec![vec![0.0], vec![0.2], vec![1.0], vec![2.0], vec![3.0]],
            vec![1, 1, 0, 0, 0],
            2,
        );
        let embed = EmbeddingSet::new(ds, None).unwrap();
        let batch = eos(&embed, 1, 2, 200, 0.5, 9).unwrap();
        assert_eq!(batch.n_samples(), 200);
        assert_exact_reconstruction(&batch, embed.embeddings());
        let Targets::Hard(labels) = &batch.targets else { panic!("hard labels") };
        assert!(labels.iter().all(|&l| l == 1));
        for p in &batch.provenance {
            assert_eq!(embed.labels()[p.parent_a], 1, "parent_a is minority");
            assert_eq!(embed.labels()[p.parent_b], 0, "parent_b is adversary");
            assert!(p.lambda > 0.0 && p.lambda <= 0.5, "lambda {}", p.lambda);
        }
    }

    #[test]
    fn eos_with_tiny_lambda_max_stays_at_the_minority_point() {
        let ds = dataset(vec![vec![0.0], vec![0.1], vec![100.0]], vec![1, 1, 0], 2);
        let embed = EmbeddingSet::new(ds, None).unwrap();
        let batch = eos(&embed, 1, 1, 50, 1e-9, 10).unwrap();
        for (i, p) in batch.provenance.iter().enumerate() {
            let z = embed.embeddings().row(p.parent_a)[0];
            assert!((batch.samples.row(i)[0] - z).abs() <= 1e-9 * 100.0);
        }
    }

    #[test]
    fn eos_requires_adversaries() {
        let ds = dataset(vec![vec![0.0], vec![1.0]], vec![1, 1], 2);
        let embed = EmbeddingSet::new(ds, None).unwrap();
        assert!(eos(&embed, 1, 1, 5, 0.5, 1).is_err());
    }

    fn imbalanced_blobs(seed: u64, n_maj: usize, n_min: usize) -> Dataset<f64> {
        let mut rng = SeededRng::new(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n_maj {
            rows.push(vec![rng.standard_normal_f64(), rng.standard_normal_f64()]);
            labels.push(0);
        }
        for _ in 0..n_min {
            rows.push(vec![
                4.0 + rng.standard_normal_f64(),
                4.0 + rng.standard_normal_f64(),
            ]);
            labels.push(1);
        }
        dataset(rows, labels, 2)
    }

    #[test]
    fn rebalance_is_identity_on_balanced_input() {
        let ds = imbalanced_blobs(30, 20, 20);
        let cfg = AugmentConfig { method: Method::Smote, ..AugmentConfig::default() };
        let out = rebalance(&ds, &cfg, 1).unwrap();
        assert_eq!(out.n_samples(), 40);
        assert_eq!(out.provenance.len(), 0);
        assert_eq!(&out.features, ds.features());
    }

    #[test]
    fn rebalance_equalizes_a_twenty_to_one_set() {
        let ds = imbalanced_blobs(31, 200, 10);
        let cfg = AugmentConfig { method: Method::Smote, ..AugmentConfig::default() };
        let out = rebalance(&ds, &cfg, 2).unwrap();
        assert_eq!(out.class_counts(), vec![200, 200]);
        assert_eq!(out.n_original, 210);
        // originals retained bitwise, in order
        for i in 0..210 {
            assert_eq!(out.features.row(i), ds.features().row(i));
            assert_eq!(out.hard_labels[i], ds.labels()[i]);
        }
        for p in &out.provenance {
            assert_eq!(ds.labels()[p.parent_a], 1);
            assert_eq!(ds.labels()[p.parent_b], 1);
        }
    }

    #[test]
    fn rebalance_raises_exponential_counts_to_the_maximum() {
        let mut rng = SeededRng::new(32);
        let counts = [120usize, 71, 43, 25, 15];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                rows.push(vec![
                    3.0 * c as f64 + rng.standard_normal_f64(),
                    rng.standard_normal_f64(),
                ]);
                labels.push(c);
            }
        }
        let ds = dataset(rows, labels, 5);
        let cfg = AugmentConfig { method: Method::Smote, ..AugmentConfig::default() };
        let out = rebalance(&ds, &cfg, 3).unwrap();
        assert_eq!(out.class_counts(), vec![120; 5]);
        assert_eq!(out.n_original, counts.iter().sum::<usize>());
    }

    #[test]
    fn rebalance_with_remix_mixes_soft_and_one_hot_rows() {
        let ds = imbalanced_blobs(33, 60, 12);
        let cfg = AugmentConfig { method: Method::Remix, ..AugmentConfig::default() };
        let out = rebalance(&ds, &cfg, 4).unwrap();
        assert_eq!(out.class_counts(), vec![60, 60]);
        let Targets::Soft(soft) = &out.targets else { panic!("remix targets are soft") };
        for i in 0..out.n_original {
            let row = soft.row(i);
            assert_eq!(row[ds.labels()[i]], 1.0);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        for i in out.n_original..out.n_samples() {
            assert_eq!(out.hard_labels[i], 1);
        }
    }

    #[test]
    fn rebalance_respects_explicit_targets_and_rejects_shrinking() {
        let ds = imbalanced_blobs(34, 30, 10);
        let cfg = AugmentConfig {
            method: Method::Smote,
            target_counts: Some(vec![30, 25]),
            ..AugmentConfig::default()
        };
        let out = rebalance(&ds, &cfg, 5).unwrap();
        assert_eq!(out.class_counts(), vec![30, 25]);

        let bad = AugmentConfig {
            method: Method::Smote,
            target_counts: Some(vec![20, 10]),
            ..AugmentConfig::default()
        };
        assert!(rebalance(&ds, &bad, 5).is_err());
    }

    #[test]
    fn augmentation_is_deterministic_and_seed_sensitive() {
        let ds = imbalanced_blobs(35, 50, 10);
        for method in [Method::Smote, Method::Adasyn, Method::Remix, Method::Dsm, Method::Eos] {
            let cfg = AugmentConfig { method, ..AugmentConfig::default() };
            let a = rebalance(&ds, &cfg, 7).unwrap();
            let b = rebalance(&ds, &cfg, 7).unwrap();
            assert_eq!(a.features, b.features, "{method:?}");
            assert_eq!(a.hard_labels, b.hard_labels);
            for seed in 8..13 {
                let c = rebalance(&ds, &cfg, seed).unwrap();
                assert_ne!(a.features, c.features, "{method:?} seed {seed}");
            }
        }
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let ok = AugmentConfig::default();
        assert!(ok.validate().is_ok());
        assert!(AugmentConfig { k_neighbors: 0, ..ok.clone() }.validate().is_err());
        assert!(AugmentConfig { mix_alpha: 0.0, ..ok.clone() }.validate().is_err());
        assert!(AugmentConfig { smoothing_eps: 1.0, ..ok.clone() }.validate().is_err());
        assert!(AugmentConfig { smoothing_eps: -0.1, ..ok.clone() }.validate().is_err());
        assert!(AugmentConfig { eos_lambda_max: 0.0, ..ok.clone() }.validate().is_err());
        assert!(AugmentConfig { eos_lambda_max: 1.5, ..ok }.validate().is_err());
    }

    #[test]
    fn batch_csv_carries_provenance_columns() {
        let pts = matrix(vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]]);
        let batch = smote(&pts, 2, 4, 11).unwrap();
        let csv = synthetic_batch_to_csv(&batch);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "f0,f1,label,method,parent_a,parent_b,lambda");
        for line in &lines[1..] {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 7);
            assert_eq!(cols[3], "smote");
            let lambda: f64 = cols[6].parse().unwrap();
            assert!((0.0..1.0).contains(&lambda));
        }
    }

    #[test]
    fn method_names_round_trip_through_serde() {
        for (method, name) in [
            (Method::Base, "\"base\""),
            (Method::Smote, "\"smote\""),
            (Method::Adasyn, "\"adasyn\""),
            (Method::Remix, "\"remix\""),
            (Method::Dsm, "\"dsm\""),
            (Method::Eos, "\"eos\""),
        ] {
            assert_eq!(serde_json::to_string(&method).unwrap(), name);
            let back: Method = serde_json::from_str(name).unwrap();
            assert_eq!(back, method);
        }
    }
}
