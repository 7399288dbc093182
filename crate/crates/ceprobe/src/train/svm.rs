//! Soft-margin binary SVM with an RBF kernel, trained by sequential
//! minimal optimization.
//!
//! Working-pair selection: the maximal KKT violator paired with the point
//! of maximal |E_i - E_j|, with deterministic fallbacks so the solve is
//! reproducible. The error cache is exact (every pair update refreshes all
//! entries) and is recomputed from scratch before the solver reports
//! convergence.

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::scalar::Scalar;

use super::{resolve_gamma, SvmModel, SvmReport, TrainConfig};

/// Label and raw decision value (sum of CE plus bias) for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmPrediction<F> {
    pub label: usize,
    pub decision_value: F,
}

/// exp(-gamma * ||a - b||^2), unchecked. Shared by training, prediction,
/// and decomposition so all three produce bit-identical kernel values.
pub(crate) fn rbf_raw<F: Scalar>(a: &[F], b: &[F], gamma: F) -> F {
    (-gamma * sq_dist(a, b)).exp()
}

/// RBF kernel with input validation; the value lies in (0, 1].
pub fn rbf_kernel<F: Scalar>(a: &[F], b: &[F], gamma: F) -> Result<F> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "kernel arguments have dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(gamma > F::zero()) {
        return Err(Error::InvalidConfig("gamma must be > 0".into()));
    }
    Ok(rbf_raw(a, b, gamma))
}

/// Lazily filled kernel row cache. Memory grows to one full row per touched
/// training point; intended for desk-scale problems.
struct KernelCache<'a, F: Scalar> {
    x: &'a Matrix<F>,
    gamma: F,
    rows: Vec<Option<Vec<F>>>,
}

impl<'a, F: Scalar> KernelCache<'a, F> {
    fn new(x: &'a Matrix<F>, gamma: F) -> Self {
        KernelCache { x, gamma, rows: vec![None; x.n_rows()] }
    }

    fn row(&mut self, i: usize) -> &[F] {
        if self.rows[i].is_none() {
            let xi = self.x.row(i);
            let row: Vec<F> =
                (0..self.x.n_rows()).map(|k| rbf_raw(xi, self.x.row(k), self.gamma)).collect();
            self.rows[i] = Some(row);
        }
        self.rows[i].as_deref().unwrap()
    }

    fn row_into(&mut self, i: usize, out: &mut Vec<F>) {
        out.clear();
        let row = self.row(i);
        out.extend_from_slice(row);
    }
}

struct Smo<'a, F: Scalar> {
    cache: KernelCache<'a, F>,
    y: Vec<F>,
    alpha: Vec<F>,
    b: F,
    /// E_k = f(x_k) - y_k under the current parameters.
    err: Vec<F>,
    c: F,
    tol: F,
    budget: usize,
    pair_updates: usize,
    ri: Vec<F>,
    rj: Vec<F>,
}

impl<'a, F: Scalar> Smo<'a, F> {
    fn new(x: &'a Matrix<F>, y: Vec<F>, gamma: F, cfg: &TrainConfig) -> Self {
        let n = y.len();
        let err = y.iter().map(|&yi| -yi).collect();
        Smo {
            cache: KernelCache::new(x, gamma),
            y,
            alpha: vec![F::zero(); n],
            b: F::zero(),
            err,
            c: F::from_f64_lossy(cfg.svm_c),
            tol: F::from_f64_lossy(cfg.svm_tolerance),
            budget: cfg.svm_max_pair_updates,
            pair_updates: 0,
            ri: Vec::new(),
            rj: Vec::new(),
        }
    }

    /// KKT violation of point i: how far y_i·E_i sits outside the bound
    /// allowed by its alpha.
    fn violation(&self, i: usize) -> F {
        let r = self.y[i] * self.err[i];
        let mut v = F::zero();
        if self.alpha[i] < self.c {
            v = v.max(-r);
        }
        if self.alpha[i] > F::zero() {
            v = v.max(r);
        }
        v
    }

    fn max_violation(&self) -> (F, usize) {
        let mut best = (F::zero(), 0);
        for i in 0..self.y.len() {
            let v = self.violation(i);
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }

    /// Joint optimization of the pair (i, j). Returns false when the pair
    /// admits no productive step.
    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let mut ri = std::mem::take(&mut self.ri);
        let mut rj = std::mem::take(&mut self.rj);
        self.cache.row_into(i, &mut ri);
        self.cache.row_into(j, &mut rj);
        let stepped = self.take_step_with_rows(i, j, &ri, &rj);
        self.ri = ri;
        self.rj = rj;
        stepped
    }

    fn take_step_with_rows(&mut self, i: usize, j: usize, ri: &[F], rj: &[F]) -> bool {
        let (a_i, a_j) = (self.alpha[i], self.alpha[j]);
        let (y_i, y_j) = (self.y[i], self.y[j]);
        let (e_i, e_j) = (self.err[i], self.err[j]);
        let s = y_i * y_j;

        let (lo, hi) = if s < F::zero() {
            ((a_j - a_i).max(F::zero()), (self.c + a_j - a_i).min(self.c))
        } else {
            ((a_i + a_j - self.c).max(F::zero()), (a_i + a_j).min(self.c))
        };
        if lo >= hi {
            return false;
        }

        let (k_ii, k_jj, k_ij) = (ri[i], rj[j], ri[j]);
        let eta = k_ii + k_jj - k_ij - k_ij;
        let a_j_new = if eta > F::zero() {
            (a_j + y_j * (e_i - e_j) / eta).max(lo).min(hi)
        } else {
            // Flat direction: compare the dual objective at both segment
            // ends directly.
            let v_i = e_i + y_i - self.b - a_i * y_i * k_ii - a_j * y_j * k_ij;
            let v_j = e_j + y_j - self.b - a_i * y_i * k_ij - a_j * y_j * k_jj;
            let half = F::from_f64_lossy(0.5);
            let psi = |a2: F| {
                let a1 = a_i + s * (a_j - a2);
                half * k_ii * a1 * a1
                    + half * k_jj * a2 * a2
                    + s * k_ij * a1 * a2
                    + y_i * a1 * v_i
                    + y_j * a2 * v_j
                    - a1
                    - a2
            };
            let (pl, ph) = (psi(lo), psi(hi));
            let eps = F::from_f64_lossy(1e-12);
            if pl < ph - eps {
                lo
            } else if ph < pl - eps {
                hi
            } else {
                return false;
            }
        };

        let step_eps = F::from_f64_lossy(1e-12);
        if (a_j_new - a_j).abs() < step_eps * (a_j_new + a_j + step_eps) {
            return false;
        }
        let a_i_new = (a_i + s * (a_j - a_j_new)).max(F::zero()).min(self.c);

        // signed coefficient deltas
        let d_i = (a_i_new - a_i) * y_i;
        let d_j = (a_j_new - a_j) * y_j;
        let b1 = self.b - e_i - d_i * k_ii - d_j * k_ij;
        let b2 = self.b - e_j - d_i * k_ij - d_j * k_jj;
        let b_new = if a_i_new > F::zero() && a_i_new < self.c {
            b1
        } else if a_j_new > F::zero() && a_j_new < self.c {
            b2
        } else {
            (b1 + b2) * F::from_f64_lossy(0.5)
        };
        let db = b_new - self.b;
        for k in 0..self.err.len() {
            self.err[k] += d_i * ri[k] + d_j * rj[k] + db;
        }
        self.alpha[i] = a_i_new;
        self.alpha[j] = a_j_new;
        self.b = b_new;
        self.pair_updates += 1;
        true
    }

    /// Second-index choice for violator i: maximal |E_i - E_j| first, then
    /// every other index ascending.
    fn step_from(&mut self, i: usize) -> bool {
        let n = self.y.len();
        let e_i = self.err[i];
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            let ka = (e_i - self.err[a]).abs();
            let kb = (e_i - self.err[b]).abs();
            kb.partial_cmp(&ka).unwrap().then(a.cmp(&b))
        });
        for j in order {
            if self.take_step(i, j) {
                return true;
            }
        }
        false
    }

    /// Rebuilds the error cache exactly from the current alphas.
    fn recompute_errors(&mut self) {
        let n = self.y.len();
        let mut f = vec![self.b; n];
        let mut buf = std::mem::take(&mut self.ri);
        for j in 0..n {
            if self.alpha[j] > F::zero() {
                let coeff = self.alpha[j] * self.y[j];
                self.cache.row_into(j, &mut buf);
                for k in 0..n {
                    f[k] += coeff * buf[k];
                }
            }
        }
        self.ri = buf;
        for k in 0..n {
            self.err[k] = f[k] - self.y[k];
        }
    }

    /// Dual objective sum(alpha) - 1/2 sum_i alpha_i y_i (f_i - b), valid
    /// right after recompute_errors.
    fn dual_objective(&self) -> F {
        let half = F::from_f64_lossy(0.5);
        let mut obj = F::zero();
        for i in 0..self.y.len() {
            obj += self.alpha[i];
            obj -= half * self.alpha[i] * self.y[i] * (self.err[i] + self.y[i] - self.b);
        }
        obj
    }

    fn solve(&mut self) -> Result<F> {
        let mut refreshes = 0usize;
        loop {
            let (vmax, top) = self.max_violation();
            if vmax <= self.tol {
                // confirm against an exactly rebuilt cache before accepting
                self.recompute_errors();
                let (v_exact, _) = self.max_violation();
                if v_exact <= self.tol {
                    return Ok(v_exact);
                }
                refreshes += 1;
                if refreshes > 50 {
                    return Err(Error::Training(format!(
                        "smo failed to settle; max KKT violation {v_exact} after refresh"
                    )));
                }
                continue;
            }
            if self.pair_updates >= self.budget {
                return Err(Error::Training(format!(
                    "smo exhausted {} pair updates; max KKT violation {vmax}",
                    self.budget
                )));
            }
            if self.step_from(top) {
                continue;
            }
            // Top violator admits no step; try remaining violators in
            // descending violation order.
            let n = self.y.len();
            let mut order: Vec<usize> = (0..n).filter(|&i| i != top).collect();
            order.sort_by(|&a, &b| {
                self.violation(b).partial_cmp(&self.violation(a)).unwrap().then(a.cmp(&b))
            });
            let mut progressed = false;
            for i in order {
                if self.violation(i) <= self.tol {
                    break;
                }
                if self.step_from(i) {
                    progressed = true;
                    break;
                }
            }
            if !progressed {
                self.recompute_errors();
                let (v_exact, _) = self.max_violation();
                if v_exact <= self.tol {
                    return Ok(v_exact);
                }
                refreshes += 1;
                if refreshes > 50 {
                    return Err(Error::Training(format!(
                        "smo stalled; max KKT violation {v_exact}"
                    )));
                }
            }
        }
    }
}

/// Trains a soft-margin RBF SVM on hard binary labels.
pub fn train_svm<F: Scalar>(
    features: &Matrix<F>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<SvmModel<F>> {
    cfg.validate()?;
    let n = features.n_rows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} feature rows but {} labels", labels.len())));
    }
    if n < 2 {
        return Err(Error::Training("need at least 2 training samples".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Training(format!("svm needs binary labels, got class id {bad}")));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::Training("single-class training set".into()));
    }

    let gamma = F::from_f64_lossy(resolve_gamma(cfg.svm_gamma, features)?);
    let y: Vec<F> = labels.iter().map(|&l| if l == 1 { F::one() } else { -F::one() }).collect();

    let mut smo = Smo::new(features, y, gamma, cfg);
    let final_violation = smo.solve()?;
    smo.recompute_errors();
    let dual_objective = smo.dual_objective();

    let sv_floor = F::from_f64_lossy(1e-12);
    let kept: Vec<usize> = (0..n).filter(|&i| smo.alpha[i] > sv_floor).collect();
    if kept.is_empty() {
        return Err(Error::Training("solver retained no support vectors".into()));
    }
    let dual_coefficients: Vec<F> = kept.iter().map(|&i| smo.alpha[i] * smo.y[i]).collect();

    Ok(SvmModel {
        support_vectors: features.select(&kept),
        dual_coefficients,
        bias: smo.b,
        gamma,
        config: cfg.clone(),
        report: SvmReport {
            pair_updates: smo.pair_updates,
            max_kkt_violation: final_violation.to_f64().unwrap_or(f64::NAN),
            dual_objective: dual_objective.to_f64().unwrap_or(f64::NAN),
            converged: true,
        },
    })
}

/// Decision value and label for one input: sum of signed kernel
/// contributions plus bias; label 1 iff the value is strictly positive.
pub fn predict_svm<F: Scalar>(model: &SvmModel<F>, x: &[F]) -> Result<SvmPrediction<F>> {
    if x.len() != model.feature_dim() {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.len(),
            model.feature_dim()
        )));
    }
    let mut acc = F::zero();
    for i in 0..model.n_support_vectors() {
        acc += model.dual_coefficients[i] * rbf_raw(model.support_vectors.row(i), x, model.gamma);
    }
    let decision_value = acc + model.bias;
    let label = usize::from(decision_value > F::zero());
    Ok(SvmPrediction { label, decision_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::train::GammaSpec;

    fn manual_model(sv: Vec<Vec<f64>>, coeffs: Vec<f64>, b: f64, gamma: f64) -> SvmModel<f64> {
        SvmModel {
            support_vectors: Matrix::from_rows(sv).unwrap(),
            dual_coefficients: coeffs,
            bias: b,
            gamma,
            config: TrainConfig::default(),
            report: SvmReport::default(),
        }
    }

    fn blob_problem(seed: u64, sep: f64, n_per_class: usize) -> (Matrix<f64>, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2usize {
            let shift = sep * c as f64;
            for _ in 0..n_per_class {
                rows.push(vec![
                    shift + rng.standard_normal::<f64>() * 0.4,
                    shift + rng.standard_normal::<f64>() * 0.4,
                ]);
                labels.push(c);
            }
        }
        (Matrix::from_rows(rows).unwrap(), labels)
    }

    #[test]
    fn kernel_identities() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(rbf_kernel(&x, &x, 2.0).unwrap(), 1.0);
        let v = rbf_kernel(&[0.0], &[1.0], 1.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        let near = rbf_kernel(&[0.0], &[1.0], 0.5).unwrap();
        let far = rbf_kernel(&[0.0], &[1.0], 5.0).unwrap();
        assert!(far < near && far > 0.0);
        assert!(rbf_kernel(&[0.0], &[1.0, 2.0], 1.0).is_err());
        assert!(rbf_kernel(&[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn two_point_problem_is_symmetric() {
        let x = Matrix::from_rows(vec![vec![0.0_f64, 0.0], vec![2.0, 2.0]]).unwrap();
        let mut cfg = TrainConfig::default();
        cfg.svm_gamma = GammaSpec::Explicit(0.5);
        let model = train_svm(&x, &[0, 1], &cfg).unwrap();
        assert_eq!(model.n_support_vectors(), 2);
        let mid = predict_svm(&model, &[1.0, 1.0]).unwrap();
        assert!(mid.decision_value.abs() <= 1e-9, "midpoint decision {}", mid.decision_value);
        assert_eq!(predict_svm(&model, &[0.0, 0.0]).unwrap().label, 0);
        assert_eq!(predict_svm(&model, &[2.0, 2.0]).unwrap().label, 1);
    }

    #[test]
    fn separable_clusters_classify_perfectly() {
        let (x, labels) = blob_problem(5, 6.0, 20);
        let model = train_svm(&x, &labels, &TrainConfig::default()).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            assert_eq!(predict_svm(&model, x.row(i)).unwrap().label, l);
        }
    }

    #[test]
    fn solution_respects_dual_constraints() {
        let (x, labels) = blob_problem(8, 2.0, 25);
        let cfg = TrainConfig::default();
        let model = train_svm(&x, &labels, &cfg).unwrap();
        let coeff_sum: f64 = model.dual_coefficients.iter().copied().sum();
        assert!(coeff_sum.abs() <= 1e-6, "sum of signed coefficients {coeff_sum}");
        assert!(model
            .dual_coefficients
            .iter()
            .all(|a| a.abs() <= cfg.svm_c + 1e-9));
        assert!(model.report.max_kkt_violation <= cfg.svm_tolerance);
        assert!(model.report.converged);
    }

    #[test]
    fn negating_coefficients_and_bias_flips_labels() {
        let (x, labels) = blob_problem(13, 3.0, 15);
        let model = train_svm(&x, &labels, &TrainConfig::default()).unwrap();
        let mut flipped = model.clone();
        for c in &mut flipped.dual_coefficients {
            *c = -*c;
        }
        flipped.bias = -flipped.bias;
        for i in 0..x.n_rows() {
            let p = predict_svm(&model, x.row(i)).unwrap();
            let q = predict_svm(&flipped, x.row(i)).unwrap();
            assert_eq!(q.decision_value, -p.decision_value);
            if p.decision_value != 0.0 {
                assert_ne!(p.label, q.label);
            }
        }
    }

    #[test]
    fn single_support_vector_arithmetic() {
        let model = manual_model(vec![vec![1.0, 2.0]], vec![1.0], 0.0, 1.0);
        let p = predict_svm(&model, &[1.0, 2.0]).unwrap();
        assert_eq!(p.decision_value, 1.0);
        assert_eq!(p.label, 1);
    }

    #[test]
    fn decision_of_exactly_zero_is_label_zero() {
        let model = manual_model(vec![vec![0.5]], vec![1.0], -1.0, 1.0);
        let p = predict_svm(&model, &[0.5]).unwrap();
        assert_eq!(p.decision_value, 0.0);
        assert_eq!(p.label, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, labels) = blob_problem(21, 1.5, 30);
        let a = train_svm(&x, &labels, &TrainConfig::default()).unwrap();
        let b = train_svm(&x, &labels, &TrainConfig::default()).unwrap();
        assert_eq!(a.dual_coefficients, b.dual_coefficients);
        assert_eq!(a.bias, b.bias);
        assert_eq!(a.support_vectors, b.support_vectors);
    }

    #[test]
    fn input_validation_errors() {
        let x = Matrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(train_svm(&x, &[0, 2], &TrainConfig::default()).is_err());
        assert!(train_svm(&x, &[1, 1], &TrainConfig::default()).is_err());
        let model = manual_model(vec![vec![0.0, 1.0]], vec![1.0], 0.0, 1.0);
        assert!(predict_svm(&model, &[1.0]).is_err());
    }
}
