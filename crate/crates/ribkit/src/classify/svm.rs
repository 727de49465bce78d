//! Soft-margin kernel SVM trained by sequential optimization of the
//! maximal violating pair, with train-set feature standardization baked
//! into the model.
//!
//! The solver is deliberately plain: dense kernel matrix, first-order
//! working-set selection, first-index tie-breaking — fully deterministic
//! for a given input order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dual feasibility gap at which training stops.
const EPS: f64 = 1e-3;
/// Guard for non-positive-definite pair curvature.
const TAU: f64 = 1e-12;
/// Hard cap on optimization steps.
const MAX_STEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Polynomial degree; ignored for linear.
    pub degree: u32,
    /// Polynomial offset; ignored for linear.
    pub coef0: f64,
    /// Inner-product scale; `None` resolves to 1/num_features at training.
    pub gamma: Option<f64>,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            degree: 1,
            coef0: 0.0,
            gamma: None,
        }
    }

    pub fn polynomial(degree: u32) -> Self {
        Self {
            kind: KernelKind::Polynomial,
            degree,
            coef0: 1.0,
            gamma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::InvalidRecord("kernel degree must be >= 1".into()));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            KernelKind::Linear => "linear",
            KernelKind::Polynomial => "polynomial",
        }
    }

    fn eval(&self, gamma: f64, x: &[f64], y: &[f64]) -> f64 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        match self.kind {
            KernelKind::Linear => dot,
            KernelKind::Polynomial => (gamma * dot + self.coef0).powi(self.degree as i32),
        }
    }
}

/// Trained classifier. Prediction applies the stored standardization, so
/// raw feature rows go in on both ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    kernel: KernelSpec,
    gamma: f64,
    /// Standardized support vectors.
    support: Vec<Vec<f64>>,
    /// y_i · α_i per support vector.
    coef: Vec<f64>,
    /// Decision offset: f(x) = Σ coef·K(sv, x) − rho.
    rho: f64,
    col_mean: Vec<f64>,
    col_std: Vec<f64>,
    /// Final dual feasibility gap (≤ EPS unless the step cap was hit).
    pub gap: f64,
}

impl SvmModel {
    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.col_mean)
            .zip(&self.col_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Signed distance-like score; positive means the positive class.
    pub fn decision(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.col_mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.col_mean.len(),
                got: row.len(),
            });
        }
        let z = self.standardize(row);
        let sum: f64 = self
            .support
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * self.kernel.eval(self.gamma, sv, &z))
            .sum();
        Ok(sum - self.rho)
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<bool>> {
        rows.iter().map(|r| Ok(self.decision(r)? > 0.0)).collect()
    }

    pub fn num_support(&self) -> usize {
        self.support.len()
    }
}

/// Trains a C-SVM on raw feature rows; `labels[i]` true is the positive
/// class. Columns are standardized with train statistics only.
pub fn train_svm(
    rows: &[Vec<f64>],
    labels: &[bool],
    kernel: KernelSpec,
    c: f64,
) -> Result<SvmModel> {
    kernel.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            pred: rows.len(),
            truth: labels.len(),
        });
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) || dim == 0 {
        return Err(Error::DimensionMismatch {
            expected: dim.max(1),
            got: rows.iter().map(|r| r.len()).find(|&l| l != dim).unwrap_or(0),
        });
    }

    // train-only standardization; constant columns collapse to zero
    let n = rows.len();
    let mut col_mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in col_mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in col_mean.iter_mut() {
        *m /= n as f64;
    }
    let mut col_std = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in col_std.iter_mut().zip(r).zip(&col_mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in col_std.iter_mut() {
        *s = (*s / n as f64).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&col_mean)
                .zip(&col_std)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let gamma = kernel.gamma.unwrap_or(1.0 / dim as f64);

    // dense kernel matrix: cohorts here are hundreds of rows, not millions
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| kernel.eval(gamma, &x[i], &x[j])).collect())
        .collect();

    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n]; // ∇ of ½αᵀQα − Σα at α = 0
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];

    let mut gap = f64::INFINITY;
    for _ in 0..MAX_STEPS {
        // maximal violating pair
        let mut i_up = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j_low = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] < 0.0 && alpha[t] < c) || (y[t] > 0.0 && alpha[t] > 0.0);
            if in_up && v > g_max {
                g_max = v;
                i_up = t;
            }
            if in_low && v < g_min {
                g_min = v;
                j_low = t;
            }
        }
        gap = g_max - g_min;
        if gap <= EPS || i_up == usize::MAX || j_low == usize::MAX {
            break;
        }
        let (i, j) = (i_up, j_low);

        let old_ai = alpha[i];
        let old_aj = alpha[j];
        if y[i] != y[j] {
            // pair curvature in label-signed space: Q_ij = y_i y_j K_ij = −K_ij here
            let quad = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            } else if diff <= 0.0 && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let dai = alpha[i] - old_ai;
        let daj = alpha[j] - old_aj;
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * dai + q(j, t) * daj;
        }
    }

    // offset from the KKT conditions of the converged solution
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (upper + lower) / 2.0
    };

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support.push(x[t].clone());
            coef.push(y[t] * alpha[t]);
        }
    }
    Ok(SvmModel {
        kernel,
        gamma,
        support,
        coef,
        rho,
        col_mean,
        col_std,
        gap,
    })
}

/// F1 with `true` as the positive class; 0 when no positives exist on
/// either side.
pub fn f1_score(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_separable_points() {
        let rows = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
        let labels = vec![false, true];
        let m = train_svm(&rows, &labels, KernelSpec::linear(), 1.0).unwrap();
        assert_eq!(m.predict(&rows).unwrap(), labels);
        assert!(m.gap <= EPS);
        // midpoint sits on the boundary
        assert!(m.decision(&[0.0, 0.0]).unwrap().abs() < 1e-6);
    }

    #[test]
    fn xor_needs_the_polynomial_kernel() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let labels = vec![false, false, true, true];
        let poly = train_svm(&rows, &labels, KernelSpec::polynomial(2), 1e6).unwrap();
        let acc = |m: &SvmModel| {
            m.predict(&rows)
                .unwrap()
                .iter()
                .zip(&labels)
                .filter(|(p, t)| p == t)
                .count()
        };
        assert_eq!(acc(&poly), 4);
        let lin = train_svm(&rows, &labels, KernelSpec::linear(), 1e6).unwrap();
        assert!(acc(&lin) <= 3, "XOR is not linearly separable");
    }

    #[test]
    fn well_separated_blobs_reach_high_f1() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let stump = i % 2 == 0;
            let center = if stump { 6.0 } else { 0.0 };
            rows.push(vec![
                center + rng.gen_range(-1.0..1.0),
                center + rng.gen_range(-1.0..1.0),
            ]);
            labels.push(stump);
        }
        let train_n = 140;
        let m = train_svm(&rows[..train_n], &labels[..train_n], KernelSpec::linear(), 1.0)
            .unwrap();
        let pred = m.predict(&rows[train_n..]).unwrap();
        let f1 = f1_score(&pred, &labels[train_n..]).unwrap();
        assert!(f1 >= 0.98, "f1 {f1}");
    }

    #[test]
    fn degree_one_polynomial_matches_linear_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + 0.5 * r[1] > 0.1).collect();
        let lin = train_svm(&rows, &labels, KernelSpec::linear(), 1.0).unwrap();
        let mut poly1 = KernelSpec::polynomial(1);
        poly1.coef0 = 0.0;
        poly1.gamma = Some(1.0);
        let p = train_svm(&rows, &labels, poly1, 1.0).unwrap();
        for r in &rows {
            let d = (lin.decision(r).unwrap() - p.decision(r).unwrap()).abs();
            assert!(d <= 5e-3, "decision mismatch {d}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        let a = train_svm(&rows, &labels, KernelSpec::polynomial(5), 1.0).unwrap();
        let b = train_svm(&rows, &labels, KernelSpec::polynomial(5), 1.0).unwrap();
        for r in &rows {
            assert_eq!(a.decision(r).unwrap(), b.decision(r).unwrap());
        }
    }

    #[test]
    fn single_class_and_dimension_errors() {
        let rows = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            train_svm(&rows, &[true, true], KernelSpec::linear(), 1.0),
            Err(Error::SingleClass)
        ));
        let m = train_svm(&rows, &[true, false], KernelSpec::linear(), 1.0).unwrap();
        assert!(matches!(
            m.decision(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn f1_arithmetic() {
        let perfect = vec![true, false, true];
        assert_eq!(f1_score(&perfect, &perfect).unwrap(), 1.0);
        assert_eq!(
            f1_score(&[false, false], &[true, false]).unwrap(),
            0.0
        );
        // tp=8, fp=2, fn=2 → 16/20
        let pred = [vec![true; 8], vec![true; 2], vec![false; 2]].concat();
        let truth = [vec![true; 8], vec![false; 2], vec![true; 2]].concat();
        assert!((f1_score(&pred, &truth).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn standardization_uses_train_statistics_only() {
        // shifted test rows must be judged by train-frame coordinates
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let labels = vec![false, false, true, true];
        let m = train_svm(&rows, &labels, KernelSpec::linear(), 10.0).unwrap();
        // 100 is far on the positive side in train coordinates
        assert!(m.decision(&[100.0]).unwrap() > 0.0);
        assert!(m.decision(&[-100.0]).unwrap() < 0.0);
    }
}
