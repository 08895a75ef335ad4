//! Soft-margin support vector classification (SMO with second-order working
//! set selection) and the k-fold accuracy protocol.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{split_folds_stratified, FoldSplit};
use crate::error::{Error, Result};
use crate::eval::report::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Linear,
    /// `exp(-gamma |x - y|^2)`; `gamma = None` uses `1 / (dim * Var(X))` of the training data.
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub kernel: Kernel,
    /// Box constraint.
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            kernel: Kernel::default(),
            c: 1.0,
            tolerance: 1e-3,
            max_iterations: 100_000,
        }
    }
}

/// Values of `C` tried by [`best_svm_accuracy`].
pub const SVM_C_GRID: [f64; 3] = [1.0, 10.0, 100.0];

fn resolved_gamma(kernel: Kernel, x: ArrayView2<f64>) -> f64 {
    match kernel {
        Kernel::Linear => 0.0,
        Kernel::Rbf { gamma: Some(g) } => g,
        Kernel::Rbf { gamma: None } => {
            let var = x.var(0.0);
            if var > 0.0 {
                1.0 / (x.ncols() as f64 * var)
            } else {
                1.0
            }
        }
    }
}

fn kernel_matrix(kernel: Kernel, gamma: f64, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let dots = a.dot(&b.t());
    match kernel {
        Kernel::Linear => dots,
        Kernel::Rbf { .. } => {
            let na: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
            let nb: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
            let mut k = dots;
            for ((i, j), v) in k.indexed_iter_mut() {
                let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
                *v = (-gamma * d2).exp();
            }
            k
        }
    }
}

/// Binary machine: `f(x) = sum_i coef_i K(x_i, x) - rho`.
#[derive(Debug, Clone)]
struct BinaryMachine {
    /// Positions of the support vectors among the training rows.
    support: Vec<usize>,
    coef: Vec<f64>,
    rho: f64,
}

/// Solves the dual `min 1/2 a^T Q a - e^T a`, `0 <= a <= C`, `y^T a = 0`
/// with `Q_ij = y_i y_j K_ij`, following the working set selection of
/// Fan, Chen and Lin (2005).
fn smo(k: &Array2<f64>, y: &[f64], c: f64, tolerance: f64, max_iterations: usize) -> BinaryMachine {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let tau = 1e-12;
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    for _ in 0..max_iterations {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] >= g_max {
                g_max = -y[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            g_min = g_min.min(v);
            let b = g_max - v;
            if b > 0.0 {
                let mut a = k[[i, i]] + k[[t, t]] - 2.0 * k[[i, t]];
                if a <= 0.0 {
                    a = tau;
                }
                let score = -b * b / a;
                if score <= best {
                    best = score;
                    j = t;
                }
            }
        }
        if g_max - g_min < tolerance || j == usize::MAX {
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = k[[i, i]] + k[[j, j]] - 2.0 * k[[i, j]];
        if quad <= 0.0 {
            quad = tau;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
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
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * di * k[[t, i]] + y[j] * dj * k[[t, j]]);
        }
    }

    // rho from free vectors, otherwise the midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut free = 0usize;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    let support: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let coef = support.iter().map(|&t| alpha[t] * y[t]).collect();
    BinaryMachine { support, coef, rho }
}

/// One-vs-one multiclass SVM.
#[derive(Debug, Clone)]
pub struct SvmClassifier {
    kernel: Kernel,
    gamma: f64,
    classes: Vec<usize>,
    train: Array2<f64>,
    /// `(a, b, machine)`: positive decision votes for class index `a`.
    machines: Vec<(usize, usize, BinaryMachine)>,
}

impl SvmClassifier {
    /// Fits on the rows of `x`.
    pub fn fit(x: ArrayView2<f64>, labels: &[usize], params: &SvmParams) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(Error::arg(format!("{} rows but {} labels", x.nrows(), labels.len())));
        }
        if !(params.c > 0.0) {
            return Err(Error::arg("SVM C must be positive"));
        }
        let classes: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if classes.len() < 2 {
            return Err(Error::arg("SVM training needs at least two classes"));
        }
        let gamma = resolved_gamma(params.kernel, x);
        let full = kernel_matrix(params.kernel, gamma, x, x);
        let mut machines = Vec::new();
        for a in 0..classes.len() {
            for b in a + 1..classes.len() {
                let rows: Vec<usize> = (0..labels.len())
                    .filter(|&i| labels[i] == classes[a] || labels[i] == classes[b])
                    .collect();
                let y: Vec<f64> = rows.iter().map(|&i| if labels[i] == classes[a] { 1.0 } else { -1.0 }).collect();
                let k = full.select(Axis(0), &rows).select(Axis(1), &rows);
                let mut m = smo(&k, &y, params.c, params.tolerance, params.max_iterations);
                m.support = m.support.iter().map(|&p| rows[p]).collect();
                machines.push((a, b, m));
            }
        }
        Ok(Self {
            kernel: params.kernel,
            gamma,
            classes,
            train: x.to_owned(),
            machines,
        })
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        let k = kernel_matrix(self.kernel, self.gamma, x, self.train.view());
        let mut votes = Array2::<usize>::zeros((x.nrows(), self.classes.len()));
        for (a, b, m) in &self.machines {
            for (r, row) in k.rows().into_iter().enumerate() {
                let f: f64 = m.support.iter().zip(&m.coef).map(|(&s, &c)| c * row[s]).sum::<f64>() - m.rho;
                votes[[r, if f > 0.0 { *a } else { *b }]] += 1;
            }
        }
        votes
            .rows()
            .into_iter()
            .map(|v| {
                // most votes, ties to the smaller class
                let best = v.iter().enumerate().fold((0, 0), |acc, (c, &n)| if n > acc.1 { (c, n) } else { acc });
                self.classes[best.0]
            })
            .collect()
    }
}

/// Rescales all rows by their root-mean-square norm, which leaves angles and
/// rotations untouched.
pub fn rms_normalize(z: ArrayView2<f64>) -> Array2<f64> {
    let rms = (z.iter().map(|v| v * v).sum::<f64>() / z.nrows().max(1) as f64).sqrt();
    if rms > 0.0 {
        z.mapv(|v| v / rms)
    } else {
        z.to_owned()
    }
}

fn accuracy(pred: &[usize], truth: ArrayView1<usize>) -> f64 {
    let hits = pred.iter().zip(truth.iter()).filter(|(p, t)| p == t).count();
    hits as f64 / pred.len().max(1) as f64
}

/// Mean and standard deviation of the per-fold test accuracy; rows of `z` are
/// samples. When a training split misses a class present in the data, the
/// folds are replaced by a stratified split with the same `k`.
pub fn svm_accuracy_kfold(z: ArrayView2<f64>, labels: &[usize], folds: &FoldSplit, params: &SvmParams) -> Result<(f64, f64)> {
    if z.nrows() != labels.len() || folds.assignments.len() != labels.len() {
        return Err(Error::arg("embedding, labels and folds disagree on the sample count"));
    }
    let all: BTreeSet<usize> = labels.iter().copied().collect();
    let misses_class = (0..folds.k).any(|f| {
        let (train, _) = folds.split(f);
        train.iter().map(|&i| labels[i]).collect::<BTreeSet<_>>() != all
    });
    let stratified;
    let folds = if misses_class {
        log::warn!("a training split lacks a class; using stratified folds");
        stratified = split_folds_stratified(labels, folds.k, 0)?;
        &stratified
    } else {
        folds
    };
    let z = rms_normalize(z);
    let y = ndarray::Array1::from(labels.to_vec());
    let mut scores = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let (train, test) = folds.split(f);
        if test.is_empty() {
            continue;
        }
        let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let clf = SvmClassifier::fit(z.select(Axis(0), &train).view(), &train_labels, params)?;
        let pred = clf.predict(z.select(Axis(0), &test).view());
        scores.push(accuracy(&pred, y.select(Axis(0), &test).view()));
    }
    Ok(mean_std(&scores))
}

/// The 10-fold protocol.
pub fn svm_accuracy_10fold(z: ArrayView2<f64>, labels: &[usize], folds: &FoldSplit, params: &SvmParams) -> Result<(f64, f64)> {
    if folds.k != 10 {
        return Err(Error::arg(format!("expected 10 folds, got {}", folds.k)));
    }
    svm_accuracy_kfold(z, labels, folds, params)
}

/// Best mean accuracy over [`SVM_C_GRID`], returned with the chosen `C`.
pub fn best_svm_accuracy(z: ArrayView2<f64>, labels: &[usize], folds: &FoldSplit, kernel: Kernel) -> Result<((f64, f64), f64)> {
    let mut best: Option<((f64, f64), f64)> = None;
    for c in SVM_C_GRID {
        let params = SvmParams {
            kernel,
            c,
            ..Default::default()
        };
        let score = svm_accuracy_kfold(z, labels, folds, &params)?;
        if best.is_none_or(|(b, _)| score.0 > b.0) {
            best = Some((score, c));
        }
    }
    Ok(best.expect("grid is nonempty"))
}
