//! Algebraic comparators: PCA, graph-regularized PCA, multiview CCA (MCCA)
//! and graph-regularized multiview CCA (GMCCA).
//!
//! All four return a common representation `S` (`d x n`) with orthonormal
//! rows. The multiview variants maximize `tr(S C S^T)` with
//!
//! ```text
//! C = sum_m X_m^T (X_m X_m^T + eps I)^{-1} X_m - gamma L
//! ```
//!
//! (written here for feature-major views), whose optimum is spanned by the
//! `d` leading eigenvectors of `C`. Graph PCA replaces the projector sum by
//! the Gram matrix of the concatenated views.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::MultiviewDataset;
use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::linalg::{gram, spd_inverse, top_eigen, top_eigen_dense, SymOperator};

/// Grid searched for the GMCCA graph weight.
pub const GMCCA_GAMMA_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

/// Grid searched for the graph-PCA weight. The Gram matrix of the
/// concatenated views has eigenvalues in the thousands on the digit data, so
/// the useful range sits two decades above the GMCCA one.
pub const GPCA_GAMMA_GRID: [f64; 9] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5];

/// Ridge added to each view Gram matrix before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Ridge {
    /// `eps = factor * trace(G_m) / d_m`.
    Relative(f64),
    Absolute(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-6)
    }
}

impl Ridge {
    fn for_gram(self, g: &Array2<f64>) -> f64 {
        match self {
            Ridge::Relative(f) => f * g.diag().sum() / g.nrows() as f64,
            Ridge::Absolute(e) => e,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearEmbedding {
    /// Common representation, `d x n`, orthonormal rows.
    pub s: Array2<f64>,
    /// Per-view projectors `U_m` (`d x d_m`) for the multiview methods.
    pub projectors: Option<Vec<Array2<f64>>>,
    pub d: usize,
    pub gamma: f64,
    /// Eigenvalues associated with the rows of `s`, descending.
    pub eigenvalues: Array1<f64>,
}

impl LinearEmbedding {
    /// Sample-major copy of the representation (`n x d`).
    pub fn scores(&self) -> Array2<f64> {
        self.s.t().to_owned()
    }
}

/// `x -> sum_k X_k W_k X_k^T x - gamma L x` with `X_k` sample-major.
struct RegularizedOperator<'a> {
    terms: Vec<(ArrayView2<'a, f64>, Option<Array2<f64>>)>,
    laplacian: Option<(&'a Laplacian, f64)>,
    n: usize,
}

impl SymOperator for RegularizedOperator<'_> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        for (xm, w) in &self.terms {
            let proj = xm.t().dot(&x);
            let proj = match w {
                Some(w) => w.dot(&proj),
                None => proj,
            };
            out += &xm.dot(&proj);
        }
        if let Some((lap, gamma)) = self.laplacian {
            if gamma != 0.0 {
                out.scaled_add(-gamma, &lap.matrix.dot(&x));
            }
        }
        out
    }

    fn to_dense(&self) -> Array2<f64> {
        let mut c = Array2::zeros((self.n, self.n));
        for (xm, w) in &self.terms {
            c += &match w {
                Some(w) => xm.dot(&w.dot(&xm.t())),
                None => xm.dot(&xm.t()),
            };
        }
        if let Some((lap, gamma)) = self.laplacian {
            if gamma != 0.0 {
                c.scaled_add(-gamma, &lap.to_dense());
            }
        }
        c
    }
}

/// Flips each column so that its largest-magnitude entry is positive.
fn fix_signs(vectors: &mut Array2<f64>) {
    for mut col in vectors.columns_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

fn check_d(d: usize, n: usize) -> Result<()> {
    if d == 0 || d > n {
        return Err(Error::arg(format!("latent dimension {d} must lie in 1..={n}")));
    }
    Ok(())
}

fn check_laplacian(ds: &MultiviewDataset, lap: &Laplacian, gamma: f64) -> Result<()> {
    if lap.n() != ds.n() {
        return Err(Error::arg(format!("Laplacian has {} nodes, dataset {}", lap.n(), ds.n())));
    }
    if !(gamma >= 0.0) {
        return Err(Error::arg(format!("gamma must be nonnegative, got {gamma}")));
    }
    Ok(())
}

fn solve(op: &RegularizedOperator, d: usize, gamma: f64) -> Result<LinearEmbedding> {
    let (values, mut vectors) = top_eigen(op, d, 0)?;
    fix_signs(&mut vectors);
    Ok(LinearEmbedding {
        s: vectors.t().to_owned(),
        projectors: None,
        d,
        gamma,
        eigenvalues: values,
    })
}

/// PCA of the concatenated views. Scores are normalized to unit length so that
/// the rows of `S` are orthonormal.
pub fn pca(ds: &MultiviewDataset, d: usize) -> Result<LinearEmbedding> {
    let x = ds.concat_all();
    if d == 0 || d > x.ncols() {
        return Err(Error::arg(format!(
            "latent dimension {d} exceeds the {} concatenated features",
            x.ncols()
        )));
    }
    check_d(d, ds.n())?;
    let (values, components) = top_eigen_dense(&gram(x.view()), d)?;
    let mut scores = x.dot(&components);
    for mut col in scores.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    fix_signs(&mut scores);
    Ok(LinearEmbedding {
        s: scores.t().to_owned(),
        projectors: None,
        d,
        gamma: 0.0,
        eigenvalues: values,
    })
}

/// Leading eigenvectors of `X X^T - gamma L` (sample-major `X`, all views
/// concatenated).
pub fn graph_pca(ds: &MultiviewDataset, lap: &Laplacian, gamma: f64, d: usize) -> Result<LinearEmbedding> {
    check_d(d, ds.n())?;
    check_laplacian(ds, lap, gamma)?;
    let x = ds.concat_all();
    let op = RegularizedOperator {
        terms: vec![(x.view(), None)],
        laplacian: Some((lap, gamma)),
        n: ds.n(),
    };
    solve(&op, d, gamma)
}

fn view_inverses(ds: &MultiviewDataset, eps: Ridge) -> Result<Vec<Array2<f64>>> {
    ds.views
        .iter()
        .map(|x| {
            let mut g = gram(x.view());
            let ridge = eps.for_gram(&g);
            g.diag_mut().mapv_inplace(|v| v + ridge);
            spd_inverse(&g)
        })
        .collect()
}

fn multiview(
    ds: &MultiviewDataset,
    lap: Option<&Laplacian>,
    gamma: f64,
    d: usize,
    eps: Ridge,
) -> Result<LinearEmbedding> {
    if ds.n_views() < 2 {
        return Err(Error::arg("multiview CCA needs at least two views"));
    }
    check_d(d, ds.n())?;
    let inverses = view_inverses(ds, eps)?;
    let op = RegularizedOperator {
        terms: ds
            .views
            .iter()
            .zip(&inverses)
            .map(|(x, w)| (x.view(), Some(w.clone())))
            .collect(),
        laplacian: lap.map(|l| (l, gamma)),
        n: ds.n(),
    };
    let mut emb = solve(&op, d, gamma)?;
    // U_m = S X_m (X_m^T X_m + eps I)^{-1}
    let projectors = ds
        .views
        .iter()
        .zip(&inverses)
        .map(|(x, w)| emb.s.dot(x).dot(w))
        .collect();
    emb.projectors = Some(projectors);
    Ok(emb)
}

pub fn mcca(ds: &MultiviewDataset, d: usize, eps: Ridge) -> Result<LinearEmbedding> {
    multiview(ds, None, 0.0, d, eps)
}

pub fn gmcca(ds: &MultiviewDataset, lap: &Laplacian, gamma: f64, d: usize, eps: Ridge) -> Result<LinearEmbedding> {
    check_laplacian(ds, lap, gamma)?;
    multiview(ds, Some(lap), gamma, d, eps)
}

/// Value of `sum_m ||U_m X_m - S||^2 + gamma tr(S L S^T)` with each `U_m`
/// set to its ridge least-squares optimum for the given `S`.
pub fn regularized_objective(
    ds: &MultiviewDataset,
    lap: Option<&Laplacian>,
    gamma: f64,
    s: ArrayView2<f64>,
    eps: Ridge,
) -> Result<f64> {
    let inverses = view_inverses(ds, eps)?;
    let mut total = 0.0;
    for (x, w) in ds.views.iter().zip(&inverses) {
        let u = s.dot(x).dot(w);
        let fit = u.dot(&x.t());
        total += (&fit - &s).mapv(|v| v * v).sum();
    }
    if let Some(lap) = lap {
        total += gamma * lap.smoothness(s);
    }
    Ok(total)
}

/// Mean over the embedding rows of the within-group variance, normalized by
/// the total variance; groups are given per sample.
pub fn within_group_variance_ratio(s: ArrayView2<f64>, groups: &[usize]) -> f64 {
    let n = s.ncols() as f64;
    let mean = s.mean_axis(Axis(1)).expect("non-empty");
    let total: f64 = s
        .axis_iter(Axis(1))
        .map(|c| (&c - &mean).mapv(|v| v * v).sum())
        .sum::<f64>()
        / n;
    let mut sums = std::collections::BTreeMap::<usize, (Array1<f64>, usize)>::new();
    for (c, &g) in s.axis_iter(Axis(1)).zip(groups) {
        let e = sums.entry(g).or_insert_with(|| (Array1::zeros(s.nrows()), 0));
        e.0 += &c;
        e.1 += 1;
    }
    let within: f64 = s
        .axis_iter(Axis(1))
        .zip(groups)
        .map(|(c, g)| {
            let (sum, count) = &sums[g];
            (&c - &(sum / *count as f64)).mapv(|v| v * v).sum()
        })
        .sum::<f64>()
        / n;
    if total > 0.0 {
        within / total
    } else {
        0.0
    }
}
