//! Laplacian, propagation operator, Krylov feature stacks and batch subgraphs.

use std::collections::HashMap;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Adjacency;
use crate::error::{Error, Result};
use crate::real::Real;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<F> {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<F>,
}

impl<F: Real> SparseMatrix<F> {
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![F::one(); n],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn cast<G: Real>(&self) -> SparseMatrix<G> {
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| G::of(v.as_f64())).collect(),
        }
    }

    pub fn to_dense(&self) -> Array2<F> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out[[i, self.indices[p]]] += self.values[p];
            }
        }
        out
    }

    /// `self * x`.
    pub fn dot(&self, x: &ArrayView2<F>) -> Array2<F> {
        assert_eq!(self.n_cols, x.nrows(), "sparse product dimension mismatch");
        let mut out = Array2::zeros((self.n_rows, x.ncols()));
        for i in 0..self.n_rows {
            let mut row = out.row_mut(i);
            for p in self.indptr[i]..self.indptr[i + 1] {
                row.scaled_add(self.values[p], &x.row(self.indices[p]));
            }
        }
        out
    }

    /// `self^T * x`.
    pub fn t_dot(&self, x: &ArrayView2<F>) -> Array2<F> {
        assert_eq!(self.n_rows, x.nrows(), "sparse product dimension mismatch");
        let mut out = Array2::zeros((self.n_cols, x.ncols()));
        for i in 0..self.n_rows {
            let src = x.row(i);
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.row_mut(self.indices[p]).scaled_add(self.values[p], &src);
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let d = self.to_dense();
        d == d.t()
    }
}

/// `L = D - A`, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub matrix: SparseMatrix<f64>,
}

impl Laplacian {
    pub fn to_dense(&self) -> Array2<f64> {
        self.matrix.to_dense()
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows
    }

    /// `tr(S L S^T)` for a `d x n` matrix `S`.
    pub fn smoothness(&self, s: ArrayView2<f64>) -> f64 {
        let ls = self.matrix.dot(&s.t());
        (&s.t() * &ls).sum()
    }
}

pub fn laplacian(a: &Adjacency) -> Laplacian {
    let n = a.n();
    let degrees = a.degrees();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for (i, &deg) in degrees.iter().enumerate() {
        let mut diag_done = false;
        for (j, w) in a.row(i) {
            if j > i && !diag_done {
                indices.push(i);
                values.push(deg);
                diag_done = true;
            }
            if j == i {
                indices.push(i);
                values.push(deg - w);
                diag_done = true;
            } else {
                indices.push(j);
                values.push(-w);
            }
        }
        if !diag_done {
            indices.push(i);
            values.push(deg);
        }
        indptr.push(indices.len());
    }
    Laplacian {
        matrix: SparseMatrix {
            n_rows: n,
            n_cols: n,
            indptr,
            indices,
            values,
        },
    }
}

/// Normalization applied to the adjacency before feature propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Propagation {
    /// The adjacency as is.
    None,
    /// `D^{-1/2} A D^{-1/2}`.
    #[default]
    Sym,
    /// `D^{-1} A`.
    Rw,
}

/// Propagation matrix of a normalized (unit-diagonal) adjacency.
pub fn propagation_operator(a: &Adjacency, kind: Propagation) -> SparseMatrix<f64> {
    let n = a.n();
    let degrees = a.degrees();
    let (indptr, indices, weights) = a.csr_parts();
    let inv = |d: f64| if d > 0.0 { 1.0 / d } else { 0.0 };
    let mut values = Vec::with_capacity(weights.len());
    for i in 0..n {
        for p in indptr[i]..indptr[i + 1] {
            let j = indices[p];
            let w = weights[p];
            values.push(match kind {
                Propagation::None => w,
                Propagation::Sym => w * inv(degrees[i] * degrees[j]).sqrt(),
                Propagation::Rw => w * inv(degrees[i]),
            });
        }
    }
    SparseMatrix {
        n_rows: n,
        n_cols: n,
        indptr: indptr.to_vec(),
        indices: indices.to_vec(),
        values,
    }
}

/// Blocks `[X, PX, P^2 X, ..., P^hops X]` side by side (`batch x (hops+1)*d`),
/// each obtained from the previous one by a single sparse product.
pub fn krylov_blocks<F: Real>(x: ArrayView2<F>, prop: &SparseMatrix<F>, hops: usize) -> Result<Vec<Array2<F>>> {
    if prop.shape() != (x.nrows(), x.nrows()) {
        return Err(Error::arg(format!(
            "propagation operator is {:?} but features have {} rows",
            prop.shape(),
            x.nrows()
        )));
    }
    let mut blocks = Vec::with_capacity(hops + 1);
    blocks.push(x.to_owned());
    for t in 0..hops {
        let next = prop.dot(&blocks[t].view());
        blocks.push(next);
    }
    Ok(blocks)
}

pub fn krylov_features<F: Real>(x: ArrayView2<F>, prop: &SparseMatrix<F>, hops: usize) -> Result<Array2<F>> {
    let blocks = krylov_blocks(x, prop, hops)?;
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    Ok(concatenate(Axis(1), &views).expect("blocks share the row axis"))
}

/// Restriction of `a` to the rows and columns in `indices`, in that order.
///
/// Cost is proportional to the summed degree of the selected nodes.
pub fn batch_subgraph(a: &Adjacency, indices: &[usize]) -> Result<Adjacency> {
    let mut position = HashMap::with_capacity(indices.len());
    for (p, &i) in indices.iter().enumerate() {
        if i >= a.n() {
            return Err(Error::arg(format!("index {i} out of range for {} nodes", a.n())));
        }
        if position.insert(i, p).is_some() {
            return Err(Error::arg(format!("duplicate index {i}")));
        }
    }
    let mut triplets = Vec::new();
    for (p, &i) in indices.iter().enumerate() {
        for (j, w) in a.row(i) {
            if let Some(&q) = position.get(&j) {
                if q >= p {
                    triplets.push((p, q, w));
                }
            }
        }
    }
    Adjacency::from_triplets(indices.len(), triplets)
}
