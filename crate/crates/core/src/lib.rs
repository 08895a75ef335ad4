//! Multiview graph canonical correlation analysis.
//!
//! - [`data`]: multiview datasets, loaders, kNN graphs and folds.
//! - [`graph`]: Laplacians, propagation operators and Krylov features.
//! - [`baselines`]: PCA, graph PCA, MCCA and graph-regularized MCCA.
//! - [`model`]: the variational graph multiview model and its trainer.
//! - [`eval`]: classification, clustering and recommendation metrics.
//! - [`experiment`]: configured pipeline runs, grid search and embedding export.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod model;
mod real;

pub use error::{Error, Result};
pub use real::Real;
