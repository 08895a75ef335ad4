//! K-means, spectral clustering and the adjusted Rand index.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{knn_graph, Metric};
use crate::error::{Error, Result};
use crate::eval::report::mean_std;
use crate::linalg::top_eigen;

/// Number of independently seeded clusterings averaged by the ARI protocols.
pub const CLUSTERING_RUNS: usize = 10;

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding.
fn seed_centroids<R: Rng>(x: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    centroids.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut closest: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.rows().into_iter().enumerate() {
            closest[i] = closest[i].min(sq_dist(r, centroids.row(c)));
        }
    }
    centroids
}

/// Result of one k-means fit.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

/// Lloyd iterations from k-means++ seeds, best of `restarts` by inertia.
/// An emptied cluster is re-seeded at the point farthest from its centroid.
pub fn kmeans<R: Rng>(x: ArrayView2<f64>, k: usize, restarts: usize, rng: &mut R) -> Result<KMeansFit> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::arg(format!("cannot form {k} clusters from {n} points")));
    }
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let mut centroids = seed_centroids(x, k, rng);
        let mut assignments = vec![0; n];
        let mut dists = vec![0.0; n];
        for iteration in 0..300 {
            let mut changed = false;
            for (i, r) in x.rows().into_iter().enumerate() {
                let (c, d) = (0..k)
                    .map(|c| (c, sq_dist(r, centroids.row(c))))
                    .fold((0, f64::INFINITY), |b, v| if v.1 < b.1 { v } else { b });
                if c != assignments[i] || iteration == 0 {
                    changed |= c != assignments[i];
                    assignments[i] = c;
                }
                dists[i] = d;
            }
            let mut sums = Array2::<f64>::zeros((k, x.ncols()));
            let mut counts = vec![0usize; k];
            for (i, r) in x.rows().into_iter().enumerate() {
                sums.row_mut(assignments[i]).scaled_add(1.0, &r);
                counts[assignments[i]] += 1;
            }
            for c in 0..k {
                if counts[c] == 0 {
                    let far = (0..n).fold(0, |b, i| if dists[i] > dists[b] { i } else { b });
                    centroids.row_mut(c).assign(&x.row(far));
                    dists[far] = 0.0;
                    changed = true;
                } else {
                    centroids.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
                }
            }
            if !changed && iteration > 0 {
                break;
            }
        }
        let inertia = x
            .rows()
            .into_iter()
            .zip(&assignments)
            .map(|(r, &c)| sq_dist(r, centroids.row(c)))
            .sum();
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansFit {
                assignments,
                centroids,
                inertia,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Pair-counting adjusted Rand index.
pub fn adjusted_rand_index(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::arg(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let n = pred.len() as f64;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *table.entry((p, t)).or_default() += 1.0;
        *rows.entry(p).or_default() += 1.0;
        *cols.entry(t).or_default() += 1.0;
    }
    let pairs = |m: f64| m * (m - 1.0) / 2.0;
    let index: f64 = table.values().copied().map(pairs).sum();
    let a: f64 = rows.values().copied().map(pairs).sum();
    let b: f64 = cols.values().copied().map(pairs).sum();
    let expected = a * b / pairs(n).max(f64::MIN_POSITIVE);
    let max_index = 0.5 * (a + b);
    let denom = max_index - expected;
    if denom == 0.0 {
        // both partitions trivial in the same way
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

fn distinct(labels: &[usize]) -> usize {
    labels.iter().collect::<std::collections::BTreeSet<_>>().len()
}

/// Mean and standard deviation of the ARI over [`CLUSTERING_RUNS`] seeded
/// k-means fits, each the best of `restarts`.
pub fn kmeans_ari(z: ArrayView2<f64>, labels: &[usize], n_clusters: usize, restarts: usize, seed: u64) -> Result<(f64, f64)> {
    if z.nrows() != labels.len() {
        return Err(Error::arg("embedding and labels disagree on the sample count"));
    }
    if n_clusters != distinct(labels) {
        log::warn!("{n_clusters} clusters requested for {} label values", distinct(labels));
    }
    let mut scores = Vec::with_capacity(CLUSTERING_RUNS);
    for run in 0..CLUSTERING_RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64));
        let fit = kmeans(z, n_clusters, restarts, &mut rng)?;
        scores.push(adjusted_rand_index(&fit.assignments, labels)?);
    }
    Ok(mean_std(&scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralParams {
    /// Neighbours in the kNN affinity graph.
    pub k: usize,
    pub metric: Metric,
    /// k-means restarts on the spectral embedding.
    pub restarts: usize,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self {
            k: 10,
            metric: Metric::Euclidean,
            restarts: 10,
        }
    }
}

/// Spectral embedding of the rows of `z`: top eigenvectors of
/// `D^{-1/2} W D^{-1/2}` for the binary kNN affinity `W`, rows scaled to unit
/// length. Each connected component of `W` owns an eigenvector with eigenvalue
/// 1, so components with no edges between them separate first.
pub fn spectral_embedding(z: ArrayView2<f64>, n_clusters: usize, params: &SpectralParams, seed: u64) -> Result<Array2<f64>> {
    let n = z.nrows();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::arg(format!("cannot form {n_clusters} clusters from {n} points")));
    }
    let w = knn_graph(z, params.k.min(n - 1), params.metric)?;
    let deg = Array1::from(w.degrees());
    let inv_sqrt = deg.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let mut affinity = w.to_dense();
    for ((i, j), v) in affinity.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    let (_, mut vectors) = top_eigen(&affinity, n_clusters, seed)?;
    for mut row in vectors.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(vectors)
}

/// ARI of spectral clustering, mean and standard deviation over
/// [`CLUSTERING_RUNS`] seeded k-means fits on one spectral embedding.
pub fn spectral_ari(
    z: ArrayView2<f64>,
    labels: &[usize],
    n_clusters: usize,
    params: &SpectralParams,
    seed: u64,
) -> Result<(f64, f64)> {
    if z.nrows() != labels.len() {
        return Err(Error::arg("embedding and labels disagree on the sample count"));
    }
    let embedding = spectral_embedding(z, n_clusters, params, seed)?;
    kmeans_ari(embedding.view(), labels, n_clusters, params.restarts, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, center: f64, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, 2), || {
            let e: f64 = StandardNormal.sample(&mut rng);
            center + e
        })
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(adjusted_rand_index(&[0; 6], &[0, 0, 0, 1, 1, 1]).unwrap(), 0.0);
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn random_labels_have_ari_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let truth: Vec<usize> = (0..1000).map(|i| i % 5).collect();
        let pred: Vec<usize> = (0..1000).map(|_| rng.random_range(0..5)).collect();
        assert!(adjusted_rand_index(&pred, &truth).unwrap().abs() < 0.05);
    }

    proptest! {
        #[test]
        fn ari_is_symmetric_and_label_invariant(
            a in prop::collection::vec(0usize..4, 2..40),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..3)).collect();
            let ab = adjusted_rand_index(&a, &b).unwrap();
            let ba = adjusted_rand_index(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            let relabeled: Vec<usize> = a.iter().map(|&l| 10 - 2 * l).collect();
            prop_assert!((adjusted_rand_index(&relabeled, &b).unwrap() - ab).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_recovers_exact_clusters() {
        let mut x = gaussian(60, -10.0, 0);
        x.append(Axis(0), gaussian(60, 10.0, 1).view()).unwrap();
        let labels: Vec<usize> = (0..120).map(|i| i / 60).collect();
        let (mean, std) = kmeans_ari(x.view(), &labels, 2, 5, 0).unwrap();
        assert_eq!((mean, std), (1.0, 0.0));
    }

    #[test]
    fn kmeans_reseeds_empty_clusters() {
        // five identical points and one outlier: three clusters force an empty one
        let x = ndarray::array![[0.0], [0.0], [0.0], [0.0], [0.0], [9.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fit = kmeans(x.view(), 3, 1, &mut rng).unwrap();
        assert!(fit.inertia.is_finite() && fit.inertia < 1e-12);
    }

    #[test]
    fn spectral_separates_far_blobs() {
        let mut x = gaussian(50, -20.0, 2);
        x.append(Axis(0), gaussian(50, 20.0, 3).view()).unwrap();
        let labels: Vec<usize> = (0..100).map(|i| i / 50).collect();
        let (mean, _) = spectral_ari(x.view(), &labels, 2, &SpectralParams::default(), 0).unwrap();
        assert_eq!(mean, 1.0);
    }

    #[test]
    fn spectral_on_one_blob_has_no_structure() {
        let x = gaussian(300, 0.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels: Vec<usize> = (0..300).map(|_| rng.random_range(0..2)).collect();
        let (mean, _) = spectral_ari(x.view(), &labels, 2, &SpectralParams::default(), 0).unwrap();
        assert!(mean.abs() < 0.1, "{mean}");
    }
}
