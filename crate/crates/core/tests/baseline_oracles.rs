mod common;

use common::{gaussian, gmcca_dense_oracle, mcca_random_search, rng};
use mvgcca::baselines::{
    gmcca, graph_pca, mcca, pca, regularized_objective, within_group_variance_ratio, LinearEmbedding, Ridge,
};
use mvgcca::data::{Adjacency, MultiviewDataset};
use mvgcca::graph::laplacian;
use mvgcca::linalg::max_principal_angle;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn random_views(n: usize, dims: &[usize], seed: u64) -> MultiviewDataset {
    let mut rng = rng(seed);
    let views = dims.iter().map(|&dm| gaussian((n, dm), &mut rng)).collect();
    let names = (0..dims.len()).map(|m| format!("v{m}")).collect();
    MultiviewDataset::new(views, names, None).unwrap()
}

/// Three communities of 10 nodes, linked only internally.
fn communities() -> Adjacency {
    let edges = (0..30).flat_map(|i| ((i + 1)..30).filter(move |j| j / 10 == i / 10).map(move |j| (i, j, 1.0)));
    Adjacency::from_triplets(30, edges).unwrap()
}

fn orthonormality_error(emb: &LinearEmbedding) -> f64 {
    let gram = emb.s.dot(&emb.s.t());
    let eye = Array2::<f64>::eye(emb.d);
    (&gram - &eye).iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn gmcca_subspace_matches_dense_eigendecomposition() {
    let (angle, compared) = gmcca_dense_oracle(60, 1);
    assert_eq!(compared, 60);
    assert!(angle < 1e-6, "largest principal angle {angle:.3e}");
}

#[test]
fn mcca_beats_every_random_feasible_representation() {
    for seed in 0..5 {
        let (beaten, margin) = mcca_random_search(10_000, seed);
        assert_eq!(beaten, 0, "instance {seed}: margin {margin:.3e}");
    }
}

#[test]
fn gmcca_without_graph_weight_is_mcca() {
    let ds = random_views(30, &[3, 4, 2], 2);
    let lap = laplacian(&communities());
    let a = gmcca(&ds, &lap, 0.0, 3, Ridge::default()).unwrap();
    let b = mcca(&ds, 3, Ridge::default()).unwrap();
    assert!(max_principal_angle(a.s.t(), b.s.t()).unwrap() < 1e-8);
}

#[test]
fn graph_weight_trades_fit_for_smoothness() {
    let ds = random_views(30, &[3, 4, 2], 3);
    let lap = laplacian(&communities());
    let eps = Ridge::Absolute(0.0);
    let groups: Vec<usize> = (0..30).map(|i| i / 10).collect();
    let mut previous: Option<(f64, f64, f64)> = None;
    for gamma in [0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0] {
        let emb = gmcca(&ds, &lap, gamma, 2, eps).unwrap();
        let smooth = lap.smoothness(emb.s.view());
        let fit = regularized_objective(&ds, None, 0.0, emb.s.view(), eps).unwrap();
        let within = within_group_variance_ratio(emb.s.view(), &groups);
        if let Some((s0, f0, w0)) = previous {
            assert!(smooth <= s0 + 1e-9, "gamma {gamma}: smoothness {smooth} > {s0}");
            assert!(fit >= f0 - 1e-9, "gamma {gamma}: data term {fit} < {f0}");
            assert!(within <= w0 + 1e-9, "gamma {gamma}: within-community variance {within} > {w0}");
        }
        previous = Some((smooth, fit, within));
    }
    // at the largest weight the embedding is nearly constant on communities
    assert!(previous.unwrap().2 < 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_baseline_returns_orthonormal_rows(seed in 0u64..10_000, d in 1usize..4, gamma in 0.0f64..10.0) {
        let ds = random_views(30, &[3, 4, 2], seed);
        let lap = laplacian(&communities());
        for emb in [
            pca(&ds, d).unwrap(),
            graph_pca(&ds, &lap, gamma, d).unwrap(),
            mcca(&ds, d, Ridge::default()).unwrap(),
            gmcca(&ds, &lap, gamma, d, Ridge::default()).unwrap(),
        ] {
            prop_assert!(orthonormality_error(&emb) < 1e-8);
        }
    }

    #[test]
    fn multiview_embeddings_ignore_view_order(seed in 0u64..10_000, gamma in 0.0f64..10.0) {
        let ds = random_views(30, &[3, 4, 2], seed);
        let mut shuffled = ds.clone();
        let mut r = rng(seed);
        for i in (1..3).rev() {
            let j = r.random_range(0..=i);
            shuffled.views.swap(i, j);
            shuffled.names.swap(i, j);
        }
        let lap = laplacian(&communities());
        let a = gmcca(&ds, &lap, gamma, 2, Ridge::default()).unwrap();
        let b = gmcca(&shuffled, &lap, gamma, 2, Ridge::default()).unwrap();
        prop_assert!(max_principal_angle(a.s.t(), b.s.t()).unwrap() < 1e-8);
        let a = mcca(&ds, 2, Ridge::default()).unwrap();
        let b = mcca(&shuffled, 2, Ridge::default()).unwrap();
        prop_assert!(max_principal_angle(a.s.t(), b.s.t()).unwrap() < 1e-8);
    }
}
