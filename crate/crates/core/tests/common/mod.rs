//! Measurements shared by the oracle suites and the acceptance report.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Instant;

use mvgcca::baselines::{gmcca, mcca, regularized_objective, Ridge};
use mvgcca::data::{normalize_adjacency, Adjacency, FollowRelation, MultiviewDataset};
use mvgcca::eval::{recommend_friends, RecommendationScores, RecommendationTask};
use mvgcca::graph::laplacian;
use mvgcca::model::{
    elbo_and_gradients, elbo_with_noise, fuse_posteriors, kl_fused_vs_prior, Activation, Batch, LatentNoise,
    ModelParams, NoiseSharing, TrainConfig, Trainer,
};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: (usize, usize), lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(lo..hi))
}

pub fn gaussian(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.sample(StandardNormal))
}

// ---------------------------------------------------------------- gradients

fn gradient_toy(seed: u64) -> MultiviewDataset {
    let mut rng = rng(seed);
    let views = vec![uniform((4, 3), -0.5, 0.5, &mut rng), uniform((4, 2), -0.5, 0.5, &mut rng)];
    let ds = MultiviewDataset::new(views, vec!["a".into(), "b".into()], None).unwrap();
    let a = Adjacency::from_triplets(4, [(0, 1, 1.0), (1, 2, 0.6), (0, 3, 1.0)]).unwrap();
    ds.with_adjacency(normalize_adjacency(&a)).unwrap()
}

/// n = 4, d = 2, hidden = 3, two views, dropout off.
pub fn gradient_config() -> TrainConfig {
    TrainConfig {
        latent_dim: 2,
        hidden: 3,
        layers: 2,
        hops: 2,
        dropout: 0.0,
        ..Default::default()
    }
}

/// Configurations and seeds covered by the finite-difference suite.
pub fn gradient_cases() -> Vec<(String, TrainConfig, u64)> {
    let base = gradient_config();
    let mut cases = vec![("relu".to_string(), base.clone(), 1)];
    cases.push((
        "tanh, per-view noise, 2 draws".into(),
        TrainConfig {
            activation: Activation::Tanh,
            noise: NoiseSharing::PerView,
            mc_samples: 2,
            ..base.clone()
        },
        2,
    ));
    cases.push((
        "normalized link, weighted terms".into(),
        TrainConfig {
            normalized_link: true,
            link_weight: 0.7,
            recon_weight: 1.3,
            ..base.clone()
        },
        3,
    ));
    for seed in 10..14 {
        cases.push((format!("relu seed {seed}"), base.clone(), seed));
    }
    cases
}

/// Largest per-tensor relative error `|g - fd| / max(|g|, |fd|)` (norms over
/// the tensor) between analytic and central-difference gradients of `-ELBO`.
pub fn gradient_worst(config: &TrainConfig, seed: u64) -> (f64, String) {
    let ds = gradient_toy(seed);
    let mut rng = rng(seed + 100);
    let mut params = ModelParams::<f64>::init(&ds.view_dims(), &[0.3, 0.5], config, &mut rng);
    // zero biases put ReLU pre-activations exactly on the kink whenever a
    // whole layer is inactive for a sample
    for e in &mut params.encoders {
        for d in e.krylov_layers.iter_mut().chain([&mut e.head_mu, &mut e.head_logsigma]) {
            d.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
    }
    for dec in &mut params.decoders {
        for d in dec.mlp.iter_mut().chain([&mut dec.head_mu]) {
            d.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
        dec.log_psi += rng.random_range(-0.2..0.2);
    }
    let batch = Batch::<f64>::from_dataset(&ds, &[0, 1, 2, 3], config.propagation).unwrap();
    let noise = LatentNoise::sample(4, config, 2, &mut rng);
    let (_, grads) = elbo_and_gradients::<f64, ChaCha8Rng>(&batch, &params, config, &noise, None).unwrap();

    let loss = |p: &ModelParams<f64>| elbo_with_noise(&batch, p, config, &noise).unwrap().neg_elbo();
    let h = 1e-6;
    let names: Vec<String> = params.tensors().iter().map(|t| t.name.clone()).collect();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data.to_vec()).collect();
    let mut worst = (0.0, String::new());
    for (t, name) in names.iter().enumerate() {
        let mut diff = 0.0;
        let (mut norm_a, mut norm_n) = (0.0f64, 0.0f64);
        for k in 0..analytic[t].len() {
            let mut plus = params.clone();
            plus.tensors_mut()[t][k] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[t][k] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = analytic[t][k];
            diff += (a - fd) * (a - fd);
            norm_a += a * a;
            norm_n += fd * fd;
        }
        let scale = norm_a.sqrt().max(norm_n.sqrt());
        let rel = if scale < 1e-9 { diff.sqrt() } else { diff.sqrt() / scale };
        if rel > worst.0 {
            worst = (rel, name.clone());
        }
    }
    worst
}

// ------------------------------------------------------------ latent oracles

/// Max abs deviation between the library fusion and the normalized product of
/// Gaussian densities, folded pairwise: `N(a, u) N(b, v) ∝ N((a v + b u)/(u + v), u v/(u + v))`.
/// Compares means and variances.
pub fn fusion_max_error(trials: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let views = rng.random_range(1..6);
        let shape = (rng.random_range(1..8), rng.random_range(1..5));
        let mu: Vec<_> = (0..views).map(|_| uniform(shape, -3.0, 3.0, &mut rng)).collect();
        let ls: Vec<_> = (0..views).map(|_| uniform(shape, -2.0, 2.0, &mut rng)).collect();
        let (fm, fl) = fuse_posteriors(&mu, &ls);
        for ((r, c), &got_mean) in fm.indexed_iter() {
            let (mut mean, mut var) = (mu[0][[r, c]], (2.0 * ls[0][[r, c]]).exp());
            for m in 1..views {
                let (b, v) = (mu[m][[r, c]], (2.0 * ls[m][[r, c]]).exp());
                mean = (mean * v + b * var) / (var + v);
                var = var * v / (var + v);
            }
            let got_var = (2.0 * fl[[r, c]]).exp();
            worst = worst.max((got_mean - mean).abs()).max((got_var - var).abs());
        }
    }
    worst
}

/// Largest relative gap between the closed-form KL and a Monte Carlo
/// estimate of `E_q[log q(z) - log p(z)]` over `draws` samples.
pub fn kl_mc_relative_error(draws: usize, seed: u64) -> f64 {
    let cases: [(Vec<f64>, Vec<f64>); 3] = [
        (vec![0.8, -1.2, 0.5], vec![-0.5, 0.3, 0.1]),
        (vec![2.0, 0.0], vec![0.0, -1.0]),
        (vec![0.1, 0.2, -0.3, 0.4], vec![0.7, -0.2, 0.0, -0.6]),
    ];
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for (mu, ls) in cases {
        let d = mu.len();
        let closed = kl_fused_vs_prior(
            &Array2::from_shape_vec((1, d), mu.clone()).unwrap(),
            &Array2::from_shape_vec((1, d), ls.clone()).unwrap(),
        )[0];
        let mut total = 0.0;
        for _ in 0..draws {
            for k in 0..d {
                let e: f64 = rng.sample(StandardNormal);
                let z = mu[k] + ls[k].exp() * e;
                // log N(z; mu, s^2) - log N(z; 0, 1)
                total += -ls[k] - 0.5 * e * e + 0.5 * z * z;
            }
        }
        let mc = total / draws as f64;
        worst = worst.max((mc - closed).abs() / closed);
    }
    worst
}

// ---------------------------------------------------------- baseline oracles

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Sine of the largest principal angle between the row space of `s` (`d x n`,
/// orthonormal rows) and the column space of `v` (`n x d`, orthonormal columns).
fn subspace_sine(s: &Array2<f64>, v: &DMatrix<f64>) -> f64 {
    let st = to_dmatrix(&s.t().to_owned());
    let residual = &st - v * (v.transpose() * &st);
    residual.singular_values().max()
}

/// Random instances with `n <= 12`: largest principal angle between the GMCCA
/// subspace and the top-`d` eigenvectors of a dense oracle matrix, together
/// with the number of instances compared.
pub fn gmcca_dense_oracle(instances: usize, seed: u64) -> (f64, usize) {
    let mut rng = rng(seed);
    let eps = 1e-8;
    let mut worst = 0.0f64;
    let mut compared = 0;
    while compared < instances {
        let n = rng.random_range(6..=12);
        let dims: Vec<usize> = (0..3).map(|_| rng.random_range(1..=4)).collect();
        let views: Vec<_> = dims.iter().map(|&dm| gaussian((n, dm), &mut rng)).collect();
        let mut edges = Vec::new();
        let mut lap = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(0.4) {
                    let w = rng.random_range(0.1..1.0);
                    edges.push((i, j, w));
                    lap[(i, j)] -= w;
                    lap[(j, i)] -= w;
                    lap[(i, i)] += w;
                    lap[(j, j)] += w;
                }
            }
        }
        let gamma = rng.random_range(0.0..3.0);
        let d = rng.random_range(1..=3);

        let mut c = -gamma * lap;
        for x in &views {
            let x = to_dmatrix(x);
            let mut g = x.transpose() * &x;
            for k in 0..g.nrows() {
                g[(k, k)] += eps;
            }
            let inv = g.cholesky().expect("positive definite").inverse();
            c += &x * inv * x.transpose();
        }
        let eig = c.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        if eig.eigenvalues[order[d - 1]] - eig.eigenvalues[order[d]] < 1e-3 {
            continue;
        }
        let v = DMatrix::from_fn(n, d, |i, k| eig.eigenvectors[(i, order[k])]);

        let ds = MultiviewDataset::new(views, vec!["a".into(), "b".into(), "c".into()], None).unwrap();
        let adj = Adjacency::from_triplets(n, edges).unwrap();
        let emb = gmcca(&ds, &laplacian(&adj), gamma, d, Ridge::Absolute(eps)).unwrap();
        worst = worst.max(subspace_sine(&emb.s, &v).min(1.0).asin());
        compared += 1;
    }
    (worst, compared)
}

/// Three random views on `n = 6` samples, `d = 1`: number of random unit
/// vectors `s` (out of `trials`) whose regularized objective at `gamma = 0`
/// beats the MCCA solution, and the smallest observed margin.
pub fn mcca_random_search(trials: usize, seed: u64) -> (usize, f64) {
    let mut rng = rng(seed);
    let n = 6;
    let views: Vec<_> = [2, 3, 1].iter().map(|&dm| gaussian((n, dm), &mut rng)).collect();
    let ds = MultiviewDataset::new(views, vec!["a".into(), "b".into(), "c".into()], None).unwrap();
    let eps = Ridge::Absolute(0.0);
    let emb = mcca(&ds, 1, eps).unwrap();
    let best = regularized_objective(&ds, None, 0.0, emb.s.view(), eps).unwrap();
    let mut beaten = 0;
    let mut margin = f64::INFINITY;
    for _ in 0..trials {
        let mut s = gaussian((1, n), &mut rng);
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        s /= norm;
        let value = regularized_objective(&ds, None, 0.0, s.view(), eps).unwrap();
        margin = margin.min(value - best);
        if value < best {
            beaten += 1;
        }
    }
    (beaten, margin)
}

// ------------------------------------------------------ recommendation oracles

pub fn task_for(accounts: impl IntoIterator<Item = u64>) -> RecommendationTask {
    RecommendationTask {
        accounts: accounts.into_iter().collect(),
        seeds_per_account: 10,
        shortlist: 100,
    }
}

fn relation(follows: Vec<Vec<u64>>) -> FollowRelation {
    let mut counts = BTreeMap::new();
    for f in &follows {
        for &a in f {
            *counts.entry(a).or_insert(0) += 1;
        }
    }
    FollowRelation {
        follows,
        global_follower_counts: counts,
    }
}

/// Every user follows exactly one of 20 accounts and is embedded as that
/// account's indicator vector. Returns the scores and the expected precision
/// `mean_a min(1, (F_a - seeds) / L)`.
pub fn one_hot_recommendation() -> (RecommendationScores, f64) {
    let mut rng = rng(21);
    let sizes: Vec<usize> = (0..20).map(|a| 30 + 12 * a).collect();
    let mut owner: Vec<usize> = sizes.iter().enumerate().flat_map(|(a, &s)| vec![a; s]).collect();
    // interleave so that followers are not contiguous
    for i in (1..owner.len()).rev() {
        owner.swap(i, rng.random_range(0..=i));
    }
    let z = Array2::from_shape_fn((owner.len(), 20), |(u, k)| if owner[u] == k { 1.0 } else { 0.0 });
    let follows = relation(owner.iter().map(|&a| vec![1000 + a as u64]).collect());
    let task = task_for(follows.most_followed(20));
    let scores = recommend_friends(z.view(), &follows, &task, 5).unwrap();
    let expected = sizes.iter().map(|&f| ((f - 10) as f64 / 100.0).min(1.0)).sum::<f64>() / 20.0;
    (scores, expected)
}

/// Gaussian embeddings unrelated to a random follow relation. Returns the
/// mean precision over `embeddings` independent draws and the base rate
/// `mean_a (F_a - seeds) / (n - seeds)`.
pub fn random_recommendation(embeddings: usize) -> (f64, f64) {
    let mut rng = rng(33);
    let n = 3000;
    let rates: Vec<f64> = (0..20).map(|a| 0.05 + 0.01 * a as f64).collect();
    let follows = relation(
        (0..n)
            .map(|_| {
                (0..20u64)
                    .filter(|&a| rng.random_bool(rates[a as usize]))
                    .map(|a| 1000 + a)
                    .collect()
            })
            .collect(),
    );
    let task = task_for(follows.most_followed(20));
    let base = task
        .accounts
        .iter()
        .map(|&a| (follows.followers_of(a).len() - 10) as f64 / (n - 10) as f64)
        .sum::<f64>()
        / 20.0;
    let precision = (0..embeddings)
        .map(|e| {
            let z = gaussian((n, 5), &mut rng);
            recommend_friends(z.view(), &follows, &task, e as u64).unwrap().precision
        })
        .sum::<f64>()
        / embeddings as f64;
    (precision, base)
}

// ---------------------------------------------------------------- scalability

/// Six views, each node linked to `degree` random others.
pub fn synthetic_six_view(n: usize, degree: usize, seed: u64) -> MultiviewDataset {
    let mut rng = rng(seed);
    let dims = [30, 20, 16, 12, 10, 6];
    let views = dims.iter().map(|&dm| uniform((n, dm), -1.0, 1.0, &mut rng)).collect();
    let names = (0..6).map(|m| format!("v{m}")).collect();
    let ds = MultiviewDataset::new(views, names, None).unwrap();
    let edges: Vec<_> = (0..n)
        .flat_map(|i| (0..degree).map(move |k| (i, k)))
        .map(|(i, _)| (i, rng.random_range(0..n), 1.0))
        .collect();
    ds.with_adjacency(normalize_adjacency(&Adjacency::from_triplets(n, edges).unwrap()))
        .unwrap()
}

pub fn scalability_config() -> TrainConfig {
    TrainConfig {
        hidden: 128,
        layers: 4,
        hops: 3,
        batch_size: 512,
        dropout: 0.0,
        learning_rate: 1e-3,
        ..Default::default()
    }
}

/// Median wall time of one optimizer step (batch assembly included) on
/// random batches of `batch_size` samples, for each dataset. Steps are taken
/// round-robin across the datasets so that load drift affects all equally.
pub fn median_step_seconds(datasets: &[MultiviewDataset], config: &TrainConfig, steps: usize, seed: u64) -> Vec<f64> {
    let mut trainers: Vec<_> = datasets
        .iter()
        .map(|ds| Trainer::<f32>::new(ds, config.clone()).unwrap())
        .collect();
    let mut rng = rng(seed);
    let mut times = vec![Vec::with_capacity(steps); datasets.len()];
    for step in 0..steps + 2 {
        for (k, trainer) in trainers.iter_mut().enumerate() {
            let indices = sample(&mut rng, trainer.n(), config.batch_size).into_vec();
            let start = Instant::now();
            trainer.step(&indices, step).unwrap();
            if step >= 2 {
                times[k].push(start.elapsed().as_secs_f64());
            }
        }
    }
    times
        .into_iter()
        .map(|mut t| {
            t.sort_by(f64::total_cmp);
            t[t.len() / 2]
        })
        .collect()
}
