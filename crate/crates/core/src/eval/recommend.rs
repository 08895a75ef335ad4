use std::collections::HashSet;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FollowRelation;
use crate::error::{Error, Result};

/// `u^T v / (|u| |v|)`; zero when either vector is zero.
pub fn cosine_similarity(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        log::warn!("cosine similarity with a zero vector");
        return 0.0;
    }
    (u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationTask {
    pub accounts: Vec<u64>,
    pub seeds_per_account: usize,
    /// Length `L` of the shortlist.
    pub shortlist: usize,
}

impl RecommendationTask {
    /// The protocol on the `20` most followed accounts, `10` seeds, `L = 100`.
    pub fn standard(follows: &FollowRelation) -> Self {
        Self {
            accounts: follows.most_followed(20),
            seeds_per_account: 10,
            shortlist: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecommendationScores {
    pub precision: f64,
    pub recall: f64,
    pub mrr: f64,
    /// Accounts with enough followers to be evaluated.
    pub accounts_used: usize,
}

/// Per-account scores of the seed-and-rank protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccountScores {
    pub account: u64,
    pub precision: f64,
    pub recall: f64,
    pub reciprocal_rank: f64,
    pub followers: usize,
}

/// Ranks every non-seed user by cosine similarity to the mean seed
/// embedding (ties by index) and scores the top `shortlist`.
pub fn score_account(
    z: ArrayView2<f64>,
    followers: &[usize],
    seeds: &[usize],
    shortlist: usize,
) -> (f64, f64, f64) {
    let seed_set: HashSet<usize> = seeds.iter().copied().collect();
    let mut query = Array1::<f64>::zeros(z.ncols());
    for &s in seeds {
        query += &z.row(s);
    }
    query /= seeds.len().max(1) as f64;
    let mut ranked: Vec<(usize, f64)> = (0..z.nrows())
        .filter(|u| !seed_set.contains(u))
        .map(|u| (u, cosine_similarity(z.row(u), query.view())))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let positives: HashSet<usize> = followers.iter().copied().filter(|u| !seed_set.contains(u)).collect();
    let hits = ranked.iter().take(shortlist).filter(|(u, _)| positives.contains(u)).count();
    let first = ranked.iter().position(|(u, _)| positives.contains(u));
    let precision = hits as f64 / shortlist as f64;
    let recall = hits as f64 / positives.len().max(1) as f64;
    let rr = first.map_or(0.0, |r| 1.0 / (r + 1) as f64);
    (precision, recall, rr)
}

/// Per-account results; accounts with too few followers are skipped with a warning.
pub fn recommend_per_account(
    z: ArrayView2<f64>,
    follows: &FollowRelation,
    task: &RecommendationTask,
    seed: u64,
) -> Result<Vec<AccountScores>> {
    if z.nrows() != follows.follows.len() {
        return Err(Error::arg(format!(
            "embedding has {} rows for {} users",
            z.nrows(),
            follows.follows.len()
        )));
    }
    if task.shortlist == 0 || task.seeds_per_account == 0 {
        return Err(Error::arg("shortlist and seed counts must be positive"));
    }
    let mut out = Vec::new();
    for (a, &account) in task.accounts.iter().enumerate() {
        let followers = follows.followers_of(account);
        if followers.len() <= task.seeds_per_account {
            log::warn!(
                "account {account} has {} followers in the sample; skipped",
                followers.len()
            );
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(a as u64);
        let seeds: Vec<usize> = sample(&mut rng, followers.len(), task.seeds_per_account)
            .into_iter()
            .map(|p| followers[p])
            .collect();
        let (precision, recall, reciprocal_rank) = score_account(z, &followers, &seeds, task.shortlist);
        out.push(AccountScores {
            account,
            precision,
            recall,
            reciprocal_rank,
            followers: followers.len(),
        });
    }
    Ok(out)
}

/// Precision, recall and MRR averaged over accounts.
pub fn recommend_friends(
    z: ArrayView2<f64>,
    follows: &FollowRelation,
    task: &RecommendationTask,
    seed: u64,
) -> Result<RecommendationScores> {
    let per = recommend_per_account(z, follows, task, seed)?;
    if per.is_empty() {
        return Err(Error::arg("no account has enough followers to evaluate"));
    }
    let k = per.len() as f64;
    Ok(RecommendationScores {
        precision: per.iter().map(|s| s.precision).sum::<f64>() / k,
        recall: per.iter().map(|s| s.recall).sum::<f64>() / k,
        mrr: per.iter().map(|s| s.reciprocal_rank).sum::<f64>() / k,
        accounts_used: per.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn cosine_examples() {
        let u = array![1.0, 0.0];
        assert_eq!(cosine_similarity(u.view(), u.view()), 1.0);
        assert_eq!(cosine_similarity(u.view(), array![0.0, 3.0].view()), 0.0);
        let v = cosine_similarity(u.view(), array![1.0, 1.0].view());
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine_similarity(u.view(), array![0.0, 0.0].view()), 0.0);
    }

    #[test]
    fn seeds_are_excluded_and_bounded_by_followers() {
        // users 0..30 follow account 7, users 30..200 follow nothing
        let follows = FollowRelation {
            follows: (0..200).map(|u| if u < 30 { vec![7] } else { vec![] }).collect(),
            global_follower_counts: [(7, 30)].into_iter().collect(),
        };
        let mut z = Array2::zeros((200, 2));
        for u in 0..200 {
            z[[u, if u < 30 { 0 } else { 1 }]] = 1.0;
        }
        let task = RecommendationTask {
            accounts: vec![7],
            seeds_per_account: 10,
            shortlist: 100,
        };
        let s = recommend_friends(z.view(), &follows, &task, 0).unwrap();
        assert!((s.precision - 0.2).abs() < 1e-15);
        assert_eq!((s.recall, s.mrr), (1.0, 1.0));
        assert!(s.precision * 100.0 <= 30.0);
    }

    #[test]
    fn thin_accounts_are_skipped() {
        let follows = FollowRelation {
            follows: (0..20).map(|u| if u < 5 { vec![1] } else { vec![2] }).collect(),
            global_follower_counts: [(1, 5), (2, 15)].into_iter().collect(),
        };
        let z = Array2::from_shape_fn((20, 2), |(i, j)| (i * 2 + j) as f64);
        let task = RecommendationTask {
            accounts: vec![1, 2],
            seeds_per_account: 10,
            shortlist: 5,
        };
        let per = recommend_per_account(z.view(), &follows, &task, 0).unwrap();
        assert_eq!(per.len(), 1);
        assert_eq!(per[0].account, 2);
    }
}
