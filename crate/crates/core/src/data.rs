//! Multiview datasets, the shared sample graph, and cross-validation folds.
//!
//! Views are stored with one sample per row: view `m` is an `n x d_m` matrix.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use log::warn;
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// UCI multiple-features files, in view order, with their dimensionality.
pub const UCI_VIEWS: [(&str, usize); 6] = [
    ("mfeat-fou", 76),
    ("mfeat-fac", 216),
    ("mfeat-kar", 64),
    ("mfeat-pix", 240),
    ("mfeat-zer", 47),
    ("mfeat-mor", 6),
];
pub const UCI_ROWS: usize = 2000;
pub const UCI_CLASS_BLOCK: usize = 200;

/// Classes kept by the reduced digit benchmark (0, 5 and 6 removed).
pub const UCI7_CLASSES: [usize; 7] = [1, 2, 3, 4, 7, 8, 9];

pub const TWITTER_VIEWS: [&str; 6] = [
    "EgoTweets",
    "MentionTweets",
    "FriendTweets",
    "FollowersTweets",
    "FriendNetwork",
    "FollowerNetwork",
];
pub const TWITTER_DIM: usize = 1000;
/// EgoTweets, FollowersTweets and FriendNetwork.
pub const TWITTER_GRAPH_VIEWS: [usize; 3] = [0, 3, 4];

/// Symmetric, nonnegative sample graph in compressed sparse row form.
///
/// Column indices within a row are strictly increasing and explicit zeros are
/// never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Builds a graph from `(i, j, w)` triplets. Each triplet sets both `A[i,j]`
    /// and `A[j,i]`; repeated pairs keep the largest weight.
    pub fn from_triplets<I>(n: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (i, j, w) in triplets {
            if i >= n || j >= n {
                return Err(Error::arg(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::arg(format!("edge ({i}, {j}) has invalid weight {w}")));
            }
            if w == 0.0 {
                continue;
            }
            for (a, b) in [(i, j), (j, i)] {
                let e = rows[a].entry(b).or_insert(w);
                *e = e.max(w);
            }
        }
        Ok(Self::from_rows(n, rows))
    }

    fn from_rows(n: usize, rows: Vec<BTreeMap<usize, f64>>) -> Self {
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        indptr.push(0);
        for row in rows {
            for (j, w) in row {
                indices.push(j);
                weights.push(w);
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            weights,
        }
    }

    /// Converts a dense square matrix. It must be symmetric, finite and nonnegative.
    pub fn from_dense(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::arg(format!("adjacency must be square, got {:?}", a.dim())));
        }
        let mut rows = vec![BTreeMap::new(); n];
        for i in 0..n {
            for j in 0..n {
                let w = a[[i, j]];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::arg(format!("A[{i},{j}] = {w} is not a valid weight")));
                }
                if w != a[[j, i]] {
                    return Err(Error::arg(format!("adjacency is not symmetric at ({i}, {j})")));
                }
                if w != 0.0 {
                    rows[i].insert(j, w);
                }
            }
        }
        Ok(Self::from_rows(n, rows))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Stored `(column, weight)` entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(p) => self.weights[span.start + p],
            Err(_) => 0.0,
        }
    }

    /// Weighted degrees, self-loops included.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                a[[i, j]] = w;
            }
        }
        a
    }

    pub(crate) fn csr_parts(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.indptr, &self.indices, &self.weights)
    }
}

/// Follow relation used by the friend-recommendation protocol.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FollowRelation {
    /// Accounts followed by each user of the dataset, sorted.
    pub follows: Vec<Vec<u64>>,
    /// Follower counts of every account over the full, non-subsampled dataset.
    pub global_follower_counts: BTreeMap<u64, usize>,
}

impl FollowRelation {
    /// The `count` most followed accounts, ties broken by ascending account id.
    pub fn most_followed(&self, count: usize) -> Vec<u64> {
        let mut ranked: Vec<(u64, usize)> = self
            .global_follower_counts
            .iter()
            .map(|(&a, &c)| (a, c))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.into_iter().take(count).map(|(a, _)| a).collect()
    }

    pub fn followers_of(&self, account: u64) -> Vec<usize> {
        self.follows
            .iter()
            .enumerate()
            .filter(|(_, f)| f.binary_search(&account).is_ok())
            .map(|(u, _)| u)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MultiviewDataset {
    /// One `n x d_m` matrix per view.
    pub views: Vec<Array2<f64>>,
    pub names: Vec<String>,
    pub labels: Option<Vec<usize>>,
    pub adjacency: Adjacency,
    /// Row index of each sample in the source files.
    pub sample_ids: Vec<usize>,
    pub follows: Option<FollowRelation>,
}

impl MultiviewDataset {
    pub fn new(views: Vec<Array2<f64>>, names: Vec<String>, labels: Option<Vec<usize>>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::arg("a dataset needs at least one view"));
        }
        if names.len() != views.len() {
            return Err(Error::arg(format!(
                "{} view names given for {} views",
                names.len(),
                views.len()
            )));
        }
        let n = views[0].nrows();
        for (m, v) in views.iter().enumerate() {
            if v.nrows() != n {
                return Err(Error::arg(format!(
                    "view {m} has {} samples, view 0 has {n}",
                    v.nrows()
                )));
            }
            if v.ncols() == 0 {
                return Err(Error::arg(format!("view {m} has no features")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::arg(format!("{} labels for {n} samples", l.len())));
            }
        }
        Ok(Self {
            views,
            names,
            labels,
            adjacency: Adjacency::empty(n),
            sample_ids: (0..n).collect(),
            follows: None,
        })
    }

    pub fn n(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.ncols()).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.labels
            .as_ref()
            .map(|l| l.iter().collect::<BTreeSet<_>>().len())
            .unwrap_or(0)
    }

    /// Column-wise concatenation of the selected views (`n x sum d_m`).
    pub fn concat_views(&self, which: &[usize]) -> Array2<f64> {
        let parts: Vec<_> = which.iter().map(|&m| self.views[m].view()).collect();
        concatenate(Axis(1), &parts).expect("views share the sample axis")
    }

    pub fn concat_all(&self) -> Array2<f64> {
        let all: Vec<usize> = (0..self.n_views()).collect();
        self.concat_views(&all)
    }

    pub fn with_adjacency(mut self, adjacency: Adjacency) -> Result<Self> {
        if adjacency.n() != self.n() {
            return Err(Error::arg(format!(
                "adjacency has {} nodes, dataset has {} samples",
                adjacency.n(),
                self.n()
            )));
        }
        self.adjacency = adjacency;
        Ok(self)
    }

    /// Restriction to the given samples, in the given order. The adjacency is
    /// restricted accordingly.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let views = self.views.iter().map(|v| v.select(Axis(0), indices)).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        let adjacency = crate::graph::batch_subgraph(&self.adjacency, indices)?;
        let follows = self.follows.as_ref().map(|f| FollowRelation {
            follows: indices.iter().map(|&i| f.follows[i].clone()).collect(),
            global_follower_counts: f.global_follower_counts.clone(),
        });
        Ok(Self {
            views,
            names: self.names.clone(),
            labels,
            adjacency,
            sample_ids: indices.iter().map(|&i| self.sample_ids[i]).collect(),
            follows,
        })
    }
}

fn parse_numeric_table(path: &Path, expected_cols: Option<usize>) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut data = Vec::new();
    let mut cols = expected_cols;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let start = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                Error::load(path, format!("line {}: non-numeric token {tok:?}", lineno + 1))
            })?;
            data.push(v);
        }
        let width = data.len() - start;
        match cols {
            Some(c) if c != width => {
                return Err(Error::load(
                    path,
                    format!("line {}: expected {c} values, found {width}", lineno + 1),
                ))
            }
            None => cols = Some(width),
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::load(path, e.to_string()))
}

/// Loads the six-view UCI handwritten digits data, keeping the listed classes.
///
/// The files hold 2000 rows in blocks of 200 per digit, digits in ascending
/// order. The returned adjacency is empty.
pub fn load_uci(data_dir: &Path, keep_classes: &BTreeSet<usize>) -> Result<MultiviewDataset> {
    if keep_classes.is_empty() || keep_classes.iter().any(|&c| c > 9) {
        return Err(Error::arg(format!("keep_classes must be a nonempty subset of 0..=9, got {keep_classes:?}")));
    }
    let rows: Vec<usize> = (0..UCI_ROWS)
        .filter(|r| keep_classes.contains(&(r / UCI_CLASS_BLOCK)))
        .collect();
    let mut views = Vec::with_capacity(UCI_VIEWS.len());
    for (file, dim) in UCI_VIEWS {
        let path = data_dir.join(file);
        if !path.is_file() {
            return Err(Error::load(&path, "file not found"));
        }
        let table = parse_numeric_table(&path, Some(dim))?;
        if table.nrows() != UCI_ROWS {
            return Err(Error::load(
                &path,
                format!("expected {UCI_ROWS} rows, found {}", table.nrows()),
            ));
        }
        views.push(table.select(Axis(0), &rows));
    }
    let labels = rows.iter().map(|r| r / UCI_CLASS_BLOCK).collect();
    let names = UCI_VIEWS.iter().map(|(f, _)| f.to_string()).collect();
    let mut ds = MultiviewDataset::new(views, names, Some(labels))?;
    ds.sample_ids = rows;
    Ok(ds)
}

/// Loads the six-view Twitter data.
///
/// Layout: `<dir>/<ViewName>.txt` for each name in [`TWITTER_VIEWS`] (one user
/// per line, 1000 whitespace-separated values) and `<dir>/follower_edges`
/// with one `user_row account_id` pair per line. With `subsample`, that many
/// users are drawn uniformly without replacement and kept in ascending order.
pub fn load_twitter(data_dir: &Path, subsample: Option<usize>, seed: u64) -> Result<MultiviewDataset> {
    load_twitter_with_dim(data_dir, subsample, seed, TWITTER_DIM)
}

pub(crate) fn load_twitter_with_dim(
    data_dir: &Path,
    subsample: Option<usize>,
    seed: u64,
    dim: usize,
) -> Result<MultiviewDataset> {
    let mut views = Vec::with_capacity(TWITTER_VIEWS.len());
    for name in TWITTER_VIEWS {
        let path = data_dir.join(format!("{name}.txt"));
        if !path.is_file() {
            return Err(Error::load(&path, "file not found"));
        }
        let table = parse_numeric_table(&path, Some(dim))?;
        if let Some(first) = views.first() {
            let first: &Array2<f64> = first;
            if table.nrows() != first.nrows() {
                return Err(Error::load(
                    &path,
                    format!("{} users, expected {}", table.nrows(), first.nrows()),
                ));
            }
        }
        views.push(table);
    }
    let n = views[0].nrows();

    let edges_path = data_dir.join("follower_edges");
    let text = fs::read_to_string(&edges_path).map_err(|e| Error::load(&edges_path, e.to_string()))?;
    let mut follows = vec![BTreeSet::new(); n];
    for (lineno, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        let (Some(u), Some(a)) = (toks.next(), toks.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::load(&edges_path, format!("line {}: expected two fields", lineno + 1)));
        };
        let bad = |t: &str| Error::load(&edges_path, format!("line {}: bad id {t:?}", lineno + 1));
        let u: usize = u.parse().map_err(|_| bad(u))?;
        let a: u64 = a.parse().map_err(|_| bad(a))?;
        if u >= n {
            return Err(Error::load(&edges_path, format!("line {}: user {u} out of range", lineno + 1)));
        }
        follows[u].insert(a);
    }
    let mut counts = BTreeMap::new();
    for f in &follows {
        for &a in f {
            *counts.entry(a).or_insert(0usize) += 1;
        }
    }
    let relation = FollowRelation {
        follows: follows.into_iter().map(|f| f.into_iter().collect()).collect(),
        global_follower_counts: counts,
    };

    let names = TWITTER_VIEWS.iter().map(|s| s.to_string()).collect();
    let mut ds = MultiviewDataset::new(views, names, None)?;
    ds.follows = Some(relation);
    match subsample {
        None => Ok(ds),
        Some(s) if s > n => Err(Error::arg(format!("subsample {s} exceeds {n} users"))),
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, n, s).into_vec();
            picked.sort_unstable();
            ds.subset(&picked)
        }
    }
}

/// Centers every feature, then divides each view by its largest absolute entry.
pub fn preprocess_views(dataset: &MultiviewDataset) -> MultiviewDataset {
    let mut out = dataset.clone();
    for (m, view) in out.views.iter_mut().enumerate() {
        let mean = view.mean_axis(Axis(0)).expect("views have samples");
        *view -= &mean;
        let max_abs = view.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if max_abs > 0.0 {
            view.mapv_inplace(|x| x / max_abs);
        } else {
            warn!("view {m} ({}) is constant after centering; left unscaled", dataset.names[m]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::arg(format!("unknown metric {other:?}"))),
        }
    }
}

fn pair_distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        Metric::Cosine => {
            let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                ab += x * y;
                aa += x * x;
                bb += y * y;
            }
            if aa == 0.0 || bb == 0.0 {
                1.0
            } else {
                1.0 - ab / (aa.sqrt() * bb.sqrt())
            }
        }
    }
}

/// Binary kNN graph over the rows of `points`: `i ~ j` iff `j` is among the
/// `k` nearest of `i` or vice versa. Equal distances are ranked by ascending
/// index. No self-loops.
pub fn knn_graph(points: ArrayView2<f64>, k: usize, metric: Metric) -> Result<Adjacency> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::arg("k must be positive"));
    }
    if k >= n {
        return Err(Error::arg(format!("k = {k} must be smaller than n = {n}")));
    }
    let rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut dist = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pair_distance(&rows[i], &rows[j], metric);
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }
    let mut edges = Vec::with_capacity(n * k);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let row = dist.row(i);
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        edges.extend(order[..k].iter().map(|&j| (i, j, 1.0)));
    }
    Adjacency::from_triplets(n, edges)
}

/// kNN graph on the concatenation of all views.
pub fn build_knn_graph(dataset: &MultiviewDataset, k: usize, metric: Metric) -> Result<Adjacency> {
    knn_graph(dataset.concat_all().view(), k, metric)
}

/// Divides all weights by the largest one (when positive) and sets the diagonal to 1.
pub fn normalize_adjacency(a: &Adjacency) -> Adjacency {
    let max = a.max_weight();
    let scale = if max > 0.0 { max } else { 1.0 };
    let rows = (0..a.n())
        .map(|i| {
            let mut row: BTreeMap<usize, f64> = a.row(i).map(|(j, w)| (j, w / scale)).collect();
            row.insert(i, 1.0);
            row
        })
        .collect();
    Adjacency::from_rows(a.n(), rows)
}

/// Assignment of samples to `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldSplit {
    /// `(train, test)` sample indices for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train) = (0..self.assignments.len()).partition(|&i| self.assignments[i] == f);
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Random permutation of `0..n` cut into `k` folds whose sizes differ by at most one.
pub fn split_folds(n: usize, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 || k > n {
        return Err(Error::arg(format!("fold count must satisfy 1 < k <= n, got k = {k}, n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldSplit { k, assignments })
}

/// Folds drawn independently within every class, so that each class is spread
/// over as many folds as it has members.
pub fn split_folds_stratified(labels: &[usize], k: usize, seed: u64) -> Result<FoldSplit> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::arg(format!("fold count must satisfy 1 < k <= n, got k = {k}, n = {n}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; n];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignments[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldSplit { k, assignments })
}

/// Count of each label value.
pub fn label_histogram(labels: &[usize]) -> HashMap<usize, usize> {
    let mut h = HashMap::new();
    for &l in labels {
        *h.entry(l).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn dataset(views: Vec<Array2<f64>>) -> MultiviewDataset {
        let names = (0..views.len()).map(|m| format!("v{m}")).collect();
        MultiviewDataset::new(views, names, None).unwrap()
    }

    #[test]
    fn preprocess_centers_then_scales() {
        // one feature observed on two samples: [1, 3]
        let ds = dataset(vec![array![[1.0], [3.0]]]);
        let out = preprocess_views(&ds);
        assert_eq!(out.views[0], array![[-1.0], [1.0]]);
    }

    #[test]
    fn preprocess_fixed_point() {
        let v = array![[-1.0, 0.5], [1.0, -0.5]];
        let out = preprocess_views(&dataset(vec![v.clone()]));
        assert_eq!(out.views[0], v);
    }

    #[test]
    fn preprocess_constant_view_stays_centered() {
        let out = preprocess_views(&dataset(vec![array![[5.0], [5.0]]]));
        assert_eq!(out.views[0], array![[0.0], [0.0]]);
    }

    #[test]
    fn knn_collinear_points() {
        let pts = array![[0.0], [1.0], [2.0]];
        let a = knn_graph(pts.view(), 1, Metric::Euclidean).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 2), 1.0);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn knn_complete_when_k_is_n_minus_one() {
        let pts = array![[0.0, 1.0], [3.0, 1.0], [2.0, -4.0], [7.0, 0.5]];
        let a = knn_graph(pts.view(), 3, Metric::Euclidean).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn knn_duplicates_tie_break_by_index() {
        // 0 and 1 coincide; 2 is equidistant from both and must pick 0.
        let pts = array![[0.0], [0.0], [1.0]];
        let a = knn_graph(pts.view(), 1, Metric::Euclidean).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(2, 0), 1.0);
        assert_eq!(a.get(2, 1), 0.0);
    }

    #[test]
    fn knn_rejects_bad_k() {
        let pts = array![[0.0], [1.0]];
        assert!(knn_graph(pts.view(), 0, Metric::Euclidean).is_err());
        assert!(knn_graph(pts.view(), 2, Metric::Euclidean).is_err());
    }

    #[test]
    fn normalize_examples() {
        let a = Adjacency::from_dense(array![[0.0, 2.0], [2.0, 0.0]].view()).unwrap();
        assert_eq!(normalize_adjacency(&a).to_dense(), array![[1.0, 1.0], [1.0, 1.0]]);
        let z = Adjacency::empty(3);
        assert_eq!(normalize_adjacency(&z).to_dense(), Array2::<f64>::eye(3));
        let once = normalize_adjacency(&a);
        assert_eq!(normalize_adjacency(&once), once);
    }

    #[test]
    fn from_dense_rejects_asymmetry() {
        assert!(Adjacency::from_dense(array![[0.0, 1.0], [0.5, 0.0]].view()).is_err());
        assert!(Adjacency::from_dense(array![[0.0, -1.0], [-1.0, 0.0]].view()).is_err());
    }

    #[test]
    fn folds_examples() {
        let f = split_folds(10, 10, 3).unwrap();
        assert!(f.fold_sizes().iter().all(|&s| s == 1));
        let mut sizes = split_folds(10, 3, 3).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
        assert_eq!(split_folds(10, 3, 9).unwrap(), split_folds(10, 3, 9).unwrap());
        assert!(split_folds(3, 4, 0).is_err());
        assert!(split_folds(3, 1, 0).is_err());
    }

    #[test]
    fn stratified_folds_cover_every_class_in_training() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let f = split_folds_stratified(&labels, 10, 1).unwrap();
        for fold in 0..10 {
            let (train, _) = f.split(fold);
            let classes: BTreeSet<_> = train.iter().map(|&i| labels[i]).collect();
            assert_eq!(classes.len(), 3);
        }
    }

    #[test]
    fn dataset_invariants_are_checked() {
        let r = MultiviewDataset::new(
            vec![Array2::zeros((3, 2)), Array2::zeros((4, 2))],
            vec!["a".into(), "b".into()],
            None,
        );
        assert!(r.is_err());
        let r = MultiviewDataset::new(vec![Array2::zeros((3, 2))], vec!["a".into()], Some(vec![0, 1]));
        assert!(r.is_err());
        assert!(MultiviewDataset::new(vec![], vec![], None).is_err());
    }

    #[test]
    fn uci_loader_reports_bad_tokens() {
        let dir = tempfile::tempdir().unwrap();
        for (file, dim) in UCI_VIEWS {
            let mut f = fs::File::create(dir.path().join(file)).unwrap();
            for r in 0..UCI_ROWS {
                let line: Vec<String> = (0..dim).map(|c| format!("{}", r + c)).collect();
                writeln!(f, "{}", line.join(" ")).unwrap();
            }
        }
        let all: BTreeSet<usize> = (0..10).collect();
        let ds = load_uci(dir.path(), &all).unwrap();
        assert_eq!(ds.n(), 2000);

        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(dir.path().join("mfeat-mor"))
            .unwrap();
        writeln!(f, "1 2 3 x 5 6").unwrap();
        let err = load_uci(dir.path(), &all).unwrap_err().to_string();
        assert!(err.contains("non-numeric"), "{err}");

        fs::remove_file(dir.path().join("mfeat-kar")).unwrap();
        let err = load_uci(dir.path(), &all).unwrap_err().to_string();
        assert!(err.contains("mfeat-kar"), "{err}");
    }

    #[test]
    fn uci_loader_counts_rows() {
        let dir = tempfile::tempdir().unwrap();
        for (file, dim) in UCI_VIEWS {
            let mut f = fs::File::create(dir.path().join(file)).unwrap();
            for _ in 0..10 {
                writeln!(f, "{}", vec!["1"; dim].join(" ")).unwrap();
            }
        }
        let err = load_uci(dir.path(), &BTreeSet::from([3])).unwrap_err().to_string();
        assert!(err.contains("expected 2000 rows"), "{err}");
    }

    fn write_twitter(dir: &Path, n: usize, dim: usize) {
        for (m, name) in TWITTER_VIEWS.iter().enumerate() {
            let mut f = fs::File::create(dir.join(format!("{name}.txt"))).unwrap();
            for u in 0..n {
                let line: Vec<String> = (0..dim).map(|c| format!("{}", (u * 7 + c + m) % 5)).collect();
                writeln!(f, "{}", line.join(" ")).unwrap();
            }
        }
        let mut f = fs::File::create(dir.join("follower_edges")).unwrap();
        for u in 0..n {
            writeln!(f, "{u} 100").unwrap();
            if u % 2 == 0 {
                writeln!(f, "{u} 200").unwrap();
            }
        }
    }

    #[test]
    fn twitter_subsample_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        write_twitter(dir.path(), 40, 4);
        let a = load_twitter_with_dim(dir.path(), Some(10), 5, 4).unwrap();
        let b = load_twitter_with_dim(dir.path(), Some(10), 5, 4).unwrap();
        assert_eq!(a.n(), 10);
        assert_eq!(a.sample_ids, b.sample_ids);
        let rel = a.follows.as_ref().unwrap();
        assert_eq!(rel.global_follower_counts[&100], 40);
        assert_eq!(rel.most_followed(1), vec![100]);
        assert!(load_twitter_with_dim(dir.path(), Some(41), 5, 4).is_err());
        let full = load_twitter_with_dim(dir.path(), None, 0, 4).unwrap();
        assert_eq!(full.n(), 40);
        assert_eq!(full.view_dims(), vec![4; 6]);
    }

    #[test]
    fn twitter_shape_mismatch_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        write_twitter(dir.path(), 5, 4);
        let err = load_twitter_with_dim(dir.path(), None, 0, 3).unwrap_err();
        assert!(matches!(err, Error::Load { .. }));
    }
}
