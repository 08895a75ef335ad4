//! Experiment pipeline: load, preprocess, build the graph, fit a method,
//! embed, evaluate and write the outputs. Also grid search and embedding
//! export.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::baselines::{gmcca, graph_pca, mcca, pca, Ridge};
use crate::data::{
    knn_graph, load_twitter, load_uci, normalize_adjacency, preprocess_views, split_folds, Metric, MultiviewDataset,
    TWITTER_GRAPH_VIEWS, UCI7_CLASSES,
};
use crate::error::{Error, Result};
use crate::eval::{
    best_svm_accuracy, kmeans_ari, recommend_friends, spectral_ari, EvalReport, Kernel, RecommendationTask,
    SpectralParams,
};
use crate::graph::{laplacian, Laplacian};
use crate::model::{embed, load_checkpoint, save_checkpoint, train, TrainConfig, TrainError, Trained};

macro_rules! name_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => {
                        let allowed: Vec<&str> = Self::ALL.iter().map(|v| v.as_str()).collect();
                        Err(Error::Config(format!(
                            "unknown {} {other:?}; expected one of {}",
                            stringify!($name).to_lowercase(),
                            allowed.join(", ")
                        )))
                    }
                }
            }
        }
    };
}

name_enum!(DatasetKind { Uci7 => "uci7", Uci10 => "uci10", Twitter => "twitter" });
name_enum!(Method { Pca => "pca", Gpca => "gpca", Mcca => "mcca", Gmcca => "gmcca", Mvgcca => "mvgcca" });
name_enum!(Task { Classify => "classify", Cluster => "cluster", Recommend => "recommend", All => "all" });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub k: usize,
    pub metric: Metric,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k: 10,
            metric: Metric::Euclidean,
        }
    }
}

/// Settings of the algebraic methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Graph weight; `None` uses [`default_gamma`].
    pub gamma: Option<f64>,
    pub eps: Ridge,
}

/// Graph weight used when none is configured, the best grid value on uci7.
pub fn default_gamma(method: Method) -> f64 {
    match method {
        Method::Gpca => 1e4,
        Method::Gmcca => 1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    /// Seed of the fold assignment, shared by all methods.
    pub fold_seed: u64,
    pub svm_kernel: Kernel,
    pub kmeans_restarts: usize,
    pub spectral: SpectralParams,
    pub accounts: usize,
    pub seeds_per_account: usize,
    pub shortlist: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            fold_seed: 0,
            svm_kernel: Kernel::Linear,
            kmeans_restarts: 10,
            spectral: SpectralParams::default(),
            accounts: 20,
            seeds_per_account: 10,
            shortlist: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub method: Method,
    pub task: Task,
    pub data_dir: PathBuf,
    /// Output directory; nothing is written when absent.
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub latent_dim: usize,
    /// Users drawn from the Twitter data.
    pub twitter_subsample: Option<usize>,
    pub graph: GraphConfig,
    pub baseline: BaselineConfig,
    /// Model settings; `latent_dim` and `seed` are taken from the top level.
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Uci7,
            method: Method::Mvgcca,
            task: Task::All,
            data_dir: PathBuf::from("data/uci"),
            out: None,
            seed: 0,
            latent_dim: 3,
            twitter_subsample: Some(2506),
            graph: GraphConfig::default(),
            baseline: BaselineConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Copy with the top-level `latent_dim` and `seed` pushed into the model
    /// settings and the graph weight filled in.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.train.latent_dim = c.latent_dim;
        c.train.seed = c.seed;
        if matches!(c.method, Method::Gpca | Method::Gmcca) && c.baseline.gamma.is_none() {
            c.baseline.gamma = Some(default_gamma(c.method));
        }
        c
    }

    pub fn gamma(&self) -> f64 {
        self.baseline.gamma.unwrap_or_else(|| default_gamma(self.method))
    }

    pub fn validate(&self) -> Result<()> {
        let labelled = self.dataset != DatasetKind::Twitter;
        match self.task {
            Task::Recommend if self.dataset != DatasetKind::Twitter => {
                return Err(Error::Config(format!(
                    "task recommend requires dataset twitter, got {}",
                    self.dataset
                )))
            }
            Task::Classify | Task::Cluster if !labelled => {
                return Err(Error::Config(format!("task {} needs labels; {} has none", self.task, self.dataset)))
            }
            _ => {}
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if self.graph.k == 0 {
            return Err(Error::Config("graph.k must be positive".into()));
        }
        if self.eval.folds < 2 {
            return Err(Error::Config("eval.folds must be at least 2".into()));
        }
        if let Some(g) = self.baseline.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::Config(format!("gamma must be finite and nonnegative, got {g}")));
            }
        }
        self.resolved().train.validate()
    }

    /// One-line summary of the method settings.
    pub fn detail(&self) -> String {
        match self.method {
            Method::Pca | Method::Mcca => String::new(),
            Method::Gpca | Method::Gmcca => format!("gamma={}", self.gamma()),
            Method::Mvgcca => format!(
                "lr={} epochs={} dropout={} hidden={} batch={}",
                self.train.learning_rate, self.train.epochs, self.train.dropout, self.train.hidden, self.train.batch_size
            ),
        }
    }
}

/// A preprocessed dataset with its normalized graph.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: MultiviewDataset,
    pub laplacian: Laplacian,
}

/// Loads the configured dataset without preprocessing.
pub fn load_dataset(config: &ExperimentConfig) -> Result<MultiviewDataset> {
    match config.dataset {
        DatasetKind::Uci7 => load_uci(&config.data_dir, &UCI7_CLASSES.into_iter().collect()),
        DatasetKind::Uci10 => load_uci(&config.data_dir, &(0..10).collect::<BTreeSet<_>>()),
        DatasetKind::Twitter => load_twitter(&config.data_dir, config.twitter_subsample, config.seed),
    }
}

/// Preprocesses the views and normalizes the graph. A dataset without edges
/// gets the kNN graph of its views (for Twitter, of the graph views only).
pub fn prepare_dataset(raw: &MultiviewDataset, config: &ExperimentConfig) -> Result<Prepared> {
    let ds = preprocess_views(raw);
    let adjacency = if raw.adjacency.nnz() > 0 {
        raw.adjacency.clone()
    } else {
        let points = if config.dataset == DatasetKind::Twitter {
            ds.concat_views(&TWITTER_GRAPH_VIEWS)
        } else {
            ds.concat_all()
        };
        knn_graph(points.view(), config.graph.k, config.graph.metric)?
    };
    let adjacency = normalize_adjacency(&adjacency);
    let laplacian = laplacian(&adjacency);
    Ok(Prepared {
        dataset: ds.with_adjacency(adjacency)?,
        laplacian,
    })
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    prepare_dataset(&load_dataset(config)?, config)
}

/// Embedding of one method together with the trained model, if any.
#[derive(Debug, Clone)]
pub struct Fitted {
    /// `n x d`, one row per sample.
    pub embedding: Array2<f64>,
    pub trained: Option<Trained<f32>>,
}

pub fn fit_method(prepared: &Prepared, config: &ExperimentConfig) -> Result<Fitted> {
    let config = config.resolved();
    let ds = &prepared.dataset;
    let d = config.latent_dim;
    let eps = config.baseline.eps;
    let linear = |e: crate::baselines::LinearEmbedding| Fitted {
        embedding: e.scores(),
        trained: None,
    };
    Ok(match config.method {
        Method::Pca => linear(pca(ds, d)?),
        Method::Mcca => linear(mcca(ds, d, eps)?),
        Method::Gpca => linear(graph_pca(ds, &prepared.laplacian, config.gamma(), d)?),
        Method::Gmcca => linear(gmcca(ds, &prepared.laplacian, config.gamma(), d, eps)?),
        Method::Mvgcca => {
            let trained = train::<f32>(ds, &config.train).map_err(|e| match e {
                TrainError::Invalid(e) => e,
                TrainError::Diverged(d) => d.fault,
            })?;
            let embedding = embed(ds, &trained.params, &config.train)?;
            Fitted {
                embedding,
                trained: Some(trained),
            }
        }
    })
}

fn labels_of<'a>(ds: &'a MultiviewDataset, task: &str) -> Result<&'a [usize]> {
    ds.labels
        .as_deref()
        .ok_or_else(|| Error::Config(format!("task {task} needs labels")))
}

/// Fold-averaged SVM accuracy of an embedding, best over the C grid.
pub fn classification_accuracy(z: ArrayView2<f64>, labels: &[usize], eval: &EvalConfig) -> Result<((f64, f64), f64)> {
    let folds = split_folds(labels.len(), eval.folds, eval.fold_seed)?;
    best_svm_accuracy(z, labels, &folds, eval.svm_kernel)
}

/// Evaluates an embedding on the configured task.
pub fn evaluate(z: ArrayView2<f64>, prepared: &Prepared, config: &ExperimentConfig) -> Result<EvalReport> {
    let config = config.resolved();
    let ds = &prepared.dataset;
    let mut report = EvalReport::new(config.method.as_str(), config.dataset.as_str(), config.latent_dim, config.seed);
    report.detail = config.detail();
    report.config = serde_json::to_value(&config).map_err(|e| Error::Config(e.to_string()))?;
    let all = config.task == Task::All;
    let classify = config.task == Task::Classify || (all && ds.labels.is_some());
    let cluster = config.task == Task::Cluster || (all && ds.labels.is_some());
    let recommend = config.task == Task::Recommend || (all && ds.follows.is_some());
    if classify {
        let labels = labels_of(ds, "classify")?;
        let (acc, c) = classification_accuracy(z, labels, &config.eval)?;
        report.insert("accuracy", acc);
        let sep = if report.detail.is_empty() { "" } else { " " };
        report.detail = format!("{}{sep}svm_c={c}", report.detail);
    }
    if cluster {
        let labels = labels_of(ds, "cluster")?;
        let k = ds.n_classes();
        report.insert("ari", kmeans_ari(z, labels, k, config.eval.kmeans_restarts, config.seed)?);
        report.insert("ari2", spectral_ari(z, labels, k, &config.eval.spectral, config.seed)?);
    }
    if recommend {
        let follows = ds
            .follows
            .as_ref()
            .ok_or_else(|| Error::Config("task recommend needs a follow relation".into()))?;
        let mut task = RecommendationTask::standard(follows);
        task.accounts = follows.most_followed(config.eval.accounts);
        task.seeds_per_account = config.eval.seeds_per_account;
        task.shortlist = config.eval.shortlist;
        let scores = recommend_friends(z, follows, &task, config.seed)?;
        report.insert("precision", (scores.precision, 0.0));
        report.insert("recall", (scores.recall, 0.0));
        report.insert("mrr", (scores.mrr, 0.0));
    }
    report.validate()?;
    Ok(report)
}

/// Result of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: EvalReport,
    pub fitted: Fitted,
}

/// Fits and evaluates on an already prepared dataset; writes nothing.
pub fn run_prepared(prepared: &Prepared, config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let fitted = fit_method(prepared, config)?;
    let report = evaluate(fitted.embedding.view(), prepared, config)?;
    Ok(RunOutput { report, fitted })
}

/// Names of the files written into the output directory.
pub mod outputs {
    pub const REPORT_TABLE: &str = "report.txt";
    pub const REPORT_RECORDS: &str = "report.tsv";
    pub const EMBEDDING: &str = "embedding.tsv";
    pub const CHECKPOINT: &str = "model.ckpt";
    pub const TRAINING_LOG: &str = "train_log.jsonl";
    pub const GRID: &str = "grid.tsv";
    pub const CONFIG: &str = "config.toml";
}

fn write_outputs(dir: &Path, prepared: &Prepared, config: &ExperimentConfig, run: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let config = config.resolved();
    run.report
        .write(&dir.join(outputs::REPORT_TABLE), &dir.join(outputs::REPORT_RECORDS))?;
    std::fs::write(dir.join(outputs::CONFIG), config.to_toml_string())?;
    write_embedding(
        &dir.join(outputs::EMBEDDING),
        run.fitted.embedding.view(),
        &prepared.dataset,
        &config,
    )?;
    if let Some(trained) = &run.fitted.trained {
        save_checkpoint(&dir.join(outputs::CHECKPOINT), &trained.params, &config.train)?;
        trained.log.write_jsonl(&dir.join(outputs::TRAINING_LOG))?;
    }
    Ok(())
}

/// Runs the whole pipeline and writes the outputs when `config.out` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let prepared = prepare(config)?;
    let run = run_prepared(&prepared, config)?;
    if let Some(dir) = &config.out {
        write_outputs(dir, &prepared, config, &run)?;
    }
    Ok(run.report)
}

/// Values to combine in a grid search; empty lists keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub gamma: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
    pub dropout: Vec<f64>,
    pub hidden: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub latent_dim: Vec<usize>,
    pub knn_k: Vec<usize>,
}

type Setter = Box<dyn Fn(&mut ExperimentConfig)>;

impl Grid {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("grid: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::from_toml_str(&text)
    }

    fn axes(&self) -> Vec<Vec<(String, Setter)>> {
        fn axis<T: Copy + fmt::Display + 'static>(
            name: &str,
            values: &[T],
            set: fn(&mut ExperimentConfig, T),
        ) -> Vec<(String, Setter)> {
            values
                .iter()
                .map(|&v| (format!("{name}={v}"), Box::new(move |c: &mut ExperimentConfig| set(c, v)) as Setter))
                .collect()
        }
        [
            axis("gamma", &self.gamma, |c, v| c.baseline.gamma = Some(v)),
            axis("learning_rate", &self.learning_rate, |c, v| c.train.learning_rate = v),
            axis("epochs", &self.epochs, |c, v| c.train.epochs = v),
            axis("dropout", &self.dropout, |c, v| c.train.dropout = v),
            axis("hidden", &self.hidden, |c, v| c.train.hidden = v),
            axis("batch_size", &self.batch_size, |c, v| c.train.batch_size = v),
            axis("latent_dim", &self.latent_dim, |c, v| c.latent_dim = v),
            axis("knn_k", &self.knn_k, |c, v| c.graph.k = v),
        ]
        .into_iter()
        .filter(|a| !a.is_empty())
        .collect()
    }

    /// Every combination, first axis varying slowest, with a description.
    pub fn points(&self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let mut points = vec![(String::new(), base.clone())];
        for axis in self.axes() {
            let mut next = Vec::with_capacity(points.len() * axis.len());
            for (desc, config) in &points {
                for (label, set) in &axis {
                    let mut c = config.clone();
                    set(&mut c);
                    let desc = if desc.is_empty() { label.clone() } else { format!("{desc} {label}") };
                    next.push((desc, c));
                }
            }
            points = next;
        }
        points
    }
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub description: String,
    pub config: ExperimentConfig,
    /// Accuracy of each run.
    pub accuracies: Vec<f64>,
    pub error: Option<String>,
}

impl GridPoint {
    pub fn mean_accuracy(&self) -> Option<f64> {
        if self.error.is_some() || self.accuracies.is_empty() {
            None
        } else {
            Some(self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64)
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub points: Vec<GridPoint>,
    /// Index of the selected point.
    pub best: usize,
    pub best_config: ExperimentConfig,
    /// Report of the selected configuration re-run with the base seed and task.
    pub report: EvalReport,
    pub run: RunOutput,
}

impl GridOutcome {
    /// Tab-separated summary, one row per point.
    pub fn to_records(&self) -> String {
        let mut out = String::from("index\tsetting\tmean_accuracy\taccuracies\terror\n");
        for (i, p) in self.points.iter().enumerate() {
            let accs: Vec<String> = p.accuracies.iter().map(|a| a.to_string()).collect();
            out.push_str(&format!(
                "{i}\t{}\t{}\t{}\t{}\n",
                p.description,
                p.mean_accuracy().map_or("nan".into(), |m| m.to_string()),
                accs.join(","),
                p.error.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

/// Evaluates every grid point with `runs` consecutive seeds on the prepared
/// data, selects the highest mean SVM accuracy (ties go to the lower index)
/// and re-runs the winner with the base seed and task. Points that fail are
/// recorded and skipped. The deterministic baselines are fitted once per point.
pub fn grid_search_prepared(
    prepare_for: &mut dyn FnMut(&ExperimentConfig) -> Result<Prepared>,
    config: &ExperimentConfig,
    grid: &Grid,
    runs: usize,
) -> Result<GridOutcome> {
    if runs == 0 {
        return Err(Error::Config("grid search needs at least one run per point".into()));
    }
    config.validate()?;
    let candidates = grid.points(config);
    let mut points = Vec::with_capacity(candidates.len());
    for (description, point) in candidates {
        let mut record = GridPoint {
            description,
            config: point.clone(),
            accuracies: Vec::new(),
            error: None,
        };
        let seeds = if point.method == Method::Mvgcca { runs } else { 1 };
        let outcome = (|| -> Result<Vec<f64>> {
            point.validate()?;
            let prepared = prepare_for(&point)?;
            let labels = labels_of(&prepared.dataset, "grid search")?.to_vec();
            let mut accs = Vec::with_capacity(seeds);
            for r in 0..seeds {
                let mut c = point.clone();
                c.seed = point.seed.wrapping_add(r as u64);
                let fitted = fit_method(&prepared, &c)?;
                accs.push(classification_accuracy(fitted.embedding.view(), &labels, &c.eval)?.0 .0);
            }
            Ok(accs)
        })();
        match outcome {
            Ok(accs) => record.accuracies = accs,
            Err(e) => {
                log::warn!("grid point {} failed: {e}", record.description);
                record.error = Some(e.to_string());
            }
        }
        log::info!(
            "grid point {}: {:?}",
            record.description,
            record.mean_accuracy()
        );
        points.push(record);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        if let Some(m) = p.mean_accuracy() {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
    }
    let (best, _) = best.ok_or_else(|| Error::Numerical("every grid point failed".into()))?;
    let best_config = points[best].config.clone();
    let prepared = prepare_for(&best_config)?;
    let run = run_prepared(&prepared, &best_config)?;
    Ok(GridOutcome {
        points,
        best,
        best_config,
        report: run.report.clone(),
        run,
    })
}

/// Grid search over the configured dataset; writes the winner's outputs and
/// the grid summary when `config.out` is set.
pub fn grid_search(config: &ExperimentConfig, grid: &Grid, runs: usize) -> Result<GridOutcome> {
    config.validate()?;
    let raw = load_dataset(config)?;
    let mut cache: Vec<(GraphConfig, Prepared)> = Vec::new();
    let mut prepare_for = |c: &ExperimentConfig| -> Result<Prepared> {
        if let Some((_, p)) = cache.iter().find(|(g, _)| *g == c.graph) {
            return Ok(p.clone());
        }
        let p = prepare_dataset(&raw, c)?;
        cache.push((c.graph, p.clone()));
        Ok(p)
    };
    let outcome = grid_search_prepared(&mut prepare_for, config, grid, runs)?;
    if let Some(dir) = &config.out {
        let prepared = prepare_for(&outcome.best_config)?;
        write_outputs(dir, &prepared, &outcome.best_config, &outcome.run)?;
        std::fs::write(dir.join(outputs::GRID), outcome.to_records())?;
    }
    Ok(outcome)
}

/// Writes one row per sample: id, label (`-` when absent), then the `d`
/// coordinates, after a comment line holding the resolved configuration.
pub fn write_embedding(path: &Path, z: ArrayView2<f64>, ds: &MultiviewDataset, config: &ExperimentConfig) -> Result<()> {
    if z.nrows() != ds.n() {
        return Err(Error::arg(format!("embedding has {} rows for {} samples", z.nrows(), ds.n())));
    }
    let json = serde_json::to_string(&config.resolved()).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = format!("# config {json}\nid\tlabel");
    for j in 0..z.ncols() {
        out.push_str(&format!("\tz{j}"));
    }
    out.push('\n');
    for (i, row) in z.rows().into_iter().enumerate() {
        out.push_str(&ds.sample_ids[i].to_string());
        out.push('\t');
        match &ds.labels {
            Some(l) => out.push_str(&l[i].to_string()),
            None => out.push('-'),
        }
        for v in row {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Embedding file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub ids: Vec<usize>,
    pub labels: Option<Vec<usize>>,
    pub z: Array2<f64>,
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::load(path, "empty file"))?;
    let d = header.split('\t').count().saturating_sub(2);
    let (mut ids, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
    let mut unlabelled = false;
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = || Error::load(path, format!("data line {}: malformed", lineno + 1));
        if fields.len() != d + 2 {
            return Err(bad());
        }
        ids.push(fields[0].parse().map_err(|_| bad())?);
        if fields[1] == "-" {
            unlabelled = true;
        } else {
            labels.push(fields[1].parse().map_err(|_| bad())?);
        }
        for f in &fields[2..] {
            values.push(f.parse::<f64>().map_err(|_| bad())?);
        }
    }
    let z = Array2::from_shape_vec((ids.len(), d), values).map_err(|e| Error::load(path, e.to_string()))?;
    Ok(EmbeddingFile {
        ids,
        labels: if unlabelled { None } else { Some(labels) },
        z,
    })
}

/// Names the first model setting on which a checkpoint and the experiment
/// configuration disagree.
fn checkpoint_mismatch(stored: &TrainConfig, wanted: &TrainConfig) -> Option<&'static str> {
    let checks: [(&'static str, bool); 6] = [
        ("latent_dim", stored.latent_dim == wanted.latent_dim),
        ("hops", stored.hops == wanted.hops),
        ("layers", stored.layers == wanted.layers),
        ("hidden", stored.hidden == wanted.hidden),
        ("activation", stored.activation == wanted.activation),
        ("propagation", stored.propagation == wanted.propagation),
    ];
    checks.into_iter().find(|(_, ok)| !ok).map(|(name, _)| name)
}

/// Embeds the configured dataset with a trained checkpoint and writes it to
/// `out`. Returns the embedding.
pub fn export_embedding(config: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<Array2<f64>> {
    config.validate()?;
    if !checkpoint.is_file() {
        return Err(Error::Checkpoint(format!("{}: file not found", checkpoint.display())));
    }
    let (params, stored) = load_checkpoint::<f32>(checkpoint)?;
    let config = config.resolved();
    if let Some(field) = checkpoint_mismatch(&stored, &config.train) {
        return Err(Error::Checkpoint(format!(
            "checkpoint and configuration disagree on {field}"
        )));
    }
    let prepared = prepare(&config)?;
    if params.view_dims() != prepared.dataset.view_dims() {
        return Err(Error::Checkpoint(format!(
            "checkpoint and configuration disagree on view_dims: {:?} vs {:?}",
            params.view_dims(),
            prepared.dataset.view_dims()
        )));
    }
    let z = embed(&prepared.dataset, &params, &stored)?;
    write_embedding(out, z.view(), &prepared.dataset, &config)?;
    Ok(z)
}
