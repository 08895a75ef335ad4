use std::fmt::Debug;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Adjacency, MultiviewDataset};
use crate::error::{Error, Result};
use crate::graph::{batch_subgraph, propagation_operator};
use crate::model::adam::Adam;
use crate::model::config::{EmbedMode, TrainConfig};
use crate::model::elbo::{arch_of, elbo_and_gradients, elbo_with_noise, Batch, ElboTerms, LatentNoise};
use crate::model::latent::fuse_posteriors;
use crate::model::network::encode_view;
use crate::model::params::ModelParams;
use crate::real::Real;

/// Summed batch objectives of one training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub link: f64,
    pub recon: f64,
    pub kl: f64,
    pub neg_elbo: f64,
    pub wall_seconds: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    /// Objective of the initial parameters, see [`Trainer::objective`].
    pub initial: Option<ElboTerms>,
    /// Objective of the final parameters on the same batches and noise.
    pub last: Option<ElboTerms>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    /// One JSON object per line: the epochs, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("plain record"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "seed": self.seed,
            "initial_neg_elbo": self.initial.as_ref().map(ElboTerms::neg_elbo),
            "final_neg_elbo": self.last.as_ref().map(ElboTerms::neg_elbo),
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }
}

/// What was left when training produced a non-finite value.
#[derive(Debug)]
pub struct Divergence<F> {
    /// [`Error::TrainingFault`] naming the offending term.
    pub fault: Error,
    /// Parameters before the failing step.
    pub last_finite: ModelParams<F>,
    pub log: TrainingLog,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError<F: Debug> {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("training diverged: {}", .0.fault)]
    Diverged(Box<Divergence<F>>),
}

impl<F: Debug> From<TrainError<F>> for Error {
    fn from(e: TrainError<F>) -> Self {
        match e {
            TrainError::Invalid(e) => e,
            TrainError::Diverged(d) => d.fault,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained<F> {
    pub params: ModelParams<F>,
    pub log: TrainingLog,
}

/// Mean squared entry of every view.
fn view_scales(views: &[Array2<f64>]) -> Vec<f64> {
    views.iter().map(|v| v.mapv(|x| x * x).mean().unwrap_or(1.0)).collect()
}

/// Noise and dropout stream of one optimizer step.
pub fn step_rng(seed: u64, epoch: usize, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    rng.set_stream(((epoch as u64) << 32) | step as u64);
    rng
}

fn shuffle_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    rng.set_stream(epoch as u64);
    rng
}

/// Owns the parameters and optimizer state; one writer.
#[derive(Debug, Clone)]
pub struct Trainer<F> {
    config: TrainConfig,
    views: Vec<Array2<F>>,
    adjacency: Adjacency,
    params: ModelParams<F>,
    adam: Adam<F>,
    epoch: usize,
}

impl<F: Real> Trainer<F> {
    pub fn new(ds: &MultiviewDataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::init(&ds.view_dims(), &view_scales(&ds.views), &config, &mut rng);
        Self::with_params(ds, config, params)
    }

    pub fn with_params(ds: &MultiviewDataset, config: TrainConfig, params: ModelParams<F>) -> Result<Self> {
        config.validate()?;
        if params.view_dims() != ds.view_dims() {
            return Err(Error::arg(format!(
                "parameters expect views {:?}, dataset has {:?}",
                params.view_dims(),
                ds.view_dims()
            )));
        }
        if ds.adjacency.max_weight() > 1.0 {
            return Err(Error::arg("adjacency must be normalized to [0, 1] before training"));
        }
        let adam = Adam::new(&params, config.adam);
        Ok(Self {
            views: ds.views.iter().map(|v| v.mapv(F::of)).collect(),
            adjacency: ds.adjacency.clone(),
            params,
            adam,
            epoch: 0,
            config,
        })
    }

    pub fn params(&self) -> &ModelParams<F> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<F> {
        self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    /// Batches of the current epoch: a seeded shuffle cut into `batch_size`
    /// chunks, or all samples in order when one batch covers them.
    pub fn epoch_batches(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut order: Vec<usize> = (0..n).collect();
        if self.config.batch_size < n {
            order.shuffle(&mut shuffle_rng(self.config.seed, self.epoch));
        }
        order.chunks(self.config.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn assemble(&self, indices: &[usize]) -> Result<Batch<F>> {
        Batch::assemble(&self.views, &self.adjacency, indices, self.config.propagation)
    }

    /// One optimizer step on the given samples; `step` selects the noise stream.
    /// Parameters are left untouched when any term or gradient is non-finite.
    pub fn step(&mut self, indices: &[usize], step: usize) -> Result<ElboTerms> {
        let batch = self.assemble(indices)?;
        self.step_on(&batch, step)
    }

    pub fn step_on(&mut self, batch: &Batch<F>, step: usize) -> Result<ElboTerms> {
        let mut rng = step_rng(self.config.seed, self.epoch, step);
        let noise = LatentNoise::sample(batch.len(), &self.config, self.params.n_views(), &mut rng);
        let fault = |e: Error, epoch| match e {
            Error::NonFinite(term) => Error::TrainingFault { term, epoch, step },
            other => other,
        };
        let (terms, grads) = elbo_and_gradients(batch, &self.params, &self.config, &noise, Some(&mut rng))
            .map_err(|e| fault(e, self.epoch))?;
        self.adam.update(&mut self.params, &grads, self.config.learning_rate);
        if !self.params.all_finite() {
            return Err(Error::TrainingFault {
                term: "parameter update",
                epoch: self.epoch,
                step,
            });
        }
        Ok(terms)
    }

    /// Runs one epoch and returns the summed batch terms.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let start = Instant::now();
        let mut total = ElboTerms::zero(self.params.n_views());
        for (step, indices) in self.epoch_batches().iter().enumerate() {
            let terms = self.step(indices, step)?;
            total.accumulate(&terms);
        }
        let record = EpochRecord {
            epoch: self.epoch,
            link: total.link,
            recon: total.recon,
            kl: total.kl,
            neg_elbo: total.neg_elbo(),
            wall_seconds: start.elapsed().as_secs_f64(),
            seed: self.config.seed,
        };
        self.epoch += 1;
        Ok(record)
    }

    /// Objective of the current parameters summed over consecutive index
    /// chunks of `batch_size`, with dropout off and noise fixed by the seed.
    pub fn objective(&self) -> Result<ElboTerms> {
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(3));
        let mut total = ElboTerms::zero(self.params.n_views());
        let order: Vec<usize> = (0..n).collect();
        for indices in order.chunks(self.config.batch_size) {
            let batch = self.assemble(indices)?;
            let noise = LatentNoise::sample(batch.len(), &self.config, self.params.n_views(), &mut rng);
            total.accumulate(&elbo_with_noise(&batch, &self.params, &self.config, &noise)?);
        }
        Ok(total)
    }
}

/// Trains from fresh parameters for `config.epochs` epochs.
pub fn train<F: Real>(ds: &MultiviewDataset, config: &TrainConfig) -> std::result::Result<Trained<F>, TrainError<F>> {
    let mut trainer = Trainer::<F>::new(ds, config.clone())?;
    let mut log = TrainingLog {
        seed: config.seed,
        initial: Some(trainer.objective()?),
        ..Default::default()
    };
    if config.epochs == 0 {
        log.last = log.initial.clone();
        return Ok(Trained {
            params: trainer.into_params(),
            log,
        });
    }
    for _ in 0..config.epochs {
        let snapshot = trainer.params().clone();
        match trainer.run_epoch() {
            Ok(record) => {
                log::info!(
                    "epoch {} -elbo {:.4e} (link {:.4e}, recon {:.4e}, kl {:.4e}) {:.2}s",
                    record.epoch,
                    record.neg_elbo,
                    record.link,
                    record.recon,
                    record.kl,
                    record.wall_seconds
                );
                log.epochs.push(record);
            }
            Err(fault @ Error::TrainingFault { .. }) => {
                log::warn!("{fault}");
                return Err(TrainError::Diverged(Box::new(Divergence {
                    fault,
                    last_finite: snapshot,
                    log,
                })));
            }
            Err(other) => return Err(other.into()),
        }
    }
    log.last = Some(trainer.objective()?);
    Ok(Trained {
        params: trainer.into_params(),
        log,
    })
}

/// Fused posterior mean of every sample (`n x d`), dropout off.
pub fn embed<F: Real>(ds: &MultiviewDataset, params: &ModelParams<F>, config: &TrainConfig) -> Result<Array2<f64>> {
    if params.view_dims() != ds.view_dims() {
        return Err(Error::arg("parameters and dataset views differ"));
    }
    let n = ds.n();
    match config.embed_mode {
        EmbedMode::FullGraph => embed_block(ds, params, config, &ds.adjacency, None),
        EmbedMode::Tiled => {
            let mut out = Array2::zeros((n, params.latent_dim()));
            let order: Vec<usize> = (0..n).collect();
            for (t, tile) in order.chunks(config.batch_size.max(1)).enumerate() {
                let sub = batch_subgraph(&ds.adjacency, tile)?;
                let z = embed_block(ds, params, config, &sub, Some(tile))?;
                let start = t * config.batch_size;
                out.slice_mut(s![start..start + tile.len(), ..]).assign(&z);
            }
            Ok(out)
        }
    }
}

fn embed_block<F: Real>(
    ds: &MultiviewDataset,
    params: &ModelParams<F>,
    config: &TrainConfig,
    adjacency: &Adjacency,
    rows: Option<&[usize]>,
) -> Result<Array2<f64>> {
    let prop = propagation_operator(adjacency, config.propagation).cast::<F>();
    let arch = arch_of(config);
    let mut mus = Vec::with_capacity(ds.n_views());
    let mut logsigmas = Vec::with_capacity(ds.n_views());
    for (m, view) in ds.views.iter().enumerate() {
        let x = match rows {
            Some(r) => view.select(Axis(0), r).mapv(F::of),
            None => view.mapv(F::of),
        };
        let (mu, ls) = encode_view(x.view(), &prop, &params.encoders[m], arch)?;
        mus.push(mu);
        logsigmas.push(ls);
    }
    let (fused, _) = fuse_posteriors(&mus, &logsigmas);
    Ok(fused.mapv(|v| v.as_f64()))
}
