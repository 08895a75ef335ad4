//! The training objective on one batch and its gradient.

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Adjacency, MultiviewDataset};
use crate::error::{Error, Result};
use crate::graph::{batch_subgraph, propagation_operator, Propagation, SparseMatrix};
use crate::model::config::TrainConfig;
use crate::model::latent::{fuse_backward, kl_fused_vs_prior, link_term, standard_normal, PosteriorGaussians};
use crate::model::network::{decoder_backward, decoder_forward, encoder_backward, encoder_forward, Arch};
use crate::model::params::ModelParams;
use crate::real::Real;

/// Features, link targets and propagation operator of a set of samples.
#[derive(Debug, Clone)]
pub struct Batch<F> {
    pub indices: Vec<usize>,
    /// One `batch x d_m` matrix per view.
    pub views: Vec<Array2<F>>,
    /// Dense subgraph adjacency, the targets of the link decoder.
    pub adjacency: Array2<F>,
    pub prop: SparseMatrix<F>,
}

impl<F: Real> Batch<F> {
    /// Gathers the rows in `indices` and the induced subgraph of `adjacency`.
    pub fn assemble(
        views: &[Array2<F>],
        adjacency: &Adjacency,
        indices: &[usize],
        propagation: Propagation,
    ) -> Result<Self> {
        if views.iter().any(|v| v.nrows() != adjacency.n()) {
            return Err(Error::arg("views and adjacency disagree on the sample count"));
        }
        let sub = batch_subgraph(adjacency, indices)?;
        if sub.max_weight() > 1.0 {
            return Err(Error::arg("link targets must lie in [0, 1]; normalize the adjacency first"));
        }
        Ok(Self {
            indices: indices.to_vec(),
            views: views.iter().map(|v| v.select(Axis(0), indices)).collect(),
            adjacency: sub.to_dense().mapv(F::of),
            prop: propagation_operator(&sub, propagation).cast(),
        })
    }

    pub fn from_dataset(ds: &MultiviewDataset, indices: &[usize], propagation: Propagation) -> Result<Self> {
        let views: Vec<Array2<F>> = ds.views.iter().map(|v| v.mapv(F::of)).collect();
        Self::assemble(&views, &ds.adjacency, indices, propagation)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Standard normal draws used by the reparameterization, indexed as
/// `draws[sample][slot]`, each `batch x d`. Slot 0 feeds the link term (and
/// every view under shared noise); slot `1 + m` feeds view `m` otherwise.
#[derive(Debug, Clone)]
pub struct LatentNoise<F> {
    pub draws: Vec<Vec<Array2<F>>>,
}

impl<F: Real> LatentNoise<F> {
    pub fn sample<R: Rng>(batch: usize, config: &TrainConfig, n_views: usize, rng: &mut R) -> Self {
        let slots = config.noise_slots(n_views);
        let draws = (0..config.mc_samples)
            .map(|_| (0..slots).map(|_| standard_normal((batch, config.latent_dim), rng)).collect())
            .collect();
        Self { draws }
    }

    /// All-zero noise: every draw sits at the posterior mean.
    pub fn zeros(batch: usize, config: &TrainConfig, n_views: usize) -> Self {
        let slots = config.noise_slots(n_views);
        Self {
            draws: vec![vec![Array2::zeros((batch, config.latent_dim)); slots]; config.mc_samples],
        }
    }

    fn slot(&self, sample: usize, view: Option<usize>) -> &Array2<F> {
        let row = &self.draws[sample];
        match view {
            Some(m) if row.len() > 1 => &row[1 + m],
            _ => &row[0],
        }
    }
}

/// The three terms of the objective summed over a batch, with Monte Carlo
/// expectations averaged over draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub link: f64,
    pub recon: f64,
    pub recon_per_view: Vec<f64>,
    pub kl: f64,
    /// `link_weight * link + recon_weight * recon - kl`.
    pub elbo: f64,
}

impl ElboTerms {
    pub fn neg_elbo(&self) -> f64 {
        -self.elbo
    }

    pub(crate) fn zero(n_views: usize) -> Self {
        Self {
            link: 0.0,
            recon: 0.0,
            recon_per_view: vec![0.0; n_views],
            kl: 0.0,
            elbo: 0.0,
        }
    }

    pub(crate) fn accumulate(&mut self, other: &ElboTerms) {
        self.link += other.link;
        self.recon += other.recon;
        for (a, b) in self.recon_per_view.iter_mut().zip(&other.recon_per_view) {
            *a += b;
        }
        self.kl += other.kl;
        self.elbo += other.elbo;
    }
}

pub(crate) fn arch_of(config: &TrainConfig) -> Arch {
    Arch {
        hops: config.hops,
        activation: config.activation,
        logsigma_clamp: config.logsigma_clamp,
    }
}

fn check(value: f64, term: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(term))
    }
}

fn check_shapes<F: Real>(batch: &Batch<F>, params: &ModelParams<F>, config: &TrainConfig) -> Result<()> {
    if batch.views.len() != params.n_views() {
        return Err(Error::arg(format!(
            "batch has {} views, model has {}",
            batch.views.len(),
            params.n_views()
        )));
    }
    if params.latent_dim() != config.latent_dim {
        return Err(Error::arg("latent dimension of parameters and config differ"));
    }
    Ok(())
}

/// Objective on a batch with reparameterization noise drawn from `rng` and
/// dropout off.
pub fn elbo_batch<F: Real, R: Rng>(
    batch: &Batch<F>,
    params: &ModelParams<F>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<ElboTerms> {
    let noise = LatentNoise::sample(batch.len(), config, params.n_views(), rng);
    elbo_with_noise(batch, params, config, &noise)
}

/// Objective on a batch for fixed noise, dropout off.
pub fn elbo_with_noise<F: Real>(
    batch: &Batch<F>,
    params: &ModelParams<F>,
    config: &TrainConfig,
    noise: &LatentNoise<F>,
) -> Result<ElboTerms> {
    evaluate::<F, rand_chacha::ChaCha8Rng>(batch, params, config, noise, None, false).map(|(terms, _)| terms)
}

/// Objective and the gradient of `-ELBO` with respect to every parameter.
/// Dropout is active when `dropout_rng` is given and the configured rate is positive.
pub fn elbo_and_gradients<F: Real, R: Rng>(
    batch: &Batch<F>,
    params: &ModelParams<F>,
    config: &TrainConfig,
    noise: &LatentNoise<F>,
    dropout_rng: Option<&mut R>,
) -> Result<(ElboTerms, ModelParams<F>)> {
    let (terms, grads) = evaluate(batch, params, config, noise, dropout_rng, true)?;
    Ok((terms, grads.expect("gradients requested")))
}

fn evaluate<F: Real, R: Rng>(
    batch: &Batch<F>,
    params: &ModelParams<F>,
    config: &TrainConfig,
    noise: &LatentNoise<F>,
    mut dropout_rng: Option<&mut R>,
    want_grad: bool,
) -> Result<(ElboTerms, Option<ModelParams<F>>)> {
    check_shapes(batch, params, config)?;
    let arch = arch_of(config);
    let rate = config.dropout;
    let n_views = params.n_views();

    let mut encoded = Vec::with_capacity(n_views);
    for (m, x) in batch.views.iter().enumerate() {
        let drop = dropout_rng.as_mut().filter(|_| rate > 0.0).map(|r| (rate, &mut **r));
        encoded.push(encoder_forward(x.view(), &batch.prop, &params.encoders[m], arch, drop)?);
    }
    let (mus, logsigmas): (Vec<_>, Vec<_>) = encoded.iter().map(|e| (e.mu.clone(), e.logsigma.clone())).unzip();
    let post = PosteriorGaussians::new(mus, logsigmas);
    let sigma = post.fused_logsigma.mapv(|l| l.exp());

    let samples = noise.draws.len();
    if samples == 0 {
        return Err(Error::arg("at least one Monte Carlo draw is needed"));
    }
    let inv_s = F::of(1.0 / samples as f64);
    let wl = F::of(config.link_weight);
    let wr = F::of(config.recon_weight);
    let mut terms = ElboTerms::zero(n_views);
    let mut grads = want_grad.then(|| params.zeros_like());
    let mut d_mu = Array2::<F>::zeros(post.fused_mu.raw_dim());
    let mut d_ls = Array2::<F>::zeros(post.fused_mu.raw_dim());

    let latent = |eps: &Array2<F>| &post.fused_mu + &(&sigma * eps);
    // pushes a gradient on z = mu + sigma * eps back to (mu, logsigma)
    let push_back = |dz: &Array2<F>, eps: &Array2<F>, d_mu: &mut Array2<F>, d_ls: &mut Array2<F>| {
        *d_mu += dz;
        *d_ls += &(dz * &sigma * eps);
    };

    for s in 0..samples {
        let eps = noise.slot(s, None);
        let z = latent(eps);
        let (link, g) = link_term(&z, batch.adjacency.view(), config.normalized_link);
        terms.link += link.as_f64() / samples as f64;
        if want_grad && config.link_weight != 0.0 {
            // d(-w * link)/dz = -w (G + G^T) z
            let sym = &g + &g.t();
            let dz = sym.dot(&z) * (-wl * inv_s);
            push_back(&dz, eps, &mut d_mu, &mut d_ls);
        }
        for m in 0..n_views {
            let eps_m = noise.slot(s, Some(m));
            let z_m = if std::ptr::eq(eps_m, eps) { z.clone() } else { latent(eps_m) };
            let drop = dropout_rng.as_mut().filter(|_| rate > 0.0).map(|r| (rate, &mut **r));
            let (ll, cache) = decoder_forward(z_m.view(), batch.views[m].view(), &params.decoders[m], arch, drop)?;
            let value = ll.sum().as_f64() / samples as f64;
            terms.recon_per_view[m] += value;
            terms.recon += value;
            if let Some(g) = grads.as_mut() {
                if config.recon_weight != 0.0 {
                    let dz = decoder_backward(&cache, &params.decoders[m], arch, -wr * inv_s, &mut g.decoders[m]);
                    push_back(&dz, eps_m, &mut d_mu, &mut d_ls);
                }
            }
        }
    }

    let kl = kl_fused_vs_prior(&post.fused_mu, &post.fused_logsigma);
    terms.kl = kl.sum().as_f64();
    check(terms.link, "link log-likelihood")?;
    check(terms.recon, "reconstruction log-likelihood")?;
    check(terms.kl, "KL divergence")?;
    terms.elbo = config.link_weight * terms.link + config.recon_weight * terms.recon - terms.kl;

    let Some(mut g) = grads else {
        return Ok((terms, None));
    };
    d_mu += &post.fused_mu;
    let one = F::one();
    d_ls.zip_mut_with(&sigma, |d, &s| *d += s * s - one);

    for (m, ((dm, dl), enc)) in fuse_backward(&post, &d_mu, &d_ls).into_iter().zip(&encoded).enumerate() {
        encoder_backward(&enc.cache, &batch.prop, &params.encoders[m], arch, &dm, &dl, &mut g.encoders[m]);
    }
    if !g.all_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((terms, Some(g)))
}
