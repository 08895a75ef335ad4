//! View encoders (Krylov GCN stacks) and view decoders (MLPs), with the
//! matching backward passes.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::model::config::Activation;
use crate::model::layers::{affine, affine_backward, hidden_forward, krylov_forward, krylov_input_grad, HiddenCache};
use crate::model::params::{DecoderParams, EncoderParams};
use crate::real::Real;

/// Architecture knobs needed by the forward passes.
#[derive(Debug, Clone, Copy)]
pub struct Arch {
    pub hops: usize,
    pub activation: Activation,
    pub logsigma_clamp: f64,
}

#[derive(Debug)]
pub(crate) struct EncoderCache<F> {
    layers: Vec<HiddenCache<F>>,
    top: Array2<F>,
    raw_logsigma: Array2<F>,
}

pub(crate) struct EncoderOutput<F> {
    pub mu: Array2<F>,
    pub logsigma: Array2<F>,
    pub cache: EncoderCache<F>,
}

/// Mean and clamped log standard deviation of one view's posterior for every
/// row of `x`. Dropout is applied after every hidden layer when `dropout` is given.
pub(crate) fn encoder_forward<F: Real, R: Rng>(
    x: ArrayView2<F>,
    prop: &SparseMatrix<F>,
    params: &EncoderParams<F>,
    arch: Arch,
    mut dropout: Option<(f64, &mut R)>,
) -> Result<EncoderOutput<F>> {
    if prop.shape() != (x.nrows(), x.nrows()) {
        return Err(Error::arg(format!(
            "propagation operator {:?} does not match {} samples",
            prop.shape(),
            x.nrows()
        )));
    }
    let first = &params.krylov_layers[0];
    if first.input_dim() != (arch.hops + 1) * x.ncols() {
        return Err(Error::arg(format!(
            "encoder expects {} stacked inputs, view has {} features and {} hops",
            first.input_dim(),
            x.ncols(),
            arch.hops
        )));
    }
    let mut layers: Vec<HiddenCache<F>> = Vec::with_capacity(params.krylov_layers.len());
    let mut h = x.to_owned();
    for layer in &params.krylov_layers {
        let drop = dropout.as_mut().map(|(rate, rng)| (*rate, &mut **rng));
        let cache = krylov_forward(h.view(), prop, arch.hops, layer, arch.activation, drop);
        h = cache.output();
        layers.push(cache);
    }
    let mu = affine(h.view(), &params.head_mu);
    let raw_logsigma = affine(h.view(), &params.head_logsigma);
    let c = F::of(arch.logsigma_clamp);
    let logsigma = raw_logsigma.mapv(|v| v.max(-c).min(c));
    if !mu.iter().chain(logsigma.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("encoder activation"));
    }
    Ok(EncoderOutput {
        mu,
        logsigma,
        cache: EncoderCache {
            layers,
            top: h,
            raw_logsigma,
        },
    })
}

pub(crate) fn encoder_backward<F: Real>(
    cache: &EncoderCache<F>,
    prop: &SparseMatrix<F>,
    params: &EncoderParams<F>,
    arch: Arch,
    d_mu: &Array2<F>,
    d_logsigma: &Array2<F>,
    grad: &mut EncoderParams<F>,
) {
    let c = F::of(arch.logsigma_clamp);
    let mut d_raw = d_logsigma.clone();
    Zip::from(&mut d_raw).and(&cache.raw_logsigma).for_each(|d, &r| {
        if r < -c || r > c {
            *d = F::zero();
        }
    });
    let mut d_h = affine_backward(cache.top.view(), d_mu.view(), &params.head_mu, &mut grad.head_mu, true)
        .expect("requested");
    d_h += &affine_backward(
        cache.top.view(),
        d_raw.view(),
        &params.head_logsigma,
        &mut grad.head_logsigma,
        true,
    )
    .expect("requested");
    for (l, layer_cache) in cache.layers.iter().enumerate().rev() {
        let d_pre = layer_cache.pre_activation_grad(d_h, arch.activation);
        let d_stacked = affine_backward(
            layer_cache.input.view(),
            d_pre.view(),
            &params.krylov_layers[l],
            &mut grad.krylov_layers[l],
            l > 0,
        );
        match d_stacked {
            Some(d) => d_h = krylov_input_grad(d.view(), prop, arch.hops),
            None => break,
        }
    }
}

#[derive(Debug)]
pub(crate) struct DecoderCache<F> {
    layers: Vec<HiddenCache<F>>,
    top: Array2<F>,
    residual: Array2<F>,
}

/// Per-sample Gaussian log-likelihood of `x` (rows) under the decoder applied
/// to the latent rows `z`.
pub(crate) fn decoder_forward<F: Real, R: Rng>(
    z: ArrayView2<F>,
    x: ArrayView2<F>,
    params: &DecoderParams<F>,
    arch: Arch,
    mut dropout: Option<(f64, &mut R)>,
) -> Result<(Array1<F>, DecoderCache<F>)> {
    if z.nrows() != x.nrows() {
        return Err(Error::arg(format!("{} latent rows for {} samples", z.nrows(), x.nrows())));
    }
    if x.ncols() != params.head_mu.output_dim() {
        return Err(Error::arg(format!(
            "decoder emits {} features, view has {}",
            params.head_mu.output_dim(),
            x.ncols()
        )));
    }
    let mut layers: Vec<HiddenCache<F>> = Vec::with_capacity(params.mlp.len());
    let mut h = z.to_owned();
    for layer in &params.mlp {
        let drop = dropout.as_mut().map(|(rate, rng)| (*rate, &mut **rng));
        let cache = hidden_forward(h, layer, arch.activation, drop);
        h = cache.output();
        layers.push(cache);
    }
    let mean = affine(h.view(), &params.head_mu);
    let residual = &x - &mean;
    let loglik = gaussian_loglik(&residual, params.psi());
    if !loglik.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("view reconstruction"));
    }
    Ok((loglik, DecoderCache { layers, top: h, residual }))
}

/// `-d/2 log(2 pi psi) - |r|^2 / (2 psi)` for every row `r` of `residual`.
pub(crate) fn gaussian_loglik<F: Real>(residual: &Array2<F>, psi: F) -> Array1<F> {
    let dm = F::of(residual.ncols() as f64);
    let half = F::of(0.5);
    let constant = -half * dm * (F::of(2.0 * std::f64::consts::PI) * psi).ln();
    residual
        .rows()
        .into_iter()
        .map(|r| constant - r.dot(&r) * half / psi)
        .collect()
}

/// Back-propagates `scale * sum_i loglik_i`, returning its gradient with
/// respect to `z`.
pub(crate) fn decoder_backward<F: Real>(
    cache: &DecoderCache<F>,
    params: &DecoderParams<F>,
    arch: Arch,
    scale: F,
    grad: &mut DecoderParams<F>,
) -> Array2<F> {
    let psi = params.psi();
    let half = F::of(0.5);
    let two = F::of(2.0);
    let n = F::of(cache.residual.nrows() as f64);
    let dm = F::of(cache.residual.ncols() as f64);
    let sq: F = cache.residual.iter().map(|&r| r * r).sum();
    // d/dpsi of the summed log-likelihood, then chain through psi = exp(2 lp) + floor
    let d_psi = -half * n * dm / psi + half * sq / (psi * psi);
    grad.log_psi += scale * d_psi * two * (two * params.log_psi).exp();

    let d_mean = cache.residual.mapv(|r| scale * r / psi);
    let mut d_h = affine_backward(cache.top.view(), d_mean.view(), &params.head_mu, &mut grad.head_mu, true)
        .expect("requested");
    for (l, layer_cache) in cache.layers.iter().enumerate().rev() {
        let d_pre = layer_cache.pre_activation_grad(d_h, arch.activation);
        d_h = affine_backward(layer_cache.input.view(), d_pre.view(), &params.mlp[l], &mut grad.mlp[l], true)
            .expect("requested");
    }
    d_h
}

/// Posterior means and log standard deviations of one view, without dropout.
pub fn encode_view<F: Real>(
    x: ArrayView2<F>,
    prop: &SparseMatrix<F>,
    params: &EncoderParams<F>,
    arch: Arch,
) -> Result<(Array2<F>, Array2<F>)> {
    let out = encoder_forward::<F, rand_chacha::ChaCha8Rng>(x, prop, params, arch, None)?;
    Ok((out.mu, out.logsigma))
}

/// Same as [`encode_view`] with dropout active, drawing masks from `rng`.
pub fn encode_view_dropout<F: Real, R: Rng>(
    x: ArrayView2<F>,
    prop: &SparseMatrix<F>,
    params: &EncoderParams<F>,
    arch: Arch,
    rate: f64,
    rng: &mut R,
) -> Result<(Array2<F>, Array2<F>)> {
    let out = encoder_forward(x, prop, params, arch, Some((rate, rng)))?;
    Ok((out.mu, out.logsigma))
}

/// Per-sample log-likelihood `log N(x_i; W MLP(z_i), psi I)` for a view.
pub fn decode_view_loglik<F: Real>(
    z: ArrayView2<F>,
    x: ArrayView2<F>,
    params: &DecoderParams<F>,
    arch: Arch,
) -> Result<Array1<F>> {
    let (ll, _) = decoder_forward::<F, rand_chacha::ChaCha8Rng>(z, x, params, arch, None)?;
    Ok(ll)
}

/// Decoded mean of a view for latent rows `z`.
pub fn decode_view_mean<F: Real>(z: ArrayView2<F>, params: &DecoderParams<F>, arch: Arch) -> Array2<F> {
    let mut h = z.to_owned();
    for layer in &params.mlp {
        let cache = hidden_forward::<F, rand_chacha::ChaCha8Rng>(h, layer, arch.activation, None);
        h = cache.output();
    }
    affine(h.view(), &params.head_mu)
}
