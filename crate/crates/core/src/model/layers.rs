//! Forward and backward passes of the building blocks shared by encoders and decoders.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::graph::{krylov_blocks, SparseMatrix};
use crate::model::config::Activation;
use crate::model::params::Dense;
use crate::real::Real;

/// `x W + b`.
pub(crate) fn affine<F: Real>(x: ArrayView2<F>, layer: &Dense<F>) -> Array2<F> {
    let mut y = x.dot(&layer.weight);
    y += &layer.bias;
    y
}

/// Accumulates the parameter gradients of `y = x W + b` and returns `dL/dx`
/// when requested.
pub(crate) fn affine_backward<F: Real>(
    x: ArrayView2<F>,
    dy: ArrayView2<F>,
    layer: &Dense<F>,
    grad: &mut Dense<F>,
    need_input_grad: bool,
) -> Option<Array2<F>> {
    grad.weight += &x.t().dot(&dy);
    grad.bias += &dy.sum_axis(Axis(0));
    need_input_grad.then(|| dy.dot(&layer.weight.t()))
}

pub(crate) fn activate<F: Real>(pre: &mut Array2<F>, act: Activation) {
    match act {
        Activation::Relu => pre.mapv_inplace(|v| v.max(F::zero())),
        Activation::Tanh => pre.mapv_inplace(|v| v.tanh()),
    }
}

/// Multiplies `grad` in place by the activation derivative, expressed through
/// the activation output.
pub(crate) fn activation_backward<F: Real>(grad: &mut Array2<F>, out: &Array2<F>, act: Activation) {
    match act {
        Activation::Relu => grad.zip_mut_with(out, |g, &o| {
            if o <= F::zero() {
                *g = F::zero()
            }
        }),
        Activation::Tanh => grad.zip_mut_with(out, |g, &o| *g = *g * (F::one() - o * o)),
    }
}

/// Inverted dropout mask: entries are `0` with probability `rate`, otherwise `1/(1-rate)`.
pub(crate) fn dropout_mask<F: Real, R: Rng>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<F> {
    let keep = F::of(1.0 / (1.0 - rate));
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { F::zero() } else { keep })
}

/// Cached quantities of one hidden layer.
#[derive(Debug)]
pub(crate) struct HiddenCache<F> {
    /// Layer input (the stacked Krylov blocks for graph layers).
    pub input: Array2<F>,
    /// Activation output before dropout.
    pub activated: Array2<F>,
    pub mask: Option<Array2<F>>,
}

impl<F: Real> HiddenCache<F> {
    pub fn output(&self) -> Array2<F> {
        match &self.mask {
            Some(m) => &self.activated * m,
            None => self.activated.clone(),
        }
    }

    /// Gradient with respect to the pre-activation, given the gradient with
    /// respect to the (dropped-out) output.
    pub fn pre_activation_grad(&self, mut d_out: Array2<F>, act: Activation) -> Array2<F> {
        if let Some(m) = &self.mask {
            d_out *= m;
        }
        activation_backward(&mut d_out, &self.activated, act);
        d_out
    }
}

/// Dense hidden layer: `dropout(act(x W + b))`.
pub(crate) fn hidden_forward<F: Real, R: Rng>(
    input: Array2<F>,
    layer: &Dense<F>,
    act: Activation,
    dropout: Option<(f64, &mut R)>,
) -> HiddenCache<F> {
    let mut activated = affine(input.view(), layer);
    activate(&mut activated, act);
    let mask = match dropout {
        Some((rate, rng)) if rate > 0.0 => Some(dropout_mask(activated.dim(), rate, rng)),
        _ => None,
    };
    HiddenCache { input, activated, mask }
}

/// Truncated Krylov layer: `dropout(act([H, PH, ..., P^k H] W + b))`.
pub(crate) fn krylov_forward<F: Real, R: Rng>(
    h: ArrayView2<F>,
    prop: &SparseMatrix<F>,
    hops: usize,
    layer: &Dense<F>,
    act: Activation,
    dropout: Option<(f64, &mut R)>,
) -> HiddenCache<F> {
    let blocks = krylov_blocks(h, prop, hops).expect("batch shapes checked by caller");
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let stacked = concatenate(Axis(1), &views).expect("blocks share rows");
    hidden_forward(stacked, layer, act, dropout)
}

/// Gradient with respect to the Krylov layer input `H`, given the gradient
/// with respect to the stacked blocks. Evaluated Horner-style:
/// `dH = dB_0 + P^T (dB_1 + P^T (dB_2 + ...))`.
pub(crate) fn krylov_input_grad<F: Real>(d_stacked: ArrayView2<F>, prop: &SparseMatrix<F>, hops: usize) -> Array2<F> {
    let width = d_stacked.ncols() / (hops + 1);
    let block = |t: usize| d_stacked.slice(s![.., t * width..(t + 1) * width]);
    let mut g = block(hops).to_owned();
    for t in (0..hops).rev() {
        let mut next = prop.t_dot(&g.view());
        next += &block(t);
        g = next;
    }
    g
}
