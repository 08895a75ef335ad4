//! Product-of-experts fusion, reparameterized sampling, the KL term and the
//! logistic link decoder.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::real::Real;

/// Per-view diagonal Gaussian posteriors for a batch and their fusion.
/// All matrices are `batch x d`.
#[derive(Debug, Clone)]
pub struct PosteriorGaussians<F> {
    pub mu: Vec<Array2<F>>,
    pub logsigma: Vec<Array2<F>>,
    pub fused_mu: Array2<F>,
    pub fused_logsigma: Array2<F>,
}

impl<F: Real> PosteriorGaussians<F> {
    pub fn new(mu: Vec<Array2<F>>, logsigma: Vec<Array2<F>>) -> Self {
        let (fused_mu, fused_logsigma) = fuse_posteriors(&mu, &logsigma);
        Self {
            mu,
            logsigma,
            fused_mu,
            fused_logsigma,
        }
    }
}

/// Precision-weighted fusion of diagonal Gaussians, entrywise:
/// `1/s^2 = sum_m 1/s_m^2` and `mu = (sum_m mu_m / s_m^2) s^2`.
///
/// Works in log space so that arbitrarily large or small variances neither
/// overflow nor underflow.
pub fn fuse_posteriors<F: Real>(mu: &[Array2<F>], logsigma: &[Array2<F>]) -> (Array2<F>, Array2<F>) {
    assert!(!mu.is_empty() && mu.len() == logsigma.len(), "one (mu, logsigma) pair per view");
    let shape = mu[0].raw_dim();
    let mut fused_mu = Array2::zeros(shape.clone());
    let mut fused_ls = Array2::zeros(shape);
    let two = F::of(2.0);
    let half = F::of(0.5);
    for ((r, c), out_mu) in fused_mu.indexed_iter_mut() {
        let top = logsigma.iter().map(|l| -two * l[[r, c]]).fold(F::neg_infinity(), F::max);
        let mut total = F::zero();
        let mut weighted = F::zero();
        for (m, l) in mu.iter().zip(logsigma) {
            let w = (-two * l[[r, c]] - top).exp();
            total += w;
            weighted += w * m[[r, c]];
        }
        *out_mu = weighted / total;
        fused_ls[[r, c]] = -half * (top + total.ln());
    }
    (fused_mu, fused_ls)
}

/// Normalized precision weights `w_m = s_m^{-2} / sum_k s_k^{-2}`, one matrix per view.
pub(crate) fn precision_weights<F: Real>(logsigma: &[Array2<F>], fused_logsigma: &Array2<F>) -> Vec<Array2<F>> {
    let two = F::of(2.0);
    logsigma
        .iter()
        .map(|l| {
            let mut w = l.clone();
            Zip::from(&mut w)
                .and(fused_logsigma)
                .for_each(|w, &f| *w = (two * (f - *w)).exp());
            w
        })
        .collect()
}

/// Back-propagates gradients on the fused parameters to every view's `(mu, logsigma)`.
pub(crate) fn fuse_backward<F: Real>(
    post: &PosteriorGaussians<F>,
    d_fused_mu: &Array2<F>,
    d_fused_ls: &Array2<F>,
) -> Vec<(Array2<F>, Array2<F>)> {
    let weights = precision_weights(&post.logsigma, &post.fused_logsigma);
    let two = F::of(2.0);
    weights
        .into_iter()
        .zip(&post.mu)
        .map(|(w, mu_m)| {
            let d_mu = &w * d_fused_mu;
            let mut d_ls = Array2::zeros(w.raw_dim());
            Zip::from(&mut d_ls)
                .and(&w)
                .and(mu_m)
                .and(&post.fused_mu)
                .and(d_fused_mu)
                .and(d_fused_ls)
                .for_each(|out, &w, &m, &f, &dm, &dl| *out = w * (dl - two * dm * (m - f)));
            (d_mu, d_ls)
        })
        .collect()
}

/// Standard normal noise of the given shape.
pub fn standard_normal<F: Real, R: Rng>(shape: (usize, usize), rng: &mut R) -> Array2<F> {
    Array2::from_shape_simple_fn(shape, || F::of(StandardNormal.sample(rng)))
}

/// `mu + exp(logsigma) * eps`.
pub fn reparameterize<F: Real>(mu: &Array2<F>, logsigma: &Array2<F>, eps: &Array2<F>) -> Array2<F> {
    let mut z = mu.clone();
    Zip::from(&mut z)
        .and(logsigma)
        .and(eps)
        .for_each(|z, &l, &e| *z += l.exp() * e);
    z
}

pub fn sample_latent<F: Real, R: Rng>(mu: &Array2<F>, logsigma: &Array2<F>, rng: &mut R) -> Array2<F> {
    let eps = standard_normal(mu.dim(), rng);
    reparameterize(mu, logsigma, &eps)
}

/// `KL(N(mu, diag(exp(2 logsigma))) || N(0, I))` per sample (row).
pub fn kl_fused_vs_prior<F: Real>(mu: &Array2<F>, logsigma: &Array2<F>) -> Array1<F> {
    let half = F::of(0.5);
    let two = F::of(2.0);
    let mut per_entry = Array2::zeros(mu.raw_dim());
    Zip::from(&mut per_entry)
        .and(mu)
        .and(logsigma)
        .for_each(|k, &m, &l| *k = half * (m * m + (two * l).exp() - F::one() - two * l));
    per_entry.sum_axis(ndarray::Axis(1))
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus<F: Real>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Log normalizing constant of the continuous Bernoulli with logit `s`,
/// `log(s / tanh(s/2))`, and its derivative.
pub(crate) fn continuous_bernoulli_log_norm<F: Real>(s: F) -> (F, F) {
    let a = s.abs();
    if a < F::of(1e-3) {
        (F::of(std::f64::consts::LN_2) + s * s / F::of(12.0), s / F::of(6.0))
    } else {
        let half = F::of(0.5);
        let value = a.ln() - (a * half).tanh().ln();
        let deriv = F::one() / s - F::one() / s.sinh();
        (value, deriv)
    }
}

/// `a log l(z^T z') + (1 - a) log(1 - l(z^T z'))` with `l` the logistic function.
pub fn decode_link_loglik<F: Real>(z_i: ArrayView1<F>, z_j: ArrayView1<F>, a: F) -> Result<F> {
    if !(a >= F::zero() && a <= F::one()) {
        return Err(Error::arg(format!("link weight {a} outside [0, 1]")));
    }
    let s = z_i.dot(&z_j);
    Ok(a * s - softplus(s))
}

/// Sum of the link log-likelihood over all ordered pairs of the batch, and its
/// gradient with respect to the logits `z_i^T z_j`.
pub(crate) fn link_term<F: Real>(z: &Array2<F>, a: ArrayView2<F>, normalized: bool) -> (F, Array2<F>) {
    let mut logits = z.dot(&z.t());
    let mut total = F::zero();
    Zip::from(&mut logits).and(&a).for_each(|s, &w| {
        let x = *s;
        let mut value = w * x - softplus(x);
        let mut grad = w - sigmoid(x);
        if normalized {
            let (c, dc) = continuous_bernoulli_log_norm(x);
            value += c;
            grad += dc;
        }
        total += value;
        *s = grad;
    });
    (total, logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn single_view_fusion_is_identity() {
        let mu = array![[0.3f64, -1.2]];
        let ls = array![[0.1, -2.0]];
        let (fm, fl) = fuse_posteriors(&[mu.clone()], &[ls.clone()]);
        assert!((&fm - &mu).iter().all(|v| v.abs() < 1e-15));
        assert!((&fl - &ls).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn two_unit_gaussians() {
        let (fm, fl) = fuse_posteriors(&[array![[0.0f64]], array![[2.0]]], &[array![[0.0]], array![[0.0]]]);
        assert!((fm[[0, 0]] - 1.0).abs() < 1e-15);
        assert!(((2.0 * fl[[0, 0]]).exp() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn vanishing_precision_view_is_ignored() {
        let (fm, fl) = fuse_posteriors(&[array![[5.0f64]], array![[-0.7]]], &[array![[40.0]], array![[0.2]]]);
        assert!((fm[[0, 0]] + 0.7).abs() < 1e-6);
        assert!((fl[[0, 0]] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn deterministic_limit_of_sampling() {
        let mu = array![[1.5, -2.0]];
        let ls = array![[-800.0, -800.0]];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_latent(&mu, &ls, &mut rng), mu);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_fused_vs_prior(&array![[0.0, 0.0]], &array![[0.0, 0.0]])[0], 0.0);
        assert!((kl_fused_vs_prior(&array![[1.0f64]], &array![[0.0]])[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn link_examples() {
        let z0 = array![0.0, 0.0];
        let ln_half = 0.5f64.ln();
        for a in [0.0, 0.3, 1.0] {
            let v = decode_link_loglik(z0.view(), z0.view(), a).unwrap();
            assert!((v - ln_half).abs() < 1e-15);
        }
        let big = array![100.0f64];
        assert!(decode_link_loglik(big.view(), big.view(), 1.0).unwrap().abs() < 1e-12);
        let v = decode_link_loglik(array![2.0f64.sqrt()].view(), array![2.0f64.sqrt()].view(), 0.5).unwrap();
        let l2 = 1.0 / (1.0 + (-2.0f64).exp());
        let want = 0.5 * l2.ln() + 0.5 * (1.0 - l2).ln();
        assert!((v - want).abs() < 1e-14, "{v} vs {want}");
        assert!(decode_link_loglik(z0.view(), z0.view(), 1.5).is_err());
        assert!(decode_link_loglik(z0.view(), z0.view(), -0.1).is_err());
    }

    #[test]
    fn link_is_stable_for_huge_logits() {
        let z = array![100.0f64];
        let w = array![-100.0f64];
        let v = decode_link_loglik(z.view(), w.view(), 1.0).unwrap();
        assert!(v.is_finite() && (v + 1e4).abs() < 1e-6);
        let v = decode_link_loglik(z.view(), z.view(), 0.0).unwrap();
        assert!(v.is_finite() && (v + 1e4).abs() < 1e-6);
    }

    #[test]
    fn continuous_bernoulli_constant_matches_definition() {
        // C(p) = 2 artanh(1 - 2p) / (1 - 2p), p = sigmoid(s)
        for s in [-12.0, -2.0, -0.4, 0.0005, 0.7, 5.0] {
            let p: f64 = sigmoid(s);
            let want = if (1.0 - 2.0 * p).abs() < 1e-9 {
                2.0f64
            } else {
                2.0 * (1.0 - 2.0 * p).atanh() / (1.0 - 2.0 * p)
            };
            let (got, _) = continuous_bernoulli_log_norm(s);
            assert!((got - want.ln()).abs() < 1e-6, "s = {s}: {got} vs {}", want.ln());
            let h = 1e-5;
            let fd = (continuous_bernoulli_log_norm(s + h).0 - continuous_bernoulli_log_norm(s - h).0) / (2.0 * h);
            assert!((fd - continuous_bernoulli_log_norm(s).1).abs() < 1e-6);
        }
    }
}
