use ndarray::{Array1, Array2};
use rand::Rng;

use crate::model::config::{PsiInit, TrainConfig};
use crate::real::Real;

/// Affine map `x W + b` acting on sample rows; `weight` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Dense<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform weights in `+-1/sqrt(fan_in)`, zero bias.
    pub fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((input, output), || F::of(rng.random_range(-bound..bound))),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// One view's Krylov graph-convolutional encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<F> {
    /// Layer `l` maps `(hops + 1) * width_in` stacked features to `hidden`.
    pub krylov_layers: Vec<Dense<F>>,
    pub head_mu: Dense<F>,
    pub head_logsigma: Dense<F>,
}

/// One view's Gaussian decoder; the noise covariance is
/// `(exp(log_psi)^2 + 1e-6) I`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<F> {
    pub mlp: Vec<Dense<F>>,
    pub head_mu: Dense<F>,
    pub log_psi: F,
}

pub const PSI_FLOOR: f64 = 1e-6;

impl<F: Real> DecoderParams<F> {
    pub fn psi(&self) -> F {
        (self.log_psi + self.log_psi).exp() + F::of(PSI_FLOOR)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub encoders: Vec<EncoderParams<F>>,
    pub decoders: Vec<DecoderParams<F>>,
}

/// Borrowed view of one parameter tensor.
#[derive(Debug)]
pub struct TensorRef<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [F],
}

fn dense_slices<'a, F>(prefix: &str, d: &'a Dense<F>, out: &mut Vec<TensorRef<'a, F>>) {
    out.push(TensorRef {
        name: format!("{prefix}.weight"),
        shape: d.weight.shape().to_vec(),
        data: d.weight.as_slice().expect("standard layout"),
    });
    out.push(TensorRef {
        name: format!("{prefix}.bias"),
        shape: d.bias.shape().to_vec(),
        data: d.bias.as_slice().expect("standard layout"),
    });
}

fn dense_slices_mut<'a, F>(d: &'a mut Dense<F>, out: &mut Vec<&'a mut [F]>) {
    out.push(d.weight.as_slice_mut().expect("standard layout"));
    out.push(d.bias.as_slice_mut().expect("standard layout"));
}

impl<F: Real> ModelParams<F> {
    /// Fresh parameters for views of the given dimensions. `view_scales` holds
    /// the mean squared entry of each view, used by [`PsiInit::DataVariance`].
    pub fn init<R: Rng>(view_dims: &[usize], view_scales: &[f64], config: &TrainConfig, rng: &mut R) -> Self {
        let width = config.hops + 1;
        let encoders = view_dims
            .iter()
            .map(|&dm| {
                let krylov_layers = (0..config.layers)
                    .map(|l| {
                        let input = if l == 0 { dm } else { config.hidden };
                        Dense::init(width * input, config.hidden, rng)
                    })
                    .collect();
                EncoderParams {
                    krylov_layers,
                    head_mu: Dense::init(config.hidden, config.latent_dim, rng),
                    head_logsigma: Dense::init(config.hidden, config.latent_dim, rng),
                }
            })
            .collect();
        let decoders = view_dims
            .iter()
            .zip(view_scales)
            .map(|(&dm, &scale)| {
                let mlp = (0..config.layers)
                    .map(|l| {
                        let input = if l == 0 { config.latent_dim } else { config.hidden };
                        Dense::init(input, config.hidden, rng)
                    })
                    .collect();
                let log_psi = match config.psi_init {
                    PsiInit::Zero => 0.0,
                    PsiInit::DataVariance if scale > PSI_FLOOR => 0.5 * (scale - PSI_FLOOR).ln(),
                    PsiInit::DataVariance => 0.0,
                };
                DecoderParams {
                    mlp,
                    head_mu: Dense::init(config.hidden, dm, rng),
                    log_psi: F::of(log_psi),
                }
            })
            .collect();
        Self { encoders, decoders }
    }

    /// Same shapes, all entries zero.
    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense<F>| Dense::zeros(d.input_dim(), d.output_dim());
        Self {
            encoders: self
                .encoders
                .iter()
                .map(|e| EncoderParams {
                    krylov_layers: e.krylov_layers.iter().map(z).collect(),
                    head_mu: z(&e.head_mu),
                    head_logsigma: z(&e.head_logsigma),
                })
                .collect(),
            decoders: self
                .decoders
                .iter()
                .map(|d| DecoderParams {
                    mlp: d.mlp.iter().map(z).collect(),
                    head_mu: z(&d.head_mu),
                    log_psi: F::zero(),
                })
                .collect(),
        }
    }

    pub fn n_views(&self) -> usize {
        self.encoders.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoders[0].head_mu.output_dim()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.decoders.iter().map(|d| d.head_mu.output_dim()).collect()
    }

    /// Every tensor with a stable name such as `enc.0.krylov.2.weight` or
    /// `dec.5.log_psi`, in a fixed order.
    pub fn tensors(&self) -> Vec<TensorRef<'_, F>> {
        let mut out = Vec::new();
        for (m, e) in self.encoders.iter().enumerate() {
            for (l, d) in e.krylov_layers.iter().enumerate() {
                dense_slices(&format!("enc.{m}.krylov.{l}"), d, &mut out);
            }
            dense_slices(&format!("enc.{m}.mu"), &e.head_mu, &mut out);
            dense_slices(&format!("enc.{m}.logsigma"), &e.head_logsigma, &mut out);
        }
        for (m, d) in self.decoders.iter().enumerate() {
            for (l, layer) in d.mlp.iter().enumerate() {
                dense_slices(&format!("dec.{m}.mlp.{l}"), layer, &mut out);
            }
            dense_slices(&format!("dec.{m}.mu"), &d.head_mu, &mut out);
            out.push(TensorRef {
                name: format!("dec.{m}.log_psi"),
                shape: vec![],
                data: std::slice::from_ref(&d.log_psi),
            });
        }
        out
    }

    /// Mutable slices in the order of [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        for e in &mut self.encoders {
            for d in &mut e.krylov_layers {
                dense_slices_mut(d, &mut out);
            }
            dense_slices_mut(&mut e.head_mu, &mut out);
            dense_slices_mut(&mut e.head_logsigma, &mut out);
        }
        for d in &mut self.decoders {
            for layer in &mut d.mlp {
                dense_slices_mut(layer, &mut out);
            }
            dense_slices_mut(&mut d.head_mu, &mut out);
            out.push(std::slice::from_mut(&mut d.log_psi));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        let c = |d: &Dense<F>| Dense {
            weight: d.weight.mapv(|v| G::of(v.as_f64())),
            bias: d.bias.mapv(|v| G::of(v.as_f64())),
        };
        ModelParams {
            encoders: self
                .encoders
                .iter()
                .map(|e| EncoderParams {
                    krylov_layers: e.krylov_layers.iter().map(c).collect(),
                    head_mu: c(&e.head_mu),
                    head_logsigma: c(&e.head_logsigma),
                })
                .collect(),
            decoders: self
                .decoders
                .iter()
                .map(|d| DecoderParams {
                    mlp: d.mlp.iter().map(c).collect(),
                    head_mu: c(&d.head_mu),
                    log_psi: G::of(d.log_psi.as_f64()),
                })
                .collect(),
        }
    }
}
