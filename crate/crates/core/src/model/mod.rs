//! Multiview graph variational encoder: per-view Krylov graph-convolutional
//! encoders, a product-of-experts common posterior, Gaussian view decoders
//! and an inner-product link decoder, trained on the evidence lower bound.
//!
//! Matrices are sample-major: views are `n x d_m`, latent codes `n x d`.

mod adam;
mod checkpoint;
mod config;
mod elbo;
mod latent;
mod layers;
mod network;
mod params;
mod train;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{Activation, AdamConfig, EmbedMode, NoiseSharing, PsiInit, TrainConfig};
pub use elbo::{elbo_and_gradients, elbo_batch, elbo_with_noise, Batch, ElboTerms, LatentNoise};
pub use latent::{
    decode_link_loglik, fuse_posteriors, kl_fused_vs_prior, reparameterize, sample_latent, standard_normal,
    PosteriorGaussians,
};
pub use network::{decode_view_loglik, decode_view_mean, encode_view, encode_view_dropout, Arch};
pub use params::{DecoderParams, Dense, EncoderParams, ModelParams, TensorRef, PSI_FLOOR};
pub use train::{embed, step_rng, train, Divergence, EpochRecord, TrainError, Trained, Trainer, TrainingLog};

/// Architecture settings of a configuration.
pub fn arch(config: &TrainConfig) -> Arch {
    elbo::arch_of(config)
}
