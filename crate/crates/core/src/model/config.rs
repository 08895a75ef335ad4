use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Propagation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Initial value of each decoder's `log_psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsiInit {
    /// `log_psi = 0`, i.e. unit noise variance.
    Zero,
    /// `psi` starts at the mean squared entry of the preprocessed view.
    #[default]
    DataVariance,
}

/// How reparameterization draws are shared between the likelihood terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSharing {
    /// One draw per node feeds every view decoder and the link decoder.
    #[default]
    Shared,
    /// Independent draws for the link term and for each view decoder.
    PerView,
}

/// How [`embed`](crate::model::embed) propagates over the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    /// One pass over the whole graph.
    #[default]
    FullGraph,
    /// Consecutive index tiles of `batch_size` nodes, each with its own subgraph.
    Tiled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub latent_dim: usize,
    /// Krylov order of every encoder layer.
    pub hops: usize,
    /// Hidden layers in each encoder and each decoder.
    pub layers: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub mc_samples: usize,
    pub adam: AdamConfig,
    pub activation: Activation,
    pub propagation: Propagation,
    pub psi_init: PsiInit,
    pub noise: NoiseSharing,
    pub embed_mode: EmbedMode,
    /// Multiplier on the link log-likelihood.
    pub link_weight: f64,
    /// Multiplier on the view reconstruction log-likelihoods.
    pub recon_weight: f64,
    /// Add the continuous Bernoulli normalizing constant to the link term.
    pub normalized_link: bool,
    /// `log sigma` of every encoder is clamped to `[-c, c]`.
    pub logsigma_clamp: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 3,
            hops: 3,
            layers: 4,
            hidden: 1024,
            batch_size: 512,
            dropout: 0.5,
            learning_rate: 1e-4,
            epochs: 100,
            seed: 0,
            mc_samples: 1,
            adam: AdamConfig::default(),
            activation: Activation::Relu,
            propagation: Propagation::Sym,
            psi_init: PsiInit::DataVariance,
            noise: NoiseSharing::Shared,
            embed_mode: EmbedMode::FullGraph,
            link_weight: 1.0,
            recon_weight: 1.0,
            normalized_link: false,
            logsigma_clamp: 6.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent_dim", self.latent_dim),
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("mc_samples", self.mc_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.logsigma_clamp > 0.0) {
            return Err(Error::Config("logsigma_clamp must be positive".into()));
        }
        if self.link_weight < 0.0 || self.recon_weight < 0.0 {
            return Err(Error::Config("term weights must be nonnegative".into()));
        }
        Ok(())
    }

    /// Number of noise slots per Monte Carlo sample.
    pub(crate) fn noise_slots(&self, n_views: usize) -> usize {
        match self.noise {
            NoiseSharing::Shared => 1,
            NoiseSharing::PerView => n_views + 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.hidden, c.layers, c.hops, c.batch_size), (1024, 4, 3, 512));
        assert_eq!(c.dropout, 0.5);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TrainConfig { dropout: 1.0, ..Default::default() },
            TrainConfig { hidden: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { mc_samples: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c: TrainConfig = toml::from_str("hidden = 64\nnoise = \"per_view\"").unwrap();
        assert_eq!(c.hidden, 64);
        assert_eq!(c.noise, NoiseSharing::PerView);
        assert_eq!(c.batch_size, 512);
    }
}
