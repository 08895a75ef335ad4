use crate::model::config::AdamConfig;
use crate::model::params::ModelParams;
use crate::real::Real;

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    config: AdamConfig,
    m: ModelParams<F>,
    v: ModelParams<F>,
    t: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(params: &ModelParams<F>, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Moves `params` against `grads`.
    pub fn update(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>, learning_rate: f64) {
        self.t += 1;
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let t = self.t as i32;
        let step = F::of(learning_rate * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t)));
        let eps = F::of(self.config.epsilon);
        let (fb1, fb2) = (F::of(b1), F::of(b2));
        let (cb1, cb2) = (F::of(1.0 - b1), F::of(1.0 - b2));
        let g_tensors = grads.tensors();
        for (((p, m), v), g) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(&g_tensors)
        {
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data) {
                *m = fb1 * *m + cb1 * g;
                *v = fb2 * *v + cb2 * g * g;
                *p -= step * *m / (v.sqrt() + eps);
            }
        }
    }
}
