use super::matrix::Matrix;
use super::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Applied { step: u64 },
    /// A gradient held NaN or ±inf; parameters and moments were left untouched.
    Skipped { param: String },
}

/// Adam with bias correction. Moment buffers are laid out like the store.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros = |store: &ParamStore| {
            store
                .ids()
                .map(|id| {
                    let (r, c) = store.value(id).shape();
                    Matrix::zeros(r, c)
                })
                .collect::<Vec<_>>()
        };
        Adam { cfg, first: zeros(store), second: zeros(store), step: 0 }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Number of applied updates so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> StepOutcome {
        if let Some(bad) = store.ids().find(|&id| !store.grad(id).all_finite()) {
            let param = store.name(bad).to_string();
            log::warn!("non-finite gradient in `{param}`; skipping Adam step {}", self.step + 1);
            store.zero_grads();
            return StepOutcome::Skipped { param };
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            let i = id.index();
            let grad = store.grad(id).data().to_vec();
            let (m, v) = (self.first[i].data_mut(), self.second[i].data_mut());
            let theta = store.value_mut(id).data_mut();
            for j in 0..grad.len() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                theta[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        store.zero_grads();
        StepOutcome::Applied { step: self.step }
    }
}
