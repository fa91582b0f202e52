use crate::params::ParamStore;
use crate::Scalar;

/// Adam hyper-parameters; the defaults are the usual `(0.9, 0.999, 1e-8)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of a parameter slice. `step` counts from 1.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    let step_size = T::from_f64(lr / c1);
    let inv_c2 = T::from_f64(1.0 / c2);
    let eps = T::from_f64(cfg.eps);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        params[i] -= step_size * m[i] / ((v[i] * inv_c2).sqrt() + eps);
    }
}

/// Adam moments for every tensor of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = |_| store.iter().map(|(_, p)| vec![T::zero(); p.value.len()]).collect();
        Self {
            config,
            m: zeros(()),
            v: zeros(()),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies the accumulated gradients of `store` with learning rate `lr`.
    pub fn step(&mut self, store: &mut ParamStore<T>, lr: f64) {
        self.step += 1;
        for (i, p) in store.iter_mut().enumerate() {
            adam_step(
                p.value.data_mut(),
                &p.grad,
                &mut self.m[i],
                &mut self.v[i],
                self.step,
                lr,
                &self.config,
            );
        }
    }
}

/// Cosine annealing from `lr0` at step 0 down to 0 at `total_steps`.
pub fn cosine_lr(step: u64, total_steps: u64, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = (step.min(total_steps) as f64) / total_steps as f64;
    (0.5 * lr0 * (1.0 + (std::f64::consts::PI * frac).cos())).max(0.0)
}
