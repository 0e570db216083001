use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates and the number of steps taken.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub step: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// Bias-corrected Adam update of one flat buffer at step `t` (1-based).
pub fn adam_update<T: Float>(param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig) {
    let b1 = T::from_f64(cfg.beta1).expect("finite");
    let b2 = T::from_f64(cfg.beta2).expect("finite");
    let correction1 = 1.0 - cfg.beta1.powf(t as f64);
    let correction2 = 1.0 - cfg.beta2.powf(t as f64);
    let step = T::from_f64(cfg.lr / correction1).expect("finite");
    let inv_c2 = T::from_f64(1.0 / correction2).expect("finite");
    let eps = T::from_f64(cfg.eps).expect("finite");
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        param[i] -= step * m[i] / ((v[i] * inv_c2).sqrt() + eps);
    }
}

pub fn adam_step<T: Float>(params: &mut ModelParams<T>, grads: &ModelParams<T>, state: &mut AdamState<T>, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step;
    let grads = grads.named_tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((mut p, (_, g)), mut m), mut v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
        adam_update(
            p.as_slice_mut().expect("contiguous"),
            g.as_slice().expect("contiguous"),
            m.as_slice_mut().expect("contiguous"),
            v.as_slice_mut().expect("contiguous"),
            t,
            cfg,
        );
    }
}
