//! Decoupled-weight-decay adaptive-moment optimizer with two learning-rate
//! groups: encoder parameters and everything else (decoder, attention head).

use alloc::vec::Vec;

use crate::config::TrainConfig;
use crate::scalar::Scalar;
use crate::store::VarStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamW<T: Scalar> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    /// Base learning rate per variable (encoder vs decoder group).
    base_lr: Vec<f64>,
    /// Whether weight decay applies (matrices yes, vectors no).
    decay: Vec<bool>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(store: &VarStore<T>, cfg: &TrainConfig) -> Self {
        let mut m = Vec::with_capacity(store.len());
        let mut v = Vec::with_capacity(store.len());
        let mut base_lr = Vec::with_capacity(store.len());
        let mut decay = Vec::with_capacity(store.len());
        for var in store.iter() {
            m.push(Tensor::zeros(var.value.shape()));
            v.push(Tensor::zeros(var.value.shape()));
            base_lr.push(if var.name.starts_with("enc.") { cfg.lr_encoder } else { cfg.lr_decoder });
            decay.push(var.value.shape().len() >= 2);
        }
        AdamW {
            m,
            v,
            base_lr,
            decay,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: 1e-8,
            weight_decay: cfg.weight_decay,
            t: 0,
        }
    }

    /// One update from the gradients currently held in the store, with the
    /// schedule multiplier applied to both group rates.
    pub fn step(&mut self, store: &mut VarStore<T>, lr_scale: f64) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.beta2);
        for (idx, var) in store.iter_mut().enumerate() {
            let lr = self.base_lr[idx] * lr_scale;
            if lr == 0.0 {
                continue;
            }
            let lr_t = T::from_f64(lr / bc1);
            let decay_t = T::from_f64(lr * self.weight_decay);
            let eps = T::from_f64(self.eps);
            let inv_sqrt_bc2 = T::from_f64(1.0 / libm::sqrt(bc2));
            let apply_decay = self.decay[idx];
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let grads = var.grad.data();
            for (((p, &g), mi), vi) in
                var.value.data_mut().iter_mut().zip(grads.iter()).zip(m.iter_mut()).zip(v.iter_mut())
            {
                *mi = b1 * *mi + one_m_b1 * g;
                *vi = b2 * *vi + one_m_b2 * g * g;
                let denom = (*vi).sqrt() * inv_sqrt_bc2 + eps;
                let mut update = lr_t * (*mi / denom);
                if apply_decay {
                    update += decay_t * *p;
                }
                *p -= update;
            }
        }
    }
}
