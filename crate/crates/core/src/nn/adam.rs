//! Adam optimiser over a [`ParamStore`].

use crate::nn::autograd::Gradients;
use crate::nn::params::ParamStore;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every trainable parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        if self.m.is_empty() {
            self.m = store.params().iter().map(|p| vec![0.0; p.value.numel()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id.0) else {
                continue;
            };
            let param = store.param_mut(id);
            if !param.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            for (k, &gk) in g.data().iter().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
            }
            if self.lr == 0.0 {
                continue;
            }
            let lr = self.lr;
            let eps = self.eps;
            for (k, p) in param.value.data_mut().iter_mut().enumerate() {
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::autograd::backward;
    use crate::nn::ops::bce_with_logits;
    use crate::nn::params::{Mode, Session};
    use crate::nn::tensor::Tensor;

    #[test]
    fn first_step_moves_each_weight_by_about_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::new(vec![1, 1, 1, 2], vec![0.3, -0.2]));
        let target = Tensor::new(vec![1, 1, 1, 2], vec![1.0, 0.0]);
        let grads = {
            let s = Session::new(&store, Mode::Train);
            backward(&bce_with_logits(&s.var(id), &target))
        };
        let mut adam = Adam::new(0.01);
        adam.step(&mut store, &grads);
        let after = store.param(id).value.data();
        assert!((after[0] - 0.31).abs() < 1e-6);
        assert!((after[1] + 0.21).abs() < 1e-6);
    }

    #[test]
    fn zero_learning_rate_leaves_weights_bit_identical() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::new(vec![1, 1, 1, 1], vec![0.123456789]));
        let before = store.param(id).value.clone();
        let mut adam = Adam::new(0.0);
        for _ in 0..5 {
            let grads = {
                let s = Session::new(&store, Mode::Train);
                backward(&bce_with_logits(&s.var(id), &Tensor::full(&[1, 1, 1, 1], 1.0)))
            };
            adam.step(&mut store, &grads);
        }
        assert_eq!(store.param(id).value, before);
    }
}
