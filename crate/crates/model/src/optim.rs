//! Adaptive moment estimation with decoupled weight decay (applied to
//! weight matrices only; biases and normalization parameters are left
//! undecayed).

use std::collections::BTreeMap;

use crate::layers::ParamVisitor;
use crate::tensor::Tensor;

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    state: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            state: BTreeMap::new(),
        }
    }

    /// One update over every visited parameter; call after gradients for
    /// the step have been accumulated.
    pub fn step(&mut self, visit: impl FnOnce(&mut dyn ParamVisitor)) {
        self.t += 1;
        let t = self.t;
        let (b1, b2, eps, lr, wd) = (self.beta1, self.beta2, self.eps, self.lr, self.weight_decay);
        let state = &mut self.state;
        let mut update = move |name: &str, param: &mut Tensor, grad: &mut Tensor| {
            let (m, v) = state
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; param.numel()], vec![0.0; param.numel()]));
            let bc1 = 1.0 - b1.powi(t as i32);
            let bc2 = 1.0 - b2.powi(t as i32);
            let decay = wd > 0.0 && name.ends_with(".w");
            for i in 0..param.numel() {
                let g = grad.data[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                if decay {
                    param.data[i] -= lr * wd * param.data[i];
                }
                param.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        visit(&mut update);
    }
}
