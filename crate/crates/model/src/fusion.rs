//! Multi-modal fusion head: the masked mean of the segmentation logits
//! concatenated with the standardized auxiliary features, pushed through
//! three fully connected layers (ReLU and dropout after the first and
//! second) to produce the four class logits.

use rand_chacha::ChaCha8Rng;

use crate::layers::{Dropout, Linear, ParamVisitor};
use crate::segnet::N_CLASSES;

#[derive(Debug, Clone)]
pub struct FusionHead {
    fc1: Linear,
    fc2: Linear,
    fc3: Linear,
    drop1: Dropout,
    drop2: Dropout,
    relu1_mask: Vec<bool>,
    relu2_mask: Vec<bool>,
    pub aux_dim: usize,
}

impl FusionHead {
    pub fn new(aux_dim: usize, hidden: &[usize], dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(hidden.len(), 2, "fusion head uses exactly two hidden widths");
        Self {
            fc1: Linear::new(N_CLASSES + aux_dim, hidden[0], rng),
            fc2: Linear::new(hidden[0], hidden[1], rng),
            fc3: Linear::new(hidden[1], N_CLASSES, rng),
            drop1: Dropout::new(dropout),
            drop2: Dropout::new(dropout),
            relu1_mask: Vec::new(),
            relu2_mask: Vec::new(),
            aux_dim,
        }
    }

    /// `input` is `[mean_region_logits (4) ++ aux]`.
    pub fn forward(
        &mut self,
        input: &[f64],
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> [f64; N_CLASSES] {
        debug_assert_eq!(input.len(), N_CLASSES + self.aux_dim);
        let z1 = self.fc1.forward(input, train);
        let a1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
        if train {
            self.relu1_mask = z1.iter().map(|&v| v > 0.0).collect();
        }
        let d1 = self.drop1.forward(&a1, train, rng);
        let z2 = self.fc2.forward(&d1, train);
        let a2: Vec<f64> = z2.iter().map(|&v| v.max(0.0)).collect();
        if train {
            self.relu2_mask = z2.iter().map(|&v| v > 0.0).collect();
        }
        let d2 = self.drop2.forward(&a2, train, rng);
        let out = self.fc3.forward(&d2, train);
        [out[0], out[1], out[2], out[3]]
    }

    /// Backpropagates the class-logit gradient, accumulating parameter
    /// gradients and returning the gradient on the input vector.
    pub fn backward(&mut self, d_out: &[f64; N_CLASSES]) -> Vec<f64> {
        let d = self.fc3.backward(d_out);
        let d = self.drop2.backward(&d);
        let d: Vec<f64> = d
            .iter()
            .zip(&self.relu2_mask)
            .map(|(v, &keep)| if keep { *v } else { 0.0 })
            .collect();
        let d = self.fc2.backward(&d);
        let d = self.drop1.backward(&d);
        let d: Vec<f64> = d
            .iter()
            .zip(&self.relu1_mask)
            .map(|(v, &keep)| if keep { *v } else { 0.0 })
            .collect();
        self.fc1.backward(&d)
    }

    pub fn visit_params(&mut self, v: &mut dyn ParamVisitor) {
        self.fc1.visit_params("fusion.fc1", v);
        self.fc2.visit_params("fusion.fc2", v);
        self.fc3.visit_params("fusion.fc3", v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut head = FusionHead::new(3, &[8, 8], 0.0, &mut rng());
        head.visit_params(&mut |_: &str, p: &mut Tensor, _: &mut Tensor| p.fill(0.0));
        let out = head.forward(&[1.0, 2.0, 3.0, 4.0, 0.1, 0.2, 0.3], false, &mut rng());
        assert_eq!(out, [0.0; 4]);
    }

    #[test]
    fn zero_aux_with_constructed_weights_depends_only_on_logits() {
        let mut head = FusionHead::new(2, &[6, 6], 0.0, &mut rng());
        let out_zero_aux = head.forward(&[0.5, -0.2, 0.1, 0.9, 0.0, 0.0], false, &mut rng());
        // changing the aux columns' weights cannot matter when aux is 0
        head.visit_params(&mut |name: &str, p: &mut Tensor, _: &mut Tensor| {
            if name == "fusion.fc1.w" {
                // columns 4..6 multiply the aux entries
                let n_in = 6;
                for o in 0..p.shape[0] {
                    p.data[o * n_in + 4] = 123.0;
                    p.data[o * n_in + 5] = -77.0;
                }
            }
        });
        let out_changed = head.forward(&[0.5, -0.2, 0.1, 0.9, 0.0, 0.0], false, &mut rng());
        assert_eq!(out_zero_aux, out_changed);
    }

    #[test]
    fn inference_is_deterministic() {
        let mut head = FusionHead::new(4, &[16, 16], 0.5, &mut rng());
        let input = vec![0.3, -0.1, 0.8, 0.0, 1.0, -1.0, 0.5, 0.25];
        let a = head.forward(&input, false, &mut rng());
        let b = head.forward(&input, false, &mut rng());
        assert_eq!(a, b);
    }
}
