//! Small fully connected ReLU network trained with mini-batch gradient
//! descent on softmax cross-entropy.

use forest_core::DriverClass;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linear::argmax_class;
use crate::{BaselineError, Result};

const EPOCHS: usize = 200;
const BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
struct DenseLayer {
    // row-major [out x in]
    w: Vec<f64>,
    b: Vec<f64>,
    n_in: usize,
    n_out: usize,
}

impl DenseLayer {
    fn new(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        // He-uniform fan-in initialization
        let bound = (6.0 / n_in as f64).sqrt();
        let w = (0..n_in * n_out)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self {
            w,
            b: vec![0.0; n_out],
            n_in,
            n_out,
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            for (wi, xi) in row.iter().zip(x) {
                *out_v += wi * xi;
            }
        }
        out
    }
}

/// Fully connected ReLU classifier. Architecture and learning rate come
/// from the hyperparameter grid; epochs and batch size are fixed
/// internals. Deterministic given the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    pub n_features: usize,
}

impl MlpModel {
    pub fn fit(
        rows: &[Vec<f64>],
        labels: &[DriverClass],
        hidden_layers: usize,
        neurons: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).ok_or(BaselineError::EmptyTrainingSet)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut dims = vec![d];
        dims.extend(std::iter::repeat(neurons).take(hidden_layers));
        dims.push(4);
        let mut layers: Vec<DenseLayer> = dims
            .windows(2)
            .map(|w| DenseLayer::new(w[0], w[1], &mut rng))
            .collect();

        let mut order: Vec<usize> = (0..rows.len()).collect();
        for _ in 0..EPOCHS {
            order.shuffle(&mut rng);
            for batch in order.chunks(BATCH) {
                let mut grads: Vec<(Vec<f64>, Vec<f64>)> = layers
                    .iter()
                    .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                    .collect();
                for &idx in batch {
                    accumulate_example(&layers, &rows[idx], labels[idx], &mut grads);
                }
                let scale = learning_rate / batch.len() as f64;
                for (layer, (gw, gb)) in layers.iter_mut().zip(&grads) {
                    for (w, g) in layer.w.iter_mut().zip(gw) {
                        *w -= scale * g;
                    }
                    for (b, g) in layer.b.iter_mut().zip(gb) {
                        *b -= scale * g;
                    }
                }
            }
        }
        Ok(Self {
            layers,
            n_features: d,
        })
    }

    pub fn scores(&self, row: &[f64]) -> [f64; 4] {
        let mut x = row.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(&x);
            if i + 1 < self.layers.len() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            x = z;
        }
        [x[0], x[1], x[2], x[3]]
    }

    pub fn predict(&self, row: &[f64]) -> DriverClass {
        argmax_class(&self.scores(row))
    }

    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&(self.n_features as u64).to_le_bytes());
        buf.extend_from_slice(&(self.layers.len() as u64).to_le_bytes());
        for layer in &self.layers {
            buf.extend_from_slice(&(layer.n_in as u64).to_le_bytes());
            buf.extend_from_slice(&(layer.n_out as u64).to_le_bytes());
            for v in layer.w.iter().chain(&layer.b) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| BaselineError::CorruptModel(m.to_string());
        let mut pos = 0usize;
        let mut read_u64 = |pos: &mut usize| -> Result<u64> {
            let end = *pos + 8;
            if end > bytes.len() {
                return Err(corrupt("truncated mlp blob"));
            }
            let v = u64::from_le_bytes(bytes[*pos..end].try_into().unwrap());
            *pos = end;
            Ok(v)
        };
        let n_features = read_u64(&mut pos)? as usize;
        let n_layers = read_u64(&mut pos)? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let n_in = read_u64(&mut pos)? as usize;
            let n_out = read_u64(&mut pos)? as usize;
            let count = n_in * n_out + n_out;
            let end = pos + count * 8;
            if end > bytes.len() {
                return Err(corrupt("truncated mlp weights"));
            }
            let values: Vec<f64> = bytes[pos..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            pos = end;
            let (w, b) = values.split_at(n_in * n_out);
            layers.push(DenseLayer {
                w: w.to_vec(),
                b: b.to_vec(),
                n_in,
                n_out,
            });
        }
        Ok(Self { layers, n_features })
    }
}

fn accumulate_example(
    layers: &[DenseLayer],
    row: &[f64],
    label: DriverClass,
    grads: &mut [(Vec<f64>, Vec<f64>)],
) {
    // forward pass, caching post-activation values per layer
    let mut activations: Vec<Vec<f64>> = vec![row.to_vec()];
    for (i, layer) in layers.iter().enumerate() {
        let mut z = layer.forward(activations.last().unwrap());
        if i + 1 < layers.len() {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        activations.push(z);
    }

    // softmax cross-entropy delta at the output
    let logits = activations.last().unwrap();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let denom: f64 = exp.iter().sum();
    let mut delta: Vec<f64> = exp.iter().map(|e| e / denom).collect();
    delta[label.index()] -= 1.0;

    for i in (0..layers.len()).rev() {
        let input = &activations[i];
        let (gw, gb) = &mut grads[i];
        for o in 0..layers[i].n_out {
            let d = delta[o];
            gb[o] += d;
            let row_g = &mut gw[o * layers[i].n_in..(o + 1) * layers[i].n_in];
            for (g, x) in row_g.iter_mut().zip(input) {
                *g += d * x;
            }
        }
        if i > 0 {
            let mut prev = vec![0.0f64; layers[i].n_in];
            for (j, p) in prev.iter_mut().enumerate() {
                for o in 0..layers[i].n_out {
                    *p += delta[o] * layers[i].w[o * layers[i].n_in + j];
                }
                // ReLU mask of the post-activation cached value
                if activations[i][j] <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_linearly_separable_classes() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &(cx, cy)) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
            .iter()
            .enumerate()
        {
            for i in 0..10 {
                rows.push(vec![cx + (i % 3) as f64 * 0.05, cy + (i / 3) as f64 * 0.05]);
                labels.push(DriverClass::from_index(c).unwrap());
            }
        }
        let model = MlpModel::fit(&rows, &labels, 1, 32, 1e-2, 3).unwrap();
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &l)| model.predict(r) == l)
            .count();
        assert!(correct as f64 / rows.len() as f64 >= 0.95);
    }

    #[test]
    fn fit_is_deterministic_under_seed() {
        let rows: Vec<Vec<f64>> = (0..16).map(|i| vec![(i % 4) as f64, (i / 4) as f64]).collect();
        let labels: Vec<DriverClass> = (0..16)
            .map(|i| DriverClass::from_index(i % 4).unwrap())
            .collect();
        let a = MlpModel::fit(&rows, &labels, 2, 16, 1e-3, 11).unwrap();
        let b = MlpModel::fit(&rows, &labels, 2, 16, 1e-3, 11).unwrap();
        assert_eq!(a, b);
    }
}
