//! Compact encoder-decoder segmentation network with pyramid-style
//! decoding: a strided convolutional encoder, 1x1 lateral projections,
//! nearest-neighbor top-down upsampling with addition, and a shared-width
//! smoothing stage per level.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::layers::{BatchNorm2d, Conv2d, MaxPool2, ParamVisitor, Relu, Upsample2};
use crate::tensor::Tensor;

pub const N_CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegNetConfig {
    pub input_bands: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_width: usize,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        Self {
            input_bands: 3,
            encoder_widths: vec![16, 32, 64, 128],
            decoder_width: 64,
        }
    }
}

impl SegNetConfig {
    /// Input spatial dimensions must divide by 2^depth.
    pub fn stride_factor(&self) -> usize {
        1 << self.encoder_widths.len()
    }
}

#[derive(Debug, Clone)]
struct EncoderStage {
    conv: Conv2d,
    bn: BatchNorm2d,
    relu: Relu,
    pool: MaxPool2,
}

#[derive(Debug, Clone)]
struct SmoothStage {
    conv: Conv2d,
    bn: BatchNorm2d,
    relu: Relu,
}

/// The full network. `forward` caches activations when training so that
/// `backward` can run; inference mode leaves no caches and uses frozen
/// normalization statistics.
#[derive(Debug, Clone)]
pub struct SegNet {
    pub config: SegNetConfig,
    stages: Vec<EncoderStage>,
    laterals: Vec<Conv2d>,
    smooths: Vec<SmoothStage>,
    head: SmoothStage,
    classifier: Conv2d,
    up: Upsample2,
    // training caches for the decoder merge points
    cache_feats: Vec<Tensor>,
}

impl SegNet {
    pub fn new(config: SegNetConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut stages = Vec::new();
        let mut prev = config.input_bands;
        for &width in &config.encoder_widths {
            stages.push(EncoderStage {
                conv: Conv2d::new(prev, width, 3, rng),
                bn: BatchNorm2d::new(width),
                relu: Relu::default(),
                pool: MaxPool2::default(),
            });
            prev = width;
        }
        let d = config.decoder_width;
        let laterals = config
            .encoder_widths
            .iter()
            .map(|&w| Conv2d::new(w, d, 1, rng))
            .collect();
        // one smoothing block per merge (all levels except the top)
        let smooths = (0..config.encoder_widths.len().saturating_sub(1))
            .map(|_| SmoothStage {
                conv: Conv2d::new(d, d, 3, rng),
                bn: BatchNorm2d::new(d),
                relu: Relu::default(),
            })
            .collect();
        let head = SmoothStage {
            conv: Conv2d::new(d, d, 3, rng),
            bn: BatchNorm2d::new(d),
            relu: Relu::default(),
        };
        let classifier = Conv2d::new(d, N_CLASSES, 1, rng);
        Self {
            config,
            stages,
            laterals,
            smooths,
            head,
            classifier,
            up: Upsample2,
            cache_feats: Vec::new(),
        }
    }

    pub fn from_seed(config: SegNetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(config, &mut rng)
    }

    /// Produces per-pixel class logits at the input resolution:
    /// `[n, 4, h, w]` for an `[n, bands, h, w]` input.
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4();
        if c != self.config.input_bands {
            return Err(ModelError::ShapeError(format!(
                "input has {c} bands, network expects {}",
                self.config.input_bands
            )));
        }
        let factor = self.config.stride_factor();
        if h % factor != 0 || w % factor != 0 {
            return Err(ModelError::ShapeError(format!(
                "crop {h}x{w} not divisible by 2^{} = {factor}",
                self.config.encoder_widths.len()
            )));
        }

        // encoder: feature per level, each at half the previous resolution
        let mut feats = Vec::with_capacity(self.stages.len());
        let mut cur = x.clone();
        for stage in &mut self.stages {
            let z = stage.conv.forward(&cur, train);
            let z = stage.bn.forward(&z, train);
            let z = stage.relu.forward(&z, train);
            let z = stage.pool.forward(&z, train);
            feats.push(z.clone());
            cur = z;
        }

        // top-down pyramid with lateral additions
        let top = self.laterals.last_mut().unwrap().forward(feats.last().unwrap(), train);
        let mut p = top;
        for level in (0..self.stages.len() - 1).rev() {
            let lateral = self.laterals[level].forward(&feats[level], train);
            let upsampled = self.up.forward(&p);
            let mut merged = lateral;
            for (m, u) in merged.data.iter_mut().zip(&upsampled.data) {
                *m += u;
            }
            let s = &mut self.smooths[level];
            let z = s.conv.forward(&merged, train);
            let z = s.bn.forward(&z, train);
            p = s.relu.forward(&z, train);
        }

        // head at the finest pyramid level (half input resolution), then
        // upsample to full resolution for the cheap 1x1 classifier
        let z = self.head.conv.forward(&p, train);
        let z = self.head.bn.forward(&z, train);
        let z = self.head.relu.forward(&z, train);
        let z = self.up.forward(&z);
        let logits = self.classifier.forward(&z, train);

        if train {
            self.cache_feats = feats;
        }
        Ok(logits)
    }

    /// Backpropagates `dlogits` and accumulates parameter gradients.
    pub fn backward(&mut self, dlogits: &Tensor) {
        let d = self.classifier.backward(dlogits);
        let d = self.up.backward(&d);
        let d = self.head.relu.backward(&d);
        let d = self.head.bn.backward(&d);
        let mut d = self.head.conv.backward(&d);

        // reverse the top-down pass
        let mut d_feats: Vec<Option<Tensor>> = vec![None; self.stages.len()];
        for level in 0..self.stages.len() - 1 {
            // d is the gradient at the smoothed output of `level`
            let s = &mut self.smooths[level];
            let dz = s.relu.backward(&d);
            let dz = s.bn.backward(&dz);
            let d_merged = s.conv.backward(&dz);
            // merged = lateral(feats[level]) + up(p_{level+1})
            let d_lat = self.laterals[level].backward(&d_merged);
            d_feats[level] = Some(d_lat);
            d = self.up.backward(&d_merged);
        }
        let top_level = self.stages.len() - 1;
        let d_top = self.laterals[top_level].backward(&d);
        d_feats[top_level] = Some(d_top);

        // encoder backward, deepest stage first; each stage receives the
        // pyramid gradient plus whatever flowed down from deeper stages
        let mut d_down: Option<Tensor> = None;
        for level in (0..self.stages.len()).rev() {
            let mut grad = d_feats[level].take().unwrap();
            if let Some(dd) = d_down {
                for (g, v) in grad.data.iter_mut().zip(&dd.data) {
                    *g += v;
                }
            }
            let stage = &mut self.stages[level];
            let g = stage.pool.backward(&grad);
            let g = stage.relu.backward(&g);
            let g = stage.bn.backward(&g);
            let g = stage.conv.backward(&g);
            d_down = Some(g);
        }
    }

    pub fn visit_params(&mut self, v: &mut dyn ParamVisitor) {
        for (i, stage) in self.stages.iter_mut().enumerate() {
            stage.conv.visit_params(&format!("enc{i}.conv"), v);
            stage.bn.visit_params(&format!("enc{i}.bn"), v);
        }
        for (i, lat) in self.laterals.iter_mut().enumerate() {
            lat.visit_params(&format!("lat{i}"), v);
        }
        for (i, s) in self.smooths.iter_mut().enumerate() {
            s.conv.visit_params(&format!("smooth{i}.conv"), v);
            s.bn.visit_params(&format!("smooth{i}.bn"), v);
        }
        self.head.conv.visit_params("head.conv", v);
        self.head.bn.visit_params("head.bn", v);
        self.classifier.visit_params("head.out", v);
    }

    pub fn visit_state(&mut self, v: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, stage) in self.stages.iter_mut().enumerate() {
            stage.bn.visit_state(&format!("enc{i}.bn"), v);
        }
        for (i, s) in self.smooths.iter_mut().enumerate() {
            s.bn.visit_state(&format!("smooth{i}.bn"), v);
        }
        self.head.bn.visit_state("head.bn", v);
    }

    pub fn param_count(&mut self) -> usize {
        let mut count = 0usize;
        self.visit_params(&mut |_: &str, p: &mut Tensor, _: &mut Tensor| {
            count += p.numel();
        });
        count
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_: &str, _: &mut Tensor, g: &mut Tensor| {
            g.fill(0.0);
        });
    }
}
