//! Network building blocks with hand-derived backward passes. Each layer
//! owns its parameters, gradient buffers, and the forward caches its
//! backward needs. Gradients accumulate until `zero_grads`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Visitor over named (parameter, gradient) pairs.
pub trait ParamVisitor {
    fn visit(&mut self, name: &str, param: &mut Tensor, grad: &mut Tensor);
}

impl<F: FnMut(&str, &mut Tensor, &mut Tensor)> ParamVisitor for F {
    fn visit(&mut self, name: &str, param: &mut Tensor, grad: &mut Tensor) {
        self(name, param, grad)
    }
}

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// 2D convolution, stride 1, same padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Tensor, // [c_out, c_in, k, k]
    pub b: Tensor, // [c_out]
    pub gw: Tensor,
    pub gb: Tensor,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    cache_x: Option<Tensor>,
}

impl Conv2d {
    pub fn new(c_in: usize, c_out: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = c_in * k * k;
        Self {
            w: Tensor::from_vec(&[c_out, c_in, k, k], he_uniform(rng, fan_in, c_out * fan_in)),
            b: Tensor::zeros(&[c_out]),
            gw: Tensor::zeros(&[c_out, c_in, k, k]),
            gb: Tensor::zeros(&[c_out]),
            c_in,
            c_out,
            k,
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, c_in, h, w) = x.dims4();
        debug_assert_eq!(c_in, self.c_in);
        let pad = self.k / 2;
        let mut out = Tensor::zeros(&[n, self.c_out, h, w]);

        for ni in 0..n {
            for co in 0..self.c_out {
                out.plane_mut(ni, co).fill(self.b.data[co]);
                for ci in 0..self.c_in {
                    let src = x.plane(ni, ci);
                    let dst = out.plane_mut(ni, co);
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let wv =
                                self.w.data[((co * self.c_in + ci) * self.k + ky) * self.k + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            shifted_axpy(dst, src, wv, h, w, ky as isize - pad as isize, kx as isize - pad as isize);
                        }
                    }
                }
            }
        }
        if train {
            self.cache_x = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache_x.as_ref().expect("forward(train) before backward");
        let (n, _, h, w) = x.dims4();
        let pad = self.k / 2;
        let mut dx = Tensor::zeros(&x.shape);

        for ni in 0..n {
            for co in 0..self.c_out {
                let dyp = dy.plane(ni, co);
                self.gb.data[co] += dyp.iter().sum::<f64>();
                for ci in 0..self.c_in {
                    let xp = x.plane(ni, ci);
                    // weight gradients: correlation of dy with shifted x
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let g = shifted_dot(
                                dyp,
                                xp,
                                h,
                                w,
                                ky as isize - pad as isize,
                                kx as isize - pad as isize,
                            );
                            self.gw.data[((co * self.c_in + ci) * self.k + ky) * self.k + kx] += g;
                        }
                    }
                    // input gradients: full correlation with flipped kernel
                    let dxp = dx.plane_mut(ni, ci);
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let wv =
                                self.w.data[((co * self.c_in + ci) * self.k + ky) * self.k + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            shifted_axpy(
                                dxp,
                                dyp,
                                wv,
                                h,
                                w,
                                pad as isize - ky as isize,
                                pad as isize - kx as isize,
                            );
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn visit_params(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        v.visit(&format!("{prefix}.w"), &mut self.w, &mut self.gw);
        v.visit(&format!("{prefix}.b"), &mut self.b, &mut self.gb);
    }
}

/// `dst[y][x] += a * src[y + oy][x + ox]` over the valid overlap.
#[inline]
fn shifted_axpy(dst: &mut [f64], src: &[f64], a: f64, h: usize, w: usize, oy: isize, ox: isize) {
    let y_lo = (-oy).max(0) as usize;
    let y_hi = ((h as isize - oy).min(h as isize)).max(0) as usize;
    let x_lo = (-ox).max(0) as usize;
    let x_hi = ((w as isize - ox).min(w as isize)).max(0) as usize;
    for y in y_lo..y_hi {
        let sy = (y as isize + oy) as usize;
        let d = &mut dst[y * w + x_lo..y * w + x_hi];
        let s = &src[sy * w + (x_lo as isize + ox) as usize..sy * w + (x_hi as isize + ox) as usize];
        for (dv, sv) in d.iter_mut().zip(s) {
            *dv += a * sv;
        }
    }
}

/// `sum over valid (y, x) of a[y][x] * b[y + oy][x + ox]`.
#[inline]
fn shifted_dot(a: &[f64], b: &[f64], h: usize, w: usize, oy: isize, ox: isize) -> f64 {
    let y_lo = (-oy).max(0) as usize;
    let y_hi = ((h as isize - oy).min(h as isize)).max(0) as usize;
    let x_lo = (-ox).max(0) as usize;
    let x_hi = ((w as isize - ox).min(w as isize)).max(0) as usize;
    let mut acc = 0.0;
    for y in y_lo..y_hi {
        let by = (y as isize + oy) as usize;
        let av = &a[y * w + x_lo..y * w + x_hi];
        let bv = &b[by * w + (x_lo as isize + ox) as usize..by * w + (x_hi as isize + ox) as usize];
        for (x, yv) in av.iter().zip(bv) {
            acc += x * yv;
        }
    }
    acc
}

/// Batch normalization over (n, h, w) per channel, with running
/// statistics for inference.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub g_gamma: Tensor,
    pub g_beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
    channels: usize,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor,
    invstd: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::from_vec(&[channels], vec![1.0; channels]),
            beta: Tensor::zeros(&[channels]),
            g_gamma: Tensor::zeros(&[channels]),
            g_beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_vec(&[channels], vec![1.0; channels]),
            momentum: 0.1,
            eps: 1e-5,
            channels,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, c, h, w) = x.dims4();
        debug_assert_eq!(c, self.channels);
        let m = (n * h * w) as f64;
        let mut out = Tensor::zeros(&x.shape);

        if train {
            let mut xhat = Tensor::zeros(&x.shape);
            let mut invstd = vec![0.0; c];
            for ci in 0..c {
                let mut sum = 0.0;
                for ni in 0..n {
                    sum += x.plane(ni, ci).iter().sum::<f64>();
                }
                let mean = sum / m;
                let mut var = 0.0;
                for ni in 0..n {
                    for &v in x.plane(ni, ci) {
                        let d = v - mean;
                        var += d * d;
                    }
                }
                var /= m;
                let istd = 1.0 / (var + self.eps).sqrt();
                invstd[ci] = istd;
                let (g, b) = (self.gamma.data[ci], self.beta.data[ci]);
                for ni in 0..n {
                    let xp = x.plane(ni, ci);
                    let xh = xhat.plane_mut(ni, ci);
                    for (o, &v) in xh.iter_mut().zip(xp) {
                        *o = (v - mean) * istd;
                    }
                    let op = out.plane_mut(ni, ci);
                    let xh = xhat.plane(ni, ci);
                    for (o, &v) in op.iter_mut().zip(xh) {
                        *o = g * v + b;
                    }
                }
                self.running_mean.data[ci] =
                    (1.0 - self.momentum) * self.running_mean.data[ci] + self.momentum * mean;
                self.running_var.data[ci] =
                    (1.0 - self.momentum) * self.running_var.data[ci] + self.momentum * var;
            }
            self.cache = Some(BnCache { xhat, invstd });
        } else {
            for ci in 0..c {
                let mean = self.running_mean.data[ci];
                let istd = 1.0 / (self.running_var.data[ci] + self.eps).sqrt();
                let (g, b) = (self.gamma.data[ci], self.beta.data[ci]);
                for ni in 0..n {
                    let xp = x.plane(ni, ci);
                    let op = out.plane_mut(ni, ci);
                    for (o, &v) in op.iter_mut().zip(xp) {
                        *o = g * (v - mean) * istd + b;
                    }
                }
            }
        }
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let cache = self.cache.as_ref().expect("forward(train) before backward");
        let (n, c, h, w) = dy.dims4();
        let m = (n * h * w) as f64;
        let mut dx = Tensor::zeros(&dy.shape);

        for ci in 0..c {
            let g = self.gamma.data[ci];
            let istd = cache.invstd[ci];
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for ni in 0..n {
                let dyp = dy.plane(ni, ci);
                let xh = cache.xhat.plane(ni, ci);
                for (&d, &xv) in dyp.iter().zip(xh) {
                    sum_dy += d;
                    sum_dy_xhat += d * xv;
                }
            }
            self.g_beta.data[ci] += sum_dy;
            self.g_gamma.data[ci] += sum_dy_xhat;
            // dx = gamma*istd/m * (m*dy - sum_dy - xhat * sum_dy_xhat)
            let scale = g * istd / m;
            for ni in 0..n {
                let dyp = dy.plane(ni, ci);
                let xh = cache.xhat.plane(ni, ci);
                let dxp = dx.plane_mut(ni, ci);
                for ((o, &d), &xv) in dxp.iter_mut().zip(dyp).zip(xh) {
                    *o = scale * (m * d - sum_dy - xv * sum_dy_xhat);
                }
            }
        }
        dx
    }

    pub fn visit_params(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        v.visit(&format!("{prefix}.gamma"), &mut self.gamma, &mut self.g_gamma);
        v.visit(&format!("{prefix}.beta"), &mut self.beta, &mut self.g_beta);
    }

    /// Running statistics are state (not trainable), but must persist in
    /// checkpoints; exposed by name for serialization.
    pub fn visit_state(&mut self, prefix: &str, v: &mut dyn FnMut(&str, &mut Tensor)) {
        v(&format!("{prefix}.running_mean"), &mut self.running_mean);
        v(&format!("{prefix}.running_var"), &mut self.running_var);
    }
}

/// ReLU with cached activation mask.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let mut out = x.clone();
        if train {
            let mask = x.data.iter().map(|&v| v > 0.0).collect();
            self.mask = Some(mask);
        }
        for v in &mut out.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let mask = self.mask.as_ref().expect("forward(train) before backward");
        let mut dx = dy.clone();
        for (v, &keep) in dx.data.iter_mut().zip(mask) {
            if !keep {
                *v = 0.0;
            }
        }
        dx
    }
}

/// 2x2 max pooling, stride 2. Ties break toward the first element in
/// scan order so pooling is deterministic.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    argmax: Option<Vec<usize>>,
    in_shape: Vec<usize>,
}

impl MaxPool2 {
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, c, h, w) = x.dims4();
        debug_assert!(h % 2 == 0 && w % 2 == 0);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        for ni in 0..n {
            for ci in 0..c {
                let xp = x.plane(ni, ci);
                let base = (ni * c + ci) * oh * ow;
                let op = out.plane_mut(ni, ci);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best_idx = (2 * oy) * w + 2 * ox;
                        let mut best = xp[best_idx];
                        for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                            let idx = (2 * oy + dy) * w + 2 * ox + dx;
                            if xp[idx] > best {
                                best = xp[idx];
                                best_idx = idx;
                            }
                        }
                        op[oy * ow + ox] = best;
                        argmax[base + oy * ow + ox] = best_idx;
                    }
                }
            }
        }
        if train {
            self.argmax = Some(argmax);
            self.in_shape = x.shape.clone();
        }
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let argmax = self.argmax.as_ref().expect("forward(train) before backward");
        let (n, c, oh, ow) = dy.dims4();
        let mut dx = Tensor::zeros(&self.in_shape);
        for ni in 0..n {
            for ci in 0..c {
                let dyp = dy.plane(ni, ci);
                let base = (ni * c + ci) * oh * ow;
                let dxp = dx.plane_mut(ni, ci);
                for i in 0..oh * ow {
                    dxp[argmax[base + i]] += dyp[i];
                }
            }
        }
        dx
    }
}

/// Nearest-neighbor 2x upsampling.
#[derive(Debug, Clone, Default)]
pub struct Upsample2;

impl Upsample2 {
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dims4();
        let mut out = Tensor::zeros(&[n, c, h * 2, w * 2]);
        for ni in 0..n {
            for ci in 0..c {
                let xp = x.plane(ni, ci);
                let op = out.plane_mut(ni, ci);
                for y in 0..h * 2 {
                    for x_ in 0..w * 2 {
                        op[y * w * 2 + x_] = xp[(y / 2) * w + x_ / 2];
                    }
                }
            }
        }
        out
    }

    pub fn backward(&self, dy: &Tensor) -> Tensor {
        let (n, c, h2, w2) = dy.dims4();
        let (h, w) = (h2 / 2, w2 / 2);
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        for ni in 0..n {
            for ci in 0..c {
                let dyp = dy.plane(ni, ci);
                let dxp = dx.plane_mut(ni, ci);
                for y in 0..h2 {
                    for x_ in 0..w2 {
                        dxp[(y / 2) * w + x_ / 2] += dyp[y * w2 + x_];
                    }
                }
            }
        }
        dx
    }
}

/// Fully connected layer over flat vectors.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor, // [out, in]
    pub b: Tensor, // [out]
    pub gw: Tensor,
    pub gb: Tensor,
    pub n_in: usize,
    pub n_out: usize,
    cache_x: Option<Vec<f64>>,
}

impl Linear {
    pub fn new(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Tensor::from_vec(&[n_out, n_in], he_uniform(rng, n_in, n_in * n_out)),
            b: Tensor::zeros(&[n_out]),
            gw: Tensor::zeros(&[n_out, n_in]),
            gb: Tensor::zeros(&[n_out]),
            n_in,
            n_out,
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &[f64], train: bool) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let mut out = self.b.data.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.w.data[o * self.n_in..(o + 1) * self.n_in];
            for (wv, xv) in row.iter().zip(x) {
                *out_v += wv * xv;
            }
        }
        if train {
            self.cache_x = Some(x.to_vec());
        }
        out
    }

    pub fn backward(&mut self, d_out: &[f64]) -> Vec<f64> {
        let x = self.cache_x.as_ref().expect("forward(train) before backward");
        let mut dx = vec![0.0; self.n_in];
        for o in 0..self.n_out {
            let d = d_out[o];
            self.gb.data[o] += d;
            let row = &self.w.data[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut self.gw.data[o * self.n_in..(o + 1) * self.n_in];
            for j in 0..self.n_in {
                grow[j] += d * x[j];
                dx[j] += d * row[j];
            }
        }
        dx
    }

    pub fn visit_params(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        v.visit(&format!("{prefix}.w"), &mut self.w, &mut self.gw);
        v.visit(&format!("{prefix}.b"), &mut self.b, &mut self.gb);
    }
}

/// Inverted dropout over flat vectors; identity at inference.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        Self { p, mask: None }
    }

    pub fn forward(&mut self, x: &[f64], train: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if !train || self.p == 0.0 {
            self.mask = None;
            return x.to_vec();
        }
        let keep = 1.0 - self.p;
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
            .collect();
        let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some(mask);
        out
    }

    pub fn backward(&mut self, d_out: &[f64]) -> Vec<f64> {
        match &self.mask {
            Some(mask) => d_out.iter().zip(mask).map(|(d, m)| d * m).collect(),
            None => d_out.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn conv_identity_kernel_passes_through() {
        let mut conv = Conv2d::new(1, 1, 3, &mut rng());
        conv.w.fill(0.0);
        conv.w.data[4] = 1.0; // center tap
        conv.b.fill(0.0);
        let x = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|i| i as f64).collect());
        let y = conv.forward(&x, false);
        assert_eq!(y.data, x.data);
    }

    #[test]
    fn conv_shape_is_preserved() {
        let mut conv = Conv2d::new(3, 5, 3, &mut rng());
        let x = Tensor::zeros(&[2, 3, 8, 8]);
        let y = conv.forward(&x, false);
        assert_eq!(y.shape, vec![2, 5, 8, 8]);
    }

    #[test]
    fn maxpool_forward_and_routing() {
        let mut pool = MaxPool2::default();
        let x = Tensor::from_vec(
            &[1, 1, 2, 2],
            vec![1.0, 4.0, 2.0, 3.0],
        );
        let y = pool.forward(&x, true);
        assert_eq!(y.data, vec![4.0]);
        let dy = Tensor::from_vec(&[1, 1, 1, 1], vec![2.5]);
        let dx = pool.backward(&dy);
        assert_eq!(dx.data, vec![0.0, 2.5, 0.0, 0.0]);
    }

    #[test]
    fn upsample_round_trip_shapes() {
        let up = Upsample2;
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = up.forward(&x);
        assert_eq!(y.shape, vec![1, 1, 4, 4]);
        assert_eq!(y.data[0], 1.0);
        assert_eq!(y.data[5], 1.0); // (1,1) maps back to source (0,0)
        assert_eq!(y.data[6], 2.0); // (2,1) maps back to source (1,0)
        let dy = Tensor::from_vec(&[1, 1, 4, 4], vec![1.0; 16]);
        let dx = up.backward(&dy);
        assert_eq!(dx.data, vec![4.0; 4]);
    }

    #[test]
    fn batchnorm_normalizes_in_train_mode() {
        let mut bn = BatchNorm2d::new(1);
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = bn.forward(&x, true);
        let mean: f64 = y.data.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        let var: f64 = y.data.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-3); // eps shrinks it slightly
    }

    #[test]
    fn batchnorm_inference_uses_running_stats_batch_independent() {
        let mut bn = BatchNorm2d::new(1);
        // accumulate running stats
        for i in 0..20 {
            let x = Tensor::from_vec(
                &[2, 1, 2, 2],
                (0..8).map(|j| (i + j) as f64 * 0.1).collect(),
            );
            bn.forward(&x, true);
        }
        let single = Tensor::from_vec(&[1, 1, 2, 2], vec![0.3, 0.5, 0.7, 0.9]);
        let batched = Tensor::from_vec(
            &[2, 1, 2, 2],
            vec![0.3, 0.5, 0.7, 0.9, 10.0, 20.0, 30.0, 40.0],
        );
        let y1 = bn.forward(&single, false);
        let y2 = bn.forward(&batched, false);
        for i in 0..4 {
            assert_eq!(y1.data[i], y2.data[i]);
        }
    }

    #[test]
    fn dropout_zero_p_is_identity_and_eval_ignores_rng() {
        let mut d = Dropout::new(0.0);
        let x = vec![1.0, -2.0, 3.0];
        assert_eq!(d.forward(&x, true, &mut rng()), x);
        let mut d2 = Dropout::new(0.5);
        assert_eq!(d2.forward(&x, false, &mut rng()), x);
    }
}
