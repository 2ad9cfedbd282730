use rand::Rng;

use super::tensor::{axpy, dot};
use super::{join, FeatureMap, Module, Param};

/// Valid (unpadded), stride-1 convolution with a `(kernel, 1)` kernel:
/// it slides along time and treats every sensor channel independently.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub in_planes: usize,
    pub out_planes: usize,
    pub kernel: usize,
    /// `[out][in][kernel]`
    pub weight: Param,
    pub bias: Param,
}

impl Conv {
    pub fn new<R: Rng + ?Sized>(in_planes: usize, out_planes: usize, kernel: usize, gain: f64, rng: &mut R) -> Self {
        Conv {
            in_planes,
            out_planes,
            kernel,
            weight: Param::fan_in(out_planes * in_planes * kernel, in_planes * kernel, gain, rng),
            bias: Param::zeros(out_planes),
        }
    }

    pub fn output_len(&self, time: usize) -> Option<usize> {
        (time >= self.kernel).then(|| time - self.kernel + 1)
    }

    #[inline]
    fn w(&self, q: usize, p: usize, k: usize) -> usize {
        (q * self.in_planes + p) * self.kernel + k
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        assert_eq!(x.planes, self.in_planes, "conv input planes");
        let t_out = self.output_len(x.time).expect("conv input shorter than kernel");
        let width = x.width;
        let span = t_out * width;
        let mut y = FeatureMap::zeros(x.batch, self.out_planes, t_out, width);
        for b in 0..x.batch {
            for q in 0..self.out_planes {
                let yq = y.plane_mut(b, q);
                yq.iter_mut().for_each(|v| *v = self.bias.value[q]);
                for p in 0..self.in_planes {
                    let xp = x.plane(b, p);
                    for k in 0..self.kernel {
                        let w = self.weight.value[self.w(q, p, k)];
                        axpy(w, &xp[k * width..k * width + span], yq);
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &FeatureMap, dy: &FeatureMap) -> FeatureMap {
        let width = x.width;
        let span = dy.time * width;
        let mut dx = FeatureMap::zeros(x.batch, x.planes, x.time, width);
        for b in 0..x.batch {
            for q in 0..self.out_planes {
                let dyq = dy.plane(b, q);
                self.bias.grad[q] += dyq.iter().sum::<f64>();
                for p in 0..self.in_planes {
                    let xp = x.plane(b, p);
                    for k in 0..self.kernel {
                        let idx = self.w(q, p, k);
                        self.weight.grad[idx] += dot(dyq, &xp[k * width..k * width + span]);
                        let w = self.weight.value[idx];
                        axpy(w, dyq, &mut dx.plane_mut(b, p)[k * width..k * width + span]);
                    }
                }
            }
        }
        dx
    }
}

impl Module for Conv {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn visit_tensors(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64])) {
        f(join(prefix, "weight"), &self.weight.value);
        f(join(prefix, "bias"), &self.bias.value);
    }

    fn visit_tensors_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        f(join(prefix, "weight"), &mut self.weight.value);
        f(join(prefix, "bias"), &mut self.bias.value);
    }
}

/// Transposed counterpart of [`Conv`]: stride 1, output length
/// `time + kernel - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose {
    pub in_planes: usize,
    pub out_planes: usize,
    pub kernel: usize,
    /// `[in][out][kernel]`
    pub weight: Param,
    pub bias: Param,
}

impl ConvTranspose {
    pub fn new<R: Rng + ?Sized>(in_planes: usize, out_planes: usize, kernel: usize, gain: f64, rng: &mut R) -> Self {
        ConvTranspose {
            in_planes,
            out_planes,
            kernel,
            weight: Param::fan_in(in_planes * out_planes * kernel, in_planes * kernel, gain, rng),
            bias: Param::zeros(out_planes),
        }
    }

    pub fn output_len(&self, time: usize) -> usize {
        time + self.kernel - 1
    }

    #[inline]
    fn w(&self, p: usize, q: usize, k: usize) -> usize {
        (p * self.out_planes + q) * self.kernel + k
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        assert_eq!(x.planes, self.in_planes, "transposed conv input planes");
        let width = x.width;
        let span = x.time * width;
        let mut y = FeatureMap::zeros(x.batch, self.out_planes, self.output_len(x.time), width);
        for b in 0..x.batch {
            for q in 0..self.out_planes {
                let yq = y.plane_mut(b, q);
                yq.iter_mut().for_each(|v| *v = self.bias.value[q]);
                for p in 0..self.in_planes {
                    let xp = x.plane(b, p);
                    for k in 0..self.kernel {
                        let w = self.weight.value[self.w(p, q, k)];
                        axpy(w, xp, &mut yq[k * width..k * width + span]);
                    }
                }
            }
        }
        y
    }

    pub fn backward(&mut self, x: &FeatureMap, dy: &FeatureMap) -> FeatureMap {
        let width = x.width;
        let span = x.time * width;
        let mut dx = FeatureMap::zeros(x.batch, x.planes, x.time, width);
        for b in 0..x.batch {
            for q in 0..self.out_planes {
                let dyq = dy.plane(b, q);
                self.bias.grad[q] += dyq.iter().sum::<f64>();
                for p in 0..self.in_planes {
                    let xp = x.plane(b, p);
                    for k in 0..self.kernel {
                        let idx = self.w(p, q, k);
                        let window = &dyq[k * width..k * width + span];
                        self.weight.grad[idx] += dot(xp, window);
                        let w = self.weight.value[idx];
                        axpy(w, window, dx.plane_mut(b, p));
                    }
                }
            }
        }
        dx
    }
}

impl Module for ConvTranspose {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn visit_tensors(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64])) {
        f(join(prefix, "weight"), &self.weight.value);
        f(join(prefix, "bias"), &self.bias.value);
    }

    fn visit_tensors_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        f(join(prefix, "weight"), &mut self.weight.value);
        f(join(prefix, "bias"), &mut self.bias.value);
    }
}

/// Per-plane batch normalization with learnable scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub planes: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight kept on the previous running value at each update.
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    count: usize,
}

impl BatchNorm {
    pub fn new(planes: usize) -> Self {
        BatchNorm {
            planes,
            gamma: Param::filled(planes, 1.0),
            beta: Param::zeros(planes),
            running_mean: vec![0.0; planes],
            running_var: vec![1.0; planes],
            momentum: 0.9,
            eps: 1e-5,
        }
    }

    /// Normalizes with the statistics of `x` itself.
    pub fn forward_batch(&self, x: &FeatureMap) -> (FeatureMap, BnCache) {
        assert_eq!(x.planes, self.planes, "batch norm planes");
        let count = x.batch * x.plane_len();
        let mut mean = vec![0.0; self.planes];
        let mut var = vec![0.0; self.planes];
        for p in 0..self.planes {
            let mut s = 0.0;
            for b in 0..x.batch {
                s += x.plane(b, p).iter().sum::<f64>();
            }
            let m = s / count as f64;
            let mut v = 0.0;
            for b in 0..x.batch {
                v += x.plane(b, p).iter().map(|&xi| (xi - m) * (xi - m)).sum::<f64>();
            }
            mean[p] = m;
            var[p] = v / count as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = FeatureMap::zeros(x.batch, x.planes, x.time, x.width);
        let mut y = FeatureMap::zeros(x.batch, x.planes, x.time, x.width);
        for b in 0..x.batch {
            for p in 0..self.planes {
                let (g, bt) = (self.gamma.value[p], self.beta.value[p]);
                let src = x.plane(b, p);
                let xh = xhat.plane_mut(b, p);
                for (h, &xi) in xh.iter_mut().zip(src) {
                    *h = (xi - mean[p]) * inv_std[p];
                }
                let yp = y.plane_mut(b, p);
                for (yi, &h) in yp.iter_mut().zip(xhat.plane(b, p)) {
                    *yi = g * h + bt;
                }
            }
        }
        let cache = BnCache {
            xhat: xhat.data,
            inv_std,
            mean,
            var,
            count,
        };
        (y, cache)
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &FeatureMap) -> FeatureMap {
        let mut y = x.clone();
        for b in 0..x.batch {
            for p in 0..self.planes {
                let inv = 1.0 / (self.running_var[p] + self.eps).sqrt();
                let (g, bt, m) = (self.gamma.value[p], self.beta.value[p], self.running_mean[p]);
                y.plane_mut(b, p).iter_mut().for_each(|v| *v = g * (*v - m) * inv + bt);
            }
        }
        y
    }

    /// Folds one batch's statistics into the running averages.
    pub fn track(&mut self, cache: &BnCache) {
        let unbias = if cache.count > 1 {
            cache.count as f64 / (cache.count - 1) as f64
        } else {
            1.0
        };
        for p in 0..self.planes {
            self.running_mean[p] = self.momentum * self.running_mean[p] + (1.0 - self.momentum) * cache.mean[p];
            self.running_var[p] = self.momentum * self.running_var[p] + (1.0 - self.momentum) * cache.var[p] * unbias;
        }
    }

    pub fn backward(&mut self, cache: &BnCache, dy: &FeatureMap) -> FeatureMap {
        let mut dx = FeatureMap::zeros(dy.batch, dy.planes, dy.time, dy.width);
        let n = cache.count as f64;
        let plane_len = dy.plane_len();
        for p in 0..self.planes {
            let g = self.gamma.value[p];
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for b in 0..dy.batch {
                let off = (b * dy.planes + p) * plane_len;
                let xh = &cache.xhat[off..off + plane_len];
                let d = dy.plane(b, p);
                sum_dy += d.iter().sum::<f64>();
                sum_dy_xhat += dot(d, xh);
            }
            self.gamma.grad[p] += sum_dy_xhat;
            self.beta.grad[p] += sum_dy;
            // dxhat = g * dy; dx = inv_std / n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
            let scale = g * cache.inv_std[p] / n;
            for b in 0..dy.batch {
                let off = (b * dy.planes + p) * plane_len;
                let xh = &cache.xhat[off..off + plane_len];
                let d = dy.plane(b, p);
                let out = dx.plane_mut(b, p);
                for i in 0..plane_len {
                    out[i] = scale * (n * d[i] - sum_dy - xh[i] * sum_dy_xhat);
                }
            }
        }
        dx
    }
}

impl Module for BatchNorm {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn visit_tensors(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64])) {
        f(join(prefix, "gamma"), &self.gamma.value);
        f(join(prefix, "beta"), &self.beta.value);
        f(join(prefix, "running_mean"), &self.running_mean);
        f(join(prefix, "running_var"), &self.running_var);
    }

    fn visit_tensors_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        f(join(prefix, "gamma"), &mut self.gamma.value);
        f(join(prefix, "beta"), &mut self.beta.value);
        f(join(prefix, "running_mean"), &mut self.running_mean);
        f(join(prefix, "running_var"), &mut self.running_var);
    }
}

/// `(2, 1)` max pooling along time; a trailing odd step is dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MaxPool;

#[derive(Debug, Clone)]
pub struct PoolCache {
    /// Flat input index of the winner for every output element.
    winners: Vec<usize>,
    input_time: usize,
}

impl MaxPool {
    pub fn output_len(time: usize) -> usize {
        time / 2
    }

    pub fn forward(&self, x: &FeatureMap) -> (FeatureMap, PoolCache) {
        let t_out = Self::output_len(x.time);
        let w = x.width;
        let mut y = FeatureMap::zeros(x.batch, x.planes, t_out, w);
        let mut winners = Vec::with_capacity(y.data.len());
        let in_plane = x.plane_len();
        for b in 0..x.batch {
            for p in 0..x.planes {
                let base = (b * x.planes + p) * in_plane;
                let src = x.plane(b, p);
                let dst = y.plane_mut(b, p);
                for t in 0..t_out {
                    for c in 0..w {
                        let i0 = 2 * t * w + c;
                        let i1 = i0 + w;
                        // ties go to the earlier step
                        let i = if src[i1] > src[i0] { i1 } else { i0 };
                        dst[t * w + c] = src[i];
                        winners.push(base + i);
                    }
                }
            }
        }
        (
            y,
            PoolCache {
                winners,
                input_time: x.time,
            },
        )
    }

    pub fn backward(&self, cache: &PoolCache, dy: &FeatureMap) -> FeatureMap {
        let mut dx = FeatureMap::zeros(dy.batch, dy.planes, cache.input_time, dy.width);
        for (&i, &g) in cache.winners.iter().zip(&dy.data) {
            dx.data[i] += g;
        }
        dx
    }
}

/// Nearest-neighbour upsampling along time to an exact target length,
/// `out[t] = in[min(t / 2, len - 1)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Upsample {
    pub target: usize,
}

impl Upsample {
    #[inline]
    fn source(&self, t: usize, input_time: usize) -> usize {
        (t / 2).min(input_time - 1)
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let w = x.width;
        let mut y = FeatureMap::zeros(x.batch, x.planes, self.target, w);
        for b in 0..x.batch {
            for p in 0..x.planes {
                let src = x.plane(b, p);
                let dst = y.plane_mut(b, p);
                for t in 0..self.target {
                    let s = self.source(t, x.time);
                    dst[t * w..(t + 1) * w].copy_from_slice(&src[s * w..(s + 1) * w]);
                }
            }
        }
        y
    }

    pub fn backward(&self, input_time: usize, dy: &FeatureMap) -> FeatureMap {
        let w = dy.width;
        let mut dx = FeatureMap::zeros(dy.batch, dy.planes, input_time, w);
        for b in 0..dy.batch {
            for p in 0..dy.planes {
                let g = dy.plane(b, p);
                let dst = dx.plane_mut(b, p);
                for t in 0..self.target {
                    let s = self.source(t, input_time);
                    for c in 0..w {
                        dst[s * w + c] += g[t * w + c];
                    }
                }
            }
        }
        dx
    }
}

/// Affine map on row-major `[batch][features]` buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        Linear {
            inputs,
            outputs,
            weight: Param::fan_in(inputs * outputs, inputs, gain, rng),
            bias: Param::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            inputs,
            outputs,
            weight: Param::zeros(inputs * outputs),
            bias: Param::zeros(outputs),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len() % self.inputs, 0, "linear input width");
        let batch = x.len() / self.inputs;
        let mut y = Vec::with_capacity(batch * self.outputs);
        for row in x.chunks_exact(self.inputs) {
            for o in 0..self.outputs {
                let w = &self.weight.value[o * self.inputs..(o + 1) * self.inputs];
                y.push(self.bias.value[o] + dot(w, row));
            }
        }
        y
    }

    pub fn backward(&mut self, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; x.len()];
        for ((row, drow), dxrow) in x
            .chunks_exact(self.inputs)
            .zip(dy.chunks_exact(self.outputs))
            .zip(dx.chunks_exact_mut(self.inputs))
        {
            for (o, &g) in drow.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                self.bias.grad[o] += g;
                let range = o * self.inputs..(o + 1) * self.inputs;
                axpy(g, row, &mut self.weight.grad[range.clone()]);
                axpy(g, &self.weight.value[range], dxrow);
            }
        }
        dx
    }
}

impl Module for Linear {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn visit_tensors(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64])) {
        f(join(prefix, "weight"), &self.weight.value);
        f(join(prefix, "bias"), &self.bias.value);
    }

    fn visit_tensors_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        f(join(prefix, "weight"), &mut self.weight.value);
        f(join(prefix, "bias"), &mut self.bias.value);
    }
}
