//! Per-layer forward/backward kernels.
//!
//! All kernels are plain serial loops over explicitly shaped buffers; shape
//! validation happens once in the network constructor, so indexing here is
//! unchecked arithmetic on row-major layouts.

use rand_chacha::ChaCha8Rng;

use crate::activation::ActKind;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    pub fn weight_count(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_ch
    }
}

/// y[b,o] = bias[o] + sum_i x[b,i] * w[i*O + o]
pub fn dense_forward(x: &Tensor, w: &[f64], bias: &[f64], outputs: usize) -> Tensor {
    let b = x.shape[0];
    let inputs = x.row_len();
    let mut y = Tensor::zeros(&[b, outputs]);
    for bi in 0..b {
        let xr = x.row(bi);
        let yr = y.row_mut(bi);
        yr.copy_from_slice(bias);
        for (i, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[i * outputs..(i + 1) * outputs];
            for o in 0..outputs {
                yr[o] += xv * wrow[o];
            }
        }
    }
    let _ = inputs;
    y
}

/// Returns (dw, dbias, dx).
pub fn dense_backward(x: &Tensor, w: &[f64], dy: &Tensor) -> (Vec<f64>, Vec<f64>, Tensor) {
    let b = x.shape[0];
    let inputs = x.row_len();
    let outputs = dy.row_len();
    let mut dw = vec![0.0; inputs * outputs];
    let mut dbias = vec![0.0; outputs];
    let mut dx = Tensor::zeros(&x.shape);
    for bi in 0..b {
        let xr = x.row(bi);
        let gr = dy.row(bi);
        let dxr = dx.row_mut(bi);
        for o in 0..outputs {
            dbias[o] += gr[o];
        }
        for i in 0..inputs {
            let dwrow = &mut dw[i * outputs..(i + 1) * outputs];
            let wrow = &w[i * outputs..(i + 1) * outputs];
            let xv = xr[i];
            let mut acc = 0.0;
            for o in 0..outputs {
                dwrow[o] += xv * gr[o];
                acc += wrow[o] * gr[o];
            }
            dxr[i] = acc;
        }
    }
    (dw, dbias, dx)
}

/// Zero-padded cross-correlation, weights laid out [co][ci][u][v].
pub fn conv_forward(x: &Tensor, w: &[f64], bias: &[f64], spec: &ConvSpec) -> Tensor {
    let (b, _c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (oh, ow) = spec.out_hw(h, wd);
    let k = spec.kernel;
    let mut y = Tensor::zeros(&[b, spec.out_ch, oh, ow]);
    for bi in 0..b {
        for co in 0..spec.out_ch {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = bias[co];
                    for ci in 0..spec.in_ch {
                        let xplane =
                            &x.data[((bi * spec.in_ch + ci) * h) * wd..((bi * spec.in_ch + ci) * h + h) * wd];
                        let wbase = ((co * spec.in_ch + ci) * k) * k;
                        for u in 0..k {
                            let r = (oi * spec.stride + u) as isize - spec.padding as isize;
                            if r < 0 || r as usize >= h {
                                continue;
                            }
                            let xrow = &xplane[r as usize * wd..(r as usize + 1) * wd];
                            for v in 0..k {
                                let c = (oj * spec.stride + v) as isize - spec.padding as isize;
                                if c < 0 || c as usize >= wd {
                                    continue;
                                }
                                acc += w[wbase + u * k + v] * xrow[c as usize];
                            }
                        }
                    }
                    y.data[((bi * spec.out_ch + co) * oh + oi) * ow + oj] = acc;
                }
            }
        }
    }
    y
}

/// Returns (dw, dbias, dx); scatters gradients by walking output positions.
pub fn conv_backward(x: &Tensor, w: &[f64], dy: &Tensor, spec: &ConvSpec) -> (Vec<f64>, Vec<f64>, Tensor) {
    let (b, _c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (oh, ow) = spec.out_hw(h, wd);
    let k = spec.kernel;
    let mut dw = vec![0.0; spec.weight_count()];
    let mut dbias = vec![0.0; spec.out_ch];
    let mut dx = Tensor::zeros(&x.shape);
    for bi in 0..b {
        for co in 0..spec.out_ch {
            for oi in 0..oh {
                for oj in 0..ow {
                    let g = dy.data[((bi * spec.out_ch + co) * oh + oi) * ow + oj];
                    if g == 0.0 {
                        continue;
                    }
                    dbias[co] += g;
                    for ci in 0..spec.in_ch {
                        let xoff = ((bi * spec.in_ch + ci) * h) * wd;
                        let wbase = ((co * spec.in_ch + ci) * k) * k;
                        for u in 0..k {
                            let r = (oi * spec.stride + u) as isize - spec.padding as isize;
                            if r < 0 || r as usize >= h {
                                continue;
                            }
                            for v in 0..k {
                                let c = (oj * spec.stride + v) as isize - spec.padding as isize;
                                if c < 0 || c as usize >= wd {
                                    continue;
                                }
                                let xi = xoff + r as usize * wd + c as usize;
                                dw[wbase + u * k + v] += g * x.data[xi];
                                dx.data[xi] += g * w[wbase + u * k + v];
                            }
                        }
                    }
                }
            }
        }
    }
    (dw, dbias, dx)
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Unbiased estimate, the value folded into running_var.
    pub batch_var_unbiased: Vec<f64>,
    pub train: bool,
}

/// Train mode: normalize with biased batch statistics per channel.
pub fn bn_forward_train(x: &Tensor, gamma: &[f64], beta: &[f64]) -> (Tensor, BnCache) {
    let (b, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let m = (b * h * w) as f64;
    let plane = h * w;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            for i in 0..plane {
                mean[ci] += x.data[base + i];
            }
        }
    }
    for mv in &mut mean {
        *mv /= m;
    }
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            for i in 0..plane {
                let d = x.data[base + i] - mean[ci];
                var[ci] += d * d;
            }
        }
    }
    for vv in &mut var {
        *vv /= m;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = Tensor::zeros(&x.shape);
    let mut y = Tensor::zeros(&x.shape);
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            for i in 0..plane {
                let xh = (x.data[base + i] - mean[ci]) * inv_std[ci];
                xhat.data[base + i] = xh;
                y.data[base + i] = gamma[ci] * xh + beta[ci];
            }
        }
    }
    let corr = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
    let batch_var_unbiased = var.iter().map(|&v| v * corr).collect();
    (
        y,
        BnCache {
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var_unbiased,
            train: true,
        },
    )
}

/// Test mode: normalize with running statistics; an affine map per channel.
pub fn bn_forward_test(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> (Tensor, BnCache) {
    let (b, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let plane = h * w;
    let inv_std: Vec<f64> = running_var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = Tensor::zeros(&x.shape);
    let mut y = Tensor::zeros(&x.shape);
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            for i in 0..plane {
                let xh = (x.data[base + i] - running_mean[ci]) * inv_std[ci];
                xhat.data[base + i] = xh;
                y.data[base + i] = gamma[ci] * xh + beta[ci];
            }
        }
    }
    (
        y,
        BnCache {
            xhat,
            inv_std,
            batch_mean: running_mean.to_vec(),
            batch_var_unbiased: running_var.to_vec(),
            train: false,
        },
    )
}

/// Returns (dgamma, dbeta, dx). Train mode differentiates through the batch
/// statistics; test mode treats normalization as a fixed affine map.
pub fn bn_backward(cache: &BnCache, gamma: &[f64], dy: &Tensor) -> (Vec<f64>, Vec<f64>, Tensor) {
    let (b, c, h, w) = (
        cache.xhat.shape[0],
        cache.xhat.shape[1],
        cache.xhat.shape[2],
        cache.xhat.shape[3],
    );
    let plane = h * w;
    let m = (b * h * w) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            for i in 0..plane {
                dgamma[ci] += dy.data[base + i] * cache.xhat.data[base + i];
                dbeta[ci] += dy.data[base + i];
            }
        }
    }
    let mut dx = Tensor::zeros(&cache.xhat.shape);
    if cache.train {
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * plane;
                let scale = gamma[ci] * cache.inv_std[ci];
                for i in 0..plane {
                    let g = dy.data[base + i];
                    dx.data[base + i] = scale
                        * (g - dbeta[ci] / m - cache.xhat.data[base + i] * dgamma[ci] / m);
                }
            }
        }
    } else {
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * plane;
                let scale = gamma[ci] * cache.inv_std[ci];
                for i in 0..plane {
                    dx.data[base + i] = dy.data[base + i] * scale;
                }
            }
        }
    }
    (dgamma, dbeta, dx)
}

/// Elementwise activation; returns (y, local derivative per element). Train
/// mode may consume the RNG (RReLU slope sampling), test mode never does.
pub fn act_forward(
    x: &Tensor,
    kind: ActKind,
    train: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> (Tensor, Tensor) {
    let mut y = Tensor::zeros(&x.shape);
    let mut slopes = Tensor::zeros(&x.shape);
    if train && kind == ActKind::RRelu {
        let rng = rng.expect("rrelu train forward requires an RNG (checked by Network::forward)");
        for (i, &v) in x.data.iter().enumerate() {
            let (yv, sv) = kind.eval_train(v, rng);
            y.data[i] = yv;
            slopes.data[i] = sv;
        }
    } else {
        for (i, &v) in x.data.iter().enumerate() {
            y.data[i] = kind.eval(v);
            slopes.data[i] = kind.derivative(v);
        }
    }
    (y, slopes)
}

pub fn act_backward(slopes: &Tensor, dy: &Tensor) -> Tensor {
    Tensor {
        shape: dy.shape.clone(),
        data: dy
            .data
            .iter()
            .zip(&slopes.data)
            .map(|(&g, &s)| g * s)
            .collect(),
    }
}
