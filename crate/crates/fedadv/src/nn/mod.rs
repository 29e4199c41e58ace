//! From-scratch network engine: ordered layer descriptors over one flat f64
//! parameter vector.
//!
//! The flat layout is what makes weighted model averaging and binary
//! serialization trivial; every layer reads its slice at a precomputed
//! offset. Forward never mutates the network: train-mode batch-norm
//! statistics are returned in the cache and folded in explicitly via
//! [`Network::update_running_stats`], so two forward calls with the same
//! (params, mode, seed) agree bit for bit.

pub mod loss;
pub mod ops;
pub mod optim;
pub mod resnet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActKind;
use crate::error::{Error, Result};
use crate::rng::derived_rng;
use crate::tensor::Tensor;
use ops::{BnCache, ConvSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Activation {
        act: ActKind,
    },
    Flatten,
    /// Two 3x3-style convolutions with an identity shortcut: y = x + f(x),
    /// f = conv -> [bn] -> act -> conv -> [bn]. No activation after the sum,
    /// so zeroed convolution weights make the block an exact identity.
    Residual {
        channels: usize,
        kernel: usize,
        batch_norm: bool,
        act: ActKind,
    },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => out_ch * in_ch * kernel * kernel + out_ch,
            LayerSpec::BatchNorm { channels } => 2 * channels,
            LayerSpec::Activation { .. } | LayerSpec::Flatten => 0,
            LayerSpec::Residual {
                channels,
                kernel,
                batch_norm,
                ..
            } => {
                let conv = channels * channels * kernel * kernel + channels;
                let bn = if batch_norm { 2 * channels } else { 0 };
                2 * (conv + bn)
            }
        }
    }

    fn bn_site_count(&self) -> usize {
        match *self {
            LayerSpec::BatchNorm { .. } => 1,
            LayerSpec::Residual { batch_norm, .. } => {
                if batch_norm {
                    2
                } else {
                    0
                }
            }
            _ => 0,
        }
    }
}

/// Running statistics for one batch-norm site; model state but not part of
/// the trainable parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnState {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Momentum of the running-stat update: new = 0.9 * old + 0.1 * batch.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dims {
    Chw(usize, usize, usize),
    Flat(usize),
}

impl Dims {
    fn from_shape(shape: &[usize]) -> Result<Dims> {
        match shape {
            [c, h, w] => Ok(Dims::Chw(*c, *h, *w)),
            [d] => Ok(Dims::Flat(*d)),
            other => Err(Error::shape(format!(
                "input shape must be [C, H, W] or [D], got {:?}",
                other
            ))),
        }
    }

    fn size(&self) -> usize {
        match *self {
            Dims::Chw(c, h, w) => c * h * w,
            Dims::Flat(d) => d,
        }
    }

    fn to_vec(self) -> Vec<usize> {
        match self {
            Dims::Chw(c, h, w) => vec![c, h, w],
            Dims::Flat(d) => vec![d],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<LayerSpec>,
    pub params: Vec<f64>,
    pub mode: Mode,
    pub input_shape: Vec<usize>,
    offsets: Vec<usize>,
    bn_sites: Vec<BnState>,
    /// First batch-norm site index per layer (layers may own 0, 1 or 2 sites).
    bn_site_start: Vec<usize>,
    out_dims: Dims,
}

enum LayerCache {
    Dense { input: Tensor },
    Conv { input: Tensor },
    Bn(BnCache),
    Act { slopes: Tensor, input: Tensor },
    Flatten { in_shape: Vec<usize> },
    Residual(Box<ResidualCache>),
}

struct ResidualCache {
    input: Tensor,
    bn1: Option<BnCache>,
    act_input: Tensor,
    slopes: Tensor,
    conv2_in: Tensor,
    bn2: Option<BnCache>,
}

/// Saved intermediates from one cached forward pass.
pub struct Cache {
    items: Vec<LayerCache>,
}

pub struct LossGrads {
    pub loss: f64,
    pub grad_params: Vec<f64>,
    pub grad_input: Tensor,
}

impl Network {
    /// Validates the layer chain against `input_shape` ([C, H, W] for image
    /// input or [D] for flat input), lays out the flat parameter vector, and
    /// initializes weights with fan-in-scaled uniform draws from a stream
    /// derived from `init_seed`. Biases start at zero, batch-norm at
    /// gamma=1, beta=0, running stats (0, 1).
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, init_seed: u64) -> Result<Network> {
        let mut dims = Dims::from_shape(input_shape)?;
        if input_shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("input shape has a zero dimension".to_string()));
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut bn_site_start = Vec::with_capacity(layers.len());
        let mut total = 0usize;
        let mut sites = 0usize;
        for (i, layer) in layers.iter().enumerate() {
            offsets.push(total);
            bn_site_start.push(sites);
            total += layer.param_count();
            sites += layer.bn_site_count();
            dims = Self::check_layer(i, layer, dims)?;
        }

        let mut net = Network {
            layers,
            params: vec![0.0; total],
            mode: Mode::Test,
            input_shape: input_shape.to_vec(),
            offsets,
            bn_sites: Vec::new(),
            bn_site_start,
            out_dims: dims,
        };
        net.init_bn_sites();
        net.init_params(init_seed);
        Ok(net)
    }

    fn check_layer(i: usize, layer: &LayerSpec, dims: Dims) -> Result<Dims> {
        let err = |msg: String| Err(Error::shape(format!("layer {i}: {msg}")));
        match *layer {
            LayerSpec::Dense { inputs, outputs } => match dims {
                Dims::Flat(d) if d == inputs => Ok(Dims::Flat(outputs)),
                Dims::Flat(d) => err(format!("dense expects {inputs} inputs, chain provides {d}")),
                Dims::Chw(..) => err("dense needs flat input; insert a flatten layer".into()),
            },
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => match dims {
                Dims::Chw(c, h, w) if c == in_ch => {
                    if kernel == 0 || stride == 0 {
                        return err("conv kernel and stride must be positive".into());
                    }
                    if h + 2 * padding < kernel || w + 2 * padding < kernel {
                        return err(format!(
                            "kernel {kernel} exceeds padded input {}x{}",
                            h + 2 * padding,
                            w + 2 * padding
                        ));
                    }
                    let spec = ConvSpec {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        padding,
                    };
                    let (oh, ow) = spec.out_hw(h, w);
                    Ok(Dims::Chw(out_ch, oh, ow))
                }
                Dims::Chw(c, ..) => err(format!("conv expects {in_ch} channels, chain provides {c}")),
                Dims::Flat(_) => err("conv needs [C, H, W] input".into()),
            },
            LayerSpec::BatchNorm { channels } => match dims {
                Dims::Chw(c, ..) if c == channels => Ok(dims),
                Dims::Chw(c, ..) => err(format!("batchnorm expects {channels} channels, chain provides {c}")),
                Dims::Flat(_) => err("batchnorm needs [C, H, W] input".into()),
            },
            LayerSpec::Activation { .. } => Ok(dims),
            LayerSpec::Flatten => match dims {
                Dims::Chw(c, h, w) => Ok(Dims::Flat(c * h * w)),
                Dims::Flat(_) => err("flatten needs [C, H, W] input".into()),
            },
            LayerSpec::Residual {
                channels, kernel, ..
            } => match dims {
                Dims::Chw(c, h, w) if c == channels => {
                    if kernel % 2 == 0 {
                        return err("residual kernel must be odd to preserve spatial dims".into());
                    }
                    let pad = (kernel - 1) / 2;
                    if h + 2 * pad < kernel || w + 2 * pad < kernel {
                        return err("residual kernel exceeds input".into());
                    }
                    Ok(Dims::Chw(c, h, w))
                }
                Dims::Chw(c, ..) => err(format!("residual expects {channels} channels, chain provides {c}")),
                Dims::Flat(_) => err("residual needs [C, H, W] input".into()),
            },
        }
    }

    fn init_bn_sites(&mut self) {
        for layer in &self.layers {
            let channels = match *layer {
                LayerSpec::BatchNorm { channels } => vec![channels],
                LayerSpec::Residual {
                    channels,
                    batch_norm: true,
                    ..
                } => vec![channels, channels],
                _ => vec![],
            };
            for ch in channels {
                self.bn_sites.push(BnState {
                    mean: vec![0.0; ch],
                    var: vec![1.0; ch],
                });
            }
        }
    }

    fn init_params(&mut self, seed: u64) {
        let mut rng = derived_rng(seed, &[0x1217]);
        for (i, layer) in self.layers.iter().enumerate() {
            let off = self.offsets[i];
            match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let bound = 1.0 / (inputs as f64).sqrt();
                    for w in &mut self.params[off..off + inputs * outputs] {
                        *w = rng.random_range(-bound..bound);
                    }
                }
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => {
                    let bound = 1.0 / ((in_ch * kernel * kernel) as f64).sqrt();
                    for w in &mut self.params[off..off + out_ch * in_ch * kernel * kernel] {
                        *w = rng.random_range(-bound..bound);
                    }
                }
                LayerSpec::BatchNorm { channels } => {
                    for g in &mut self.params[off..off + channels] {
                        *g = 1.0;
                    }
                }
                LayerSpec::Residual {
                    channels,
                    kernel,
                    batch_norm,
                    ..
                } => {
                    let wcount = channels * channels * kernel * kernel;
                    let bound = 1.0 / ((channels * kernel * kernel) as f64).sqrt();
                    let bn = if batch_norm { 2 * channels } else { 0 };
                    let mut p = off;
                    for half in 0..2 {
                        let _ = half;
                        for w in &mut self.params[p..p + wcount] {
                            *w = rng.random_range(-bound..bound);
                        }
                        p += wcount + channels; // skip bias (zero)
                        if batch_norm {
                            for g in &mut self.params[p..p + channels] {
                                *g = 1.0;
                            }
                            p += bn;
                        }
                    }
                }
                LayerSpec::Activation { .. } | LayerSpec::Flatten => {}
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Values per example the network emits (class count for classifiers).
    pub fn output_dim(&self) -> usize {
        self.out_dims.size()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.out_dims.to_vec()
    }

    pub fn bn_states(&self) -> &[BnState] {
        &self.bn_sites
    }

    pub fn set_bn_states(&mut self, states: Vec<BnState>) -> Result<()> {
        if states.len() != self.bn_sites.len()
            || states
                .iter()
                .zip(&self.bn_sites)
                .any(|(a, b)| a.mean.len() != b.mean.len() || a.var.len() != b.var.len())
        {
            return Err(Error::shape("batch-norm state layout mismatch"));
        }
        self.bn_sites = states;
        Ok(())
    }

    /// Running stats flattened in site order (mean then var per site); used
    /// for weighted averaging across clients and for serialization.
    pub fn bn_state_vector(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for s in &self.bn_sites {
            v.extend_from_slice(&s.mean);
            v.extend_from_slice(&s.var);
        }
        v
    }

    pub fn load_bn_state_vector(&mut self, flat: &[f64]) -> Result<()> {
        let expect: usize = self.bn_sites.iter().map(|s| s.mean.len() + s.var.len()).sum();
        if flat.len() != expect {
            return Err(Error::shape(format!(
                "batch-norm state vector has {} values, expected {expect}",
                flat.len()
            )));
        }
        let mut p = 0;
        for s in &mut self.bn_sites {
            let n = s.mean.len();
            s.mean.copy_from_slice(&flat[p..p + n]);
            p += n;
            s.var.copy_from_slice(&flat[p..p + n]);
            p += n;
        }
        Ok(())
    }

    /// True when a train-mode forward pass will sample randomness.
    pub fn needs_rng(&self) -> bool {
        self.mode == Mode::Train
            && self.layers.iter().any(|l| {
                matches!(l, LayerSpec::Activation { act: ActKind::RRelu })
                    || matches!(
                        l,
                        LayerSpec::Residual {
                            act: ActKind::RRelu,
                            ..
                        }
                    )
            })
    }

    pub fn forward(&self, x: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let (y, _) = self.forward_cached(x, rng)?;
        Ok(y)
    }

    pub fn forward_cached(
        &self,
        x: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Cache)> {
        if x.shape.len() < 2 || x.shape[1..] != self.input_shape[..] {
            return Err(Error::shape(format!(
                "batch shape {:?} does not end in network input shape {:?}",
                x.shape, self.input_shape
            )));
        }
        if self.needs_rng() && rng.is_none() {
            return Err(Error::config(
                "rng",
                "train-mode forward requires an RNG because the network samples rrelu slopes",
            ));
        }
        let train = self.mode == Mode::Train;
        let mut cur = x.clone();
        let mut items = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let off = self.offsets[i];
            match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let w = &self.params[off..off + inputs * outputs];
                    let b = &self.params[off + inputs * outputs..off + inputs * outputs + outputs];
                    let y = ops::dense_forward(&cur, w, b, outputs);
                    items.push(LayerCache::Dense { input: cur });
                    cur = y;
                }
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    padding,
                } => {
                    let spec = ConvSpec {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        padding,
                    };
                    let wn = spec.weight_count();
                    let y = ops::conv_forward(
                        &cur,
                        &self.params[off..off + wn],
                        &self.params[off + wn..off + wn + out_ch],
                        &spec,
                    );
                    items.push(LayerCache::Conv { input: cur });
                    cur = y;
                }
                LayerSpec::BatchNorm { channels } => {
                    let gamma = &self.params[off..off + channels];
                    let beta = &self.params[off + channels..off + 2 * channels];
                    let site = &self.bn_sites[self.bn_site_start[i]];
                    let (y, cache) = if train {
                        ops::bn_forward_train(&cur, gamma, beta)
                    } else {
                        ops::bn_forward_test(&cur, gamma, beta, &site.mean, &site.var)
                    };
                    items.push(LayerCache::Bn(cache));
                    cur = y;
                }
                LayerSpec::Activation { act } => {
                    let (y, slopes) = ops::act_forward(&cur, act, train, rng.as_deref_mut());
                    items.push(LayerCache::Act { slopes, input: cur });
                    cur = y;
                }
                LayerSpec::Flatten => {
                    let in_shape = cur.shape.clone();
                    let flat = cur.reshape(&[in_shape[0], in_shape[1..].iter().product()])?;
                    items.push(LayerCache::Flatten { in_shape });
                    cur = flat;
                }
                LayerSpec::Residual {
                    channels,
                    kernel,
                    batch_norm,
                    act,
                } => {
                    let (y, cache) =
                        self.residual_forward(i, &cur, channels, kernel, batch_norm, act, train, rng.as_deref_mut());
                    items.push(LayerCache::Residual(Box::new(cache)));
                    cur = y;
                }
            }
        }
        Ok((cur, Cache { items }))
    }

    #[allow(clippy::too_many_arguments)]
    fn residual_forward(
        &self,
        layer_idx: usize,
        x: &Tensor,
        channels: usize,
        kernel: usize,
        batch_norm: bool,
        act: ActKind,
        train: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (Tensor, ResidualCache) {
        let spec = ConvSpec {
            in_ch: channels,
            out_ch: channels,
            kernel,
            stride: 1,
            padding: (kernel - 1) / 2,
        };
        let wn = spec.weight_count();
        let bn_n = if batch_norm { 2 * channels } else { 0 };
        let off = self.offsets[layer_idx];
        let site0 = self.bn_site_start[layer_idx];

        let w1 = &self.params[off..off + wn];
        let b1 = &self.params[off + wn..off + wn + channels];
        let bn1_off = off + wn + channels;
        let conv2_off = bn1_off + bn_n;
        let w2 = &self.params[conv2_off..conv2_off + wn];
        let b2 = &self.params[conv2_off + wn..conv2_off + wn + channels];
        let bn2_off = conv2_off + wn + channels;

        let t1 = ops::conv_forward(x, w1, b1, &spec);
        let (t2, bn1) = if batch_norm {
            let gamma = &self.params[bn1_off..bn1_off + channels];
            let beta = &self.params[bn1_off + channels..bn1_off + 2 * channels];
            let site = &self.bn_sites[site0];
            let (y, c) = if train {
                ops::bn_forward_train(&t1, gamma, beta)
            } else {
                ops::bn_forward_test(&t1, gamma, beta, &site.mean, &site.var)
            };
            (y, Some(c))
        } else {
            (t1, None)
        };
        let (t3, slopes) = ops::act_forward(&t2, act, train, rng);
        let t4 = ops::conv_forward(&t3, w2, b2, &spec);
        let (t5, bn2) = if batch_norm {
            let gamma = &self.params[bn2_off..bn2_off + channels];
            let beta = &self.params[bn2_off + channels..bn2_off + 2 * channels];
            let site = &self.bn_sites[site0 + 1];
            let (y, c) = if train {
                ops::bn_forward_train(&t4, gamma, beta)
            } else {
                ops::bn_forward_test(&t4, gamma, beta, &site.mean, &site.var)
            };
            (y, Some(c))
        } else {
            (t4, None)
        };

        let y = x.zip_map(&t5, |a, b| a + b).expect("residual shapes verified at build");
        (
            y,
            ResidualCache {
                input: x.clone(),
                bn1,
                act_input: t2,
                slopes,
                conv2_in: t3,
                bn2,
            },
        )
    }

    /// The tensor entering each activation site (standalone layers and the
    /// activation inside every residual block), in network order. Runs a
    /// cached forward pass, so in train mode an RReLU network needs an RNG
    /// via [`Network::forward_cached`]; diagnostics normally use test mode.
    pub fn activation_inputs(&self, x: &Tensor) -> Result<Vec<(ActKind, Tensor)>> {
        let (_, cache) = self.forward_cached(x, None)?;
        let mut out = Vec::new();
        for (layer, item) in self.layers.iter().zip(&cache.items) {
            match (layer, item) {
                (LayerSpec::Activation { act }, LayerCache::Act { input, .. }) => {
                    out.push((*act, input.clone()));
                }
                (LayerSpec::Residual { act, .. }, LayerCache::Residual(rc)) => {
                    out.push((*act, rc.act_input.clone()));
                }
                _ => {}
            }
        }
        Ok(out)
    }

    /// Back-propagates `dout` (gradient of a scalar loss with respect to the
    /// network output) and returns (grad wrt params, grad wrt input).
    pub fn backward(&self, cache: &Cache, dout: &Tensor) -> (Vec<f64>, Tensor) {
        let mut grads = vec![0.0; self.params.len()];
        let mut d = dout.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let off = self.offsets[i];
            match (*layer, &cache.items[i]) {
                (LayerSpec::Dense { inputs, outputs }, LayerCache::Dense { input }) => {
                    let w = &self.params[off..off + inputs * outputs];
                    let (dw, db, dx) = ops::dense_backward(input, w, &d);
                    grads[off..off + inputs * outputs].copy_from_slice(&dw);
                    grads[off + inputs * outputs..off + inputs * outputs + outputs].copy_from_slice(&db);
                    d = dx;
                }
                (
                    LayerSpec::Conv2d {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        padding,
                    },
                    LayerCache::Conv { input },
                ) => {
                    let spec = ConvSpec {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        padding,
                    };
                    let wn = spec.weight_count();
                    let (dw, db, dx) = ops::conv_backward(input, &self.params[off..off + wn], &d, &spec);
                    grads[off..off + wn].copy_from_slice(&dw);
                    grads[off + wn..off + wn + out_ch].copy_from_slice(&db);
                    d = dx;
                }
                (LayerSpec::BatchNorm { channels }, LayerCache::Bn(bc)) => {
                    let gamma = &self.params[off..off + channels];
                    let (dg, db, dx) = ops::bn_backward(bc, gamma, &d);
                    grads[off..off + channels].copy_from_slice(&dg);
                    grads[off + channels..off + 2 * channels].copy_from_slice(&db);
                    d = dx;
                }
                (LayerSpec::Activation { .. }, LayerCache::Act { slopes, .. }) => {
                    d = ops::act_backward(slopes, &d);
                }
                (LayerSpec::Flatten, LayerCache::Flatten { in_shape }) => {
                    d = d.reshape(in_shape).expect("flatten backward shape");
                }
                (
                    LayerSpec::Residual {
                        channels,
                        kernel,
                        batch_norm,
                        ..
                    },
                    LayerCache::Residual(rc),
                ) => {
                    d = self.residual_backward(i, rc, channels, kernel, batch_norm, &d, &mut grads);
                }
                _ => unreachable!("cache items always align with layers"),
            }
        }
        (grads, d)
    }

    fn residual_backward(
        &self,
        layer_idx: usize,
        rc: &ResidualCache,
        channels: usize,
        kernel: usize,
        batch_norm: bool,
        dy: &Tensor,
        grads: &mut [f64],
    ) -> Tensor {
        let spec = ConvSpec {
            in_ch: channels,
            out_ch: channels,
            kernel,
            stride: 1,
            padding: (kernel - 1) / 2,
        };
        let wn = spec.weight_count();
        let bn_n = if batch_norm { 2 * channels } else { 0 };
        let off = self.offsets[layer_idx];
        let bn1_off = off + wn + channels;
        let conv2_off = bn1_off + bn_n;
        let bn2_off = conv2_off + wn + channels;

        // Residual path, reversed: [bn2] <- conv2 <- act <- [bn1] <- conv1.
        let d4 = match (&rc.bn2, batch_norm) {
            (Some(bc), true) => {
                let gamma = &self.params[bn2_off..bn2_off + channels];
                let (dg, db, dx) = ops::bn_backward(bc, gamma, dy);
                grads[bn2_off..bn2_off + channels].copy_from_slice(&dg);
                grads[bn2_off + channels..bn2_off + 2 * channels].copy_from_slice(&db);
                dx
            }
            _ => dy.clone(),
        };
        let (dw2, db2, d3) = ops::conv_backward(&rc.conv2_in, &self.params[conv2_off..conv2_off + wn], &d4, &spec);
        grads[conv2_off..conv2_off + wn].copy_from_slice(&dw2);
        grads[conv2_off + wn..conv2_off + wn + channels].copy_from_slice(&db2);
        let d2 = ops::act_backward(&rc.slopes, &d3);
        let d1 = match (&rc.bn1, batch_norm) {
            (Some(bc), true) => {
                let gamma = &self.params[bn1_off..bn1_off + channels];
                let (dg, db, dx) = ops::bn_backward(bc, gamma, &d2);
                grads[bn1_off..bn1_off + channels].copy_from_slice(&dg);
                grads[bn1_off + channels..bn1_off + 2 * channels].copy_from_slice(&db);
                dx
            }
            _ => d2,
        };
        let (dw1, db1, dpath) = ops::conv_backward(&rc.input, &self.params[off..off + wn], &d1, &spec);
        grads[off..off + wn].copy_from_slice(&dw1);
        grads[off + wn..off + wn + channels].copy_from_slice(&db1);

        // Shortcut adds dy directly.
        dy.zip_map(&dpath, |a, b| a + b).expect("residual backward shapes")
    }

    /// Folds train-mode batch statistics from `cache` into the running
    /// estimates with momentum [`BN_MOMENTUM`]. Test-mode caches are a no-op.
    pub fn update_running_stats(&mut self, cache: &Cache) {
        for (i, item) in cache.items.iter().enumerate() {
            let site0 = self.bn_site_start[i];
            match item {
                LayerCache::Bn(bc) => Self::fold_bn(&mut self.bn_sites[site0], bc),
                LayerCache::Residual(rc) => {
                    if let Some(bc) = &rc.bn1 {
                        Self::fold_bn(&mut self.bn_sites[site0], bc);
                    }
                    if let Some(bc) = &rc.bn2 {
                        Self::fold_bn(&mut self.bn_sites[site0 + 1], bc);
                    }
                }
                _ => {}
            }
        }
    }

    fn fold_bn(site: &mut BnState, bc: &BnCache) {
        if !bc.train {
            return;
        }
        for (r, &b) in site.mean.iter_mut().zip(&bc.batch_mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        for (r, &b) in site.var.iter_mut().zip(&bc.batch_var_unbiased) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}

/// Soft-target cross entropy plus its gradients in one pass.
pub fn loss_and_grads(
    net: &Network,
    x: &Tensor,
    targets: &Tensor,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<LossGrads> {
    let (logits, cache) = net.forward_cached(x, rng)?;
    let (loss, dlogits) = loss::soft_cross_entropy(&logits, targets)?;
    let (grad_params, grad_input) = net.backward(&cache, &dlogits);
    Ok(LossGrads {
        loss,
        grad_params,
        grad_input,
    })
}
