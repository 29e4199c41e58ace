//! Builder for the small residual classifier used throughout the crate: a
//! 3x3 stem convolution (stride 1, padding 1), identity-shortcut residual
//! blocks with no down-sampling, then flatten and a dense head.

use serde::{Deserialize, Serialize};

use crate::activation::ActKind;
use crate::error::Result;
use crate::nn::{LayerSpec, Network};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MiniResNetConfig {
    /// Input channel count (1 for synthetic blobs, 3 for CIFAR-10).
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    /// Number of residual blocks.
    pub depth: usize,
    /// Channel width of the stem and every block.
    pub channels: usize,
    pub n_classes: usize,
    pub act: ActKind,
    pub batch_norm: bool,
    pub init_seed: u64,
}

impl Default for MiniResNetConfig {
    fn default() -> Self {
        MiniResNetConfig {
            in_ch: 1,
            height: 8,
            width: 8,
            depth: 1,
            channels: 8,
            n_classes: 2,
            act: ActKind::Relu,
            batch_norm: false,
            init_seed: 0,
        }
    }
}

pub fn build_mini_resnet(cfg: &MiniResNetConfig) -> Result<Network> {
    let mut layers = vec![LayerSpec::Conv2d {
        in_ch: cfg.in_ch,
        out_ch: cfg.channels,
        kernel: 3,
        stride: 1,
        padding: 1,
    }];
    if cfg.batch_norm {
        layers.push(LayerSpec::BatchNorm {
            channels: cfg.channels,
        });
    }
    layers.push(LayerSpec::Activation { act: cfg.act });
    for _ in 0..cfg.depth {
        layers.push(LayerSpec::Residual {
            channels: cfg.channels,
            kernel: 3,
            batch_norm: cfg.batch_norm,
            act: cfg.act,
        });
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense {
        inputs: cfg.channels * cfg.height * cfg.width,
        outputs: cfg.n_classes,
    });
    Network::new(&[cfg.in_ch, cfg.height, cfg.width], layers, cfg.init_seed)
}
