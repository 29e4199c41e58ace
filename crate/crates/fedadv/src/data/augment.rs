//! Train-time augmentation: random crop with zero padding, horizontal
//! flips, and optional adversarial and Gaussian-noise copies of the batch.

use super::{soft_labels, LabeledBatch};
use crate::attack::{fill_gaussian, pgd, AttackConfig};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{derived_rng, stream_key};
use crate::tensor::Tensor;
use rand::Rng;

const GEO_TAG: u64 = 0x4155_0001;
const PGD_TAG: u64 = 0x4155_0002;
const NOISE_TAG: u64 = 0x4155_0003;

/// What one augmentation pass produces. With both copies enabled the output
/// is three stacked views of the batch: geometrically augmented clean rows,
/// their adversarial versions, and their noisy versions, in that order, all
/// carrying soft targets built with `alpha_sl`.
#[derive(Debug, Clone)]
pub struct AugmentPlan {
    /// Output side length; must match the input images.
    pub crop_size: usize,
    pub crop_padding: usize,
    pub hflip_prob: f64,
    pub include_pgd: bool,
    pub include_gaussian: bool,
    /// Budget for the adversarial copies; its `mu`/`sigma` also drive the
    /// noisy copies.
    pub attack: AttackConfig,
    pub alpha_sl: f64,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        Self {
            crop_size: 32,
            crop_padding: 4,
            hflip_prob: 0.5,
            include_pgd: false,
            include_gaussian: false,
            attack: AttackConfig::default(),
            alpha_sl: 0.05,
        }
    }
}

impl AugmentPlan {
    fn validate(&self, images: &Tensor, net: Option<&Network>) -> Result<()> {
        if images.shape.len() != 4 {
            return Err(Error::shape(format!(
                "augmentation needs [B, C, H, W] images, got {:?}",
                images.shape
            )));
        }
        let (h, w) = (images.shape[2], images.shape[3]);
        if h != self.crop_size || w != self.crop_size {
            return Err(Error::config(
                "crop_size",
                format!("{} does not match {h}x{w} images", self.crop_size),
            ));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::config(
                "hflip_prob",
                format!("must be in [0, 1], got {}", self.hflip_prob),
            ));
        }
        if self.include_pgd && net.is_none() {
            return Err(Error::config(
                "include_pgd",
                "adversarial copies need a network to attack",
            ));
        }
        self.attack.validate()?;
        Ok(())
    }

    /// Number of stacked views this plan emits per input row.
    pub fn views(&self) -> usize {
        1 + usize::from(self.include_pgd) + usize::from(self.include_gaussian)
    }
}

/// Runs the augmentation pass. Every random choice comes from a stream
/// keyed by (seed, role, example index), so results do not depend on
/// evaluation order and a fixed seed reproduces the batch exactly.
pub fn augment_batch(
    batch: &LabeledBatch,
    plan: &AugmentPlan,
    n_classes: usize,
    net: Option<&Network>,
    seed: u64,
) -> Result<LabeledBatch> {
    plan.validate(&batch.images, net)?;
    let b = batch.len();
    let (c, h, w) = (
        batch.images.shape[1],
        batch.images.shape[2],
        batch.images.shape[3],
    );

    let mut base = batch.images.clone();
    for i in 0..b {
        let mut rng = derived_rng(seed, &[GEO_TAG, i as u64]);
        let p = plan.crop_padding;
        let dy = rng.random_range(0..=2 * p);
        let dx = rng.random_range(0..=2 * p);
        let flip = rng.random_range(0.0..1.0) < plan.hflip_prob;
        let src = batch.images.row(i);
        let dst = base.row_mut(i);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    // Window at (dy, dx) into the zero-padded image.
                    let sy = (y + dy) as isize - p as isize;
                    let sx = (x + dx) as isize - p as isize;
                    let v = if sy >= 0 && (sy as usize) < h && sx >= 0 && (sx as usize) < w {
                        src[(ch * h + sy as usize) * w + sx as usize]
                    } else {
                        0.0
                    };
                    let xo = if flip { w - 1 - x } else { x };
                    dst[(ch * h + y) * w + xo] = v;
                }
            }
        }
    }

    let mut images = vec![base.clone()];
    let mut labels = batch.labels.clone();
    if plan.include_pgd {
        let net = net.expect("validated above");
        let adv = pgd(
            net,
            &base,
            &batch.labels,
            &plan.attack,
            stream_key(seed, &[PGD_TAG]),
        )?;
        images.push(adv);
        labels.extend_from_slice(&batch.labels);
    }
    if plan.include_gaussian {
        let mut noisy = base.clone();
        for i in 0..b {
            let mut rng = derived_rng(seed, &[NOISE_TAG, i as u64]);
            let row = noisy.row_mut(i);
            let mut delta = vec![0.0; row.len()];
            fill_gaussian(&mut delta, plan.attack.mu, plan.attack.sigma, &mut rng);
            for (v, d) in row.iter_mut().zip(delta) {
                *v = (*v + d).clamp(0.0, 1.0);
            }
        }
        images.push(noisy);
        labels.extend_from_slice(&batch.labels);
    }

    let refs: Vec<&Tensor> = images.iter().collect();
    let images = Tensor::concat_rows(&refs)?;
    let soft = soft_labels(&labels, n_classes, plan.alpha_sl)?;
    let mut out = LabeledBatch::new(images, labels)?;
    out.soft_targets = Some(soft);
    Ok(out)
}
