//! Mini-batch adversarial training: augment, shuffle, step.

use crate::data::{augment_batch, AugmentPlan, LabeledBatch};
use crate::error::{Error, Result};
use crate::nn::loss::soft_cross_entropy;
use crate::nn::optim::{sgd_step, SgdConfig, SgdState};
use crate::nn::{Mode, Network};
use crate::rng::{derived_rng, stream_key};
use rand::seq::SliceRandom;

const AUG_TAG: u64 = 0x5452_0001;
const SHUF_TAG: u64 = 0x5452_0002;
const ACT_TAG: u64 = 0x5452_0003;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub n_classes: usize,
    pub sgd: SgdConfig,
    pub augment: AugmentPlan,
    /// Rebuild the augmented set (fresh crops, adversarial and noise
    /// copies against the current model) at every epoch instead of once.
    pub regen_per_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 128,
            n_classes: 10,
            sgd: SgdConfig::default(),
            augment: AugmentPlan::default(),
            regen_per_epoch: true,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochStats {
    /// Schedule epoch index (includes the caller's offset).
    pub epoch: usize,
    pub lr: f64,
    /// Loss averaged over all augmented examples seen this epoch.
    pub mean_loss: f64,
}

/// Trains from a fresh optimizer state. See [`train_epochs`].
pub fn train(
    net: &mut Network,
    data: &LabeledBatch,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    let mut state = SgdState::new(net.params.len());
    train_epochs(net, &mut state, data, cfg, seed, 0)
}

/// Runs `cfg.epochs` epochs of augmented mini-batch SGD, mutating `net`
/// in place. `epoch_offset` shifts the schedule index so a caller chaining
/// rounds keeps one continuous learning-rate trajectory. Deterministic:
/// all randomness (crops, attack starts, shuffles, train-mode activation
/// draws) derives from `seed` and the epoch index.
pub fn train_epochs(
    net: &mut Network,
    state: &mut SgdState,
    data: &LabeledBatch,
    cfg: &TrainConfig,
    seed: u64,
    epoch_offset: usize,
) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::config("data", "cannot train on an empty set"));
    }
    if cfg.epochs == 0 {
        return Err(Error::config("epochs", "must be at least 1"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    net.mode = Mode::Train;
    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut augmented: Option<LabeledBatch> = None;
    for e in 0..cfg.epochs {
        let epoch = epoch_offset + e;
        let lr = cfg.sgd.lr_for_epoch(epoch);
        if cfg.regen_per_epoch || augmented.is_none() {
            augmented = Some(augment_batch(
                data,
                &cfg.augment,
                cfg.n_classes,
                Some(net),
                stream_key(seed, &[AUG_TAG, e as u64]),
            )?);
        }
        let set = augmented.as_ref().expect("filled above");
        let targets = set
            .soft_targets
            .as_ref()
            .expect("augment_batch always attaches soft targets");

        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut derived_rng(seed, &[SHUF_TAG, e as u64]));
        let mut act_rng = derived_rng(seed, &[ACT_TAG, e as u64]);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = set.images.gather_rows(chunk);
            let t = targets.gather_rows(chunk);
            let (logits, cache) = net.forward_cached(&x, Some(&mut act_rng))?;
            let (loss, dlogits) = soft_cross_entropy(&logits, &t)?;
            let (grads, _) = net.backward(&cache, &dlogits);
            net.update_running_stats(&cache);
            sgd_step(&mut net.params, &grads, state, &cfg.sgd, lr);
            loss_sum += loss * chunk.len() as f64;
        }
        stats.push(EpochStats {
            epoch,
            lr,
            mean_loss: loss_sum / set.len() as f64,
        });
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::nn::optim::Schedule;
    use crate::nn::resnet::{build_mini_resnet, MiniResNetConfig};
    use crate::nn::LayerSpec;
    use crate::tensor::Tensor;

    fn toy_setup() -> (Network, LabeledBatch, TrainConfig) {
        let spec = SyntheticSpec::grid(2, 12);
        let data = spec.generate(5).unwrap();
        let net = Network::new(
            &[1, 8, 8],
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 64, outputs: 2 },
            ],
            3,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            n_classes: 2,
            augment: AugmentPlan {
                crop_size: 8,
                crop_padding: 1,
                include_pgd: true,
                include_gaussian: true,
                ..AugmentPlan::default()
            },
            sgd: SgdConfig {
                lr: 0.02,
                ..SgdConfig::default()
            },
            ..TrainConfig::default()
        };
        (net, data, cfg)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_untouched() {
        let (mut net, data, mut cfg) = toy_setup();
        cfg.epochs = 1;
        cfg.sgd.lr = 0.0;
        cfg.sgd.schedule = Schedule::Fixed;
        let before = net.params.clone();
        train(&mut net, &data, &cfg, 1).unwrap();
        assert_eq!(net.params, before);
    }

    #[test]
    fn loss_decreases_over_three_epochs() {
        let (mut net, data, cfg) = toy_setup();
        let stats = train(&mut net, &data, &cfg, 7).unwrap();
        assert_eq!(stats.len(), 3);
        assert!(
            stats[2].mean_loss < stats[0].mean_loss,
            "loss went {} -> {}",
            stats[0].mean_loss,
            stats[2].mean_loss
        );
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (net0, data, cfg) = toy_setup();
        let mut a = net0.clone();
        let mut b = net0.clone();
        train(&mut a, &data, &cfg, 11).unwrap();
        train(&mut b, &data, &cfg, 11).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.bn_state_vector(), b.bn_state_vector());
        let mut c = net0.clone();
        train(&mut c, &data, &cfg, 12).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn epoch_offset_drives_the_piecewise_schedule() {
        let (mut net, data, mut cfg) = toy_setup();
        cfg.epochs = 2;
        cfg.sgd.schedule = Schedule::Piecewise;
        let mut state = SgdState::new(net.params.len());
        let stats = train_epochs(&mut net, &mut state, &data, &cfg, 1, 99).unwrap();
        assert_eq!(stats[0].epoch, 99);
        assert_eq!(stats[0].lr, 0.001);
        assert_eq!(stats[1].epoch, 100);
        assert_eq!(stats[1].lr, 0.0001);
    }

    #[test]
    fn rejects_empty_data_and_zero_epochs() {
        let (mut net, data, mut cfg) = toy_setup();
        let empty = LabeledBatch::new(Tensor::zeros(&[0, 1, 8, 8]), vec![]).unwrap();
        assert!(train(&mut net, &empty, &cfg, 0).is_err());
        cfg.epochs = 0;
        assert!(train(&mut net, &data, &cfg, 0).is_err());
    }

    #[test]
    fn batch_norm_running_stats_move_during_training() {
        let spec = SyntheticSpec::grid(2, 8);
        let data = spec.generate(9).unwrap();
        let mut net = build_mini_resnet(&MiniResNetConfig {
            batch_norm: true,
            ..MiniResNetConfig::default()
        })
        .unwrap();
        let before = net.bn_state_vector();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            n_classes: 2,
            augment: AugmentPlan {
                crop_size: 8,
                crop_padding: 0,
                hflip_prob: 0.0,
                ..AugmentPlan::default()
            },
            ..TrainConfig::default()
        };
        train(&mut net, &data, &cfg, 2).unwrap();
        assert_ne!(net.bn_state_vector(), before);
    }
}
