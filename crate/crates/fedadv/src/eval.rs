//! Natural and under-attack accuracy measurement.

use crate::attack::{
    bim, cw_l2, deepfool, fgsm, gaussian_noise, pgd, test_view, AttackConfig, AttackKind,
};
use crate::data::LabeledBatch;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{derived_rng, stream_key};
use crate::tensor::{argmax, Tensor};

const NOISE_TAG: u64 = 0x4556_0001;
const ATTACK_TAG: u64 = 0x4556_0002;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Attacks to measure in robust evaluation.
    pub attacks: Vec<AttackKind>,
    /// Test-time Gaussian noise applied to adversarial examples before
    /// prediction; 0 disables.
    pub test_noise_sigma: f64,
    pub test_noise_mu: f64,
    /// Cap on evaluated examples; rows are taken at an even stride so a
    /// class-ordered test set stays balanced.
    pub subsample: Option<usize>,
    /// Also inject the test-time noise into natural evaluation (off by
    /// default: natural accuracy is measured on clean pixels).
    pub noisy_natural: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            attacks: vec![AttackKind::Fgsm, AttackKind::Pgd],
            test_noise_sigma: 0.1,
            test_noise_mu: 0.0,
            subsample: None,
            noisy_natural: false,
        }
    }
}

impl EvalConfig {
    fn validate(&self) -> Result<()> {
        if !self.test_noise_sigma.is_finite() || self.test_noise_sigma < 0.0 {
            return Err(Error::config(
                "test_noise_sigma",
                format!("must be >= 0, got {}", self.test_noise_sigma),
            ));
        }
        Ok(())
    }

    fn pick_rows(&self, total: usize) -> Vec<usize> {
        match self.subsample {
            Some(n) if n < total => (0..n).map(|i| i * total / n).collect(),
            _ => (0..total).collect(),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RobustEval {
    pub accuracy: f64,
    /// Examples where the attack reported failure (DeepFool not fooled,
    /// C&W without a successful candidate); these are evaluated on their
    /// clean pixels.
    pub attack_failures: usize,
    pub n: usize,
}

fn accuracy_of(view: &Network, images: &Tensor, labels: &[usize]) -> Result<f64> {
    let logits = view.forward(images, None)?;
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(logits.row(i)) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Fraction of argmax-correct predictions on clean images (ties break to
/// the lowest class index).
pub fn eval_natural(net: &Network, test: &LabeledBatch, cfg: &EvalConfig, seed: u64) -> Result<f64> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::config("test", "cannot evaluate on an empty set"));
    }
    let view = test_view(net);
    let rows = cfg.pick_rows(test.len());
    let sub = test.select(&rows)?;
    let images = if cfg.noisy_natural && (cfg.test_noise_sigma > 0.0 || cfg.test_noise_mu != 0.0) {
        gaussian_noise(
            &sub.images,
            cfg.test_noise_mu,
            cfg.test_noise_sigma,
            &mut derived_rng(seed, &[NOISE_TAG, 0]),
        )?
    } else {
        sub.images.clone()
    };
    accuracy_of(&view, &images, &sub.labels)
}

/// Attacks every (subsampled) test example, injects test-time Gaussian
/// noise, clips, and measures argmax accuracy against the true labels.
pub fn eval_robust(
    net: &Network,
    test: &LabeledBatch,
    kind: AttackKind,
    attack: &AttackConfig,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<RobustEval> {
    cfg.validate()?;
    attack.validate()?;
    if test.is_empty() {
        return Err(Error::config("test", "cannot evaluate on an empty set"));
    }
    let view = test_view(net);
    let rows = cfg.pick_rows(test.len());
    let sub = test.select(&rows)?;
    let atk_seed = stream_key(seed, &[ATTACK_TAG]);

    let mut attack_failures = 0usize;
    let adv = match kind {
        AttackKind::Identity => sub.images.clone(),
        AttackKind::Fgsm => fgsm(&view, &sub.images, &sub.labels, attack)?,
        AttackKind::Bim => bim(&view, &sub.images, &sub.labels, attack)?,
        AttackKind::Pgd => pgd(&view, &sub.images, &sub.labels, attack, atk_seed)?,
        AttackKind::Noise => gaussian_noise(
            &sub.images,
            attack.mu,
            attack.sigma,
            &mut derived_rng(atk_seed, &[0]),
        )?,
        AttackKind::DeepFool => {
            let mut out = sub.images.clone();
            for i in 0..sub.len() {
                let x = sub.images.gather_rows(&[i]);
                let res = deepfool(&view, &x, Some(sub.labels[i]), attack)?;
                if res.fooled {
                    out.row_mut(i).copy_from_slice(res.x_adv.row(0));
                } else {
                    attack_failures += 1;
                }
            }
            out
        }
        AttackKind::Cw => {
            let mut out = sub.images.clone();
            for i in 0..sub.len() {
                let x = sub.images.gather_rows(&[i]);
                let res = cw_l2(&view, &x, sub.labels[i], attack)?;
                if res.success {
                    out.row_mut(i).copy_from_slice(res.x_adv.row(0));
                } else {
                    attack_failures += 1;
                }
            }
            out
        }
    };

    let final_images = if cfg.test_noise_sigma > 0.0 || cfg.test_noise_mu != 0.0 {
        gaussian_noise(
            &adv,
            cfg.test_noise_mu,
            cfg.test_noise_sigma,
            &mut derived_rng(seed, &[NOISE_TAG, 1]),
        )?
    } else {
        adv
    };
    Ok(RobustEval {
        accuracy: accuracy_of(&view, &final_images, &sub.labels)?,
        attack_failures,
        n: sub.len(),
    })
}
