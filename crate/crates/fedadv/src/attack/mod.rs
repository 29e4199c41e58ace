//! Gradient-based evasion attacks and the Gaussian-noise baseline.
//!
//! All attacks evaluate the network in test mode (deterministic RReLU slope,
//! running batch-norm statistics), so a crafted example depends only on
//! (network, input, config, seed). Every attack clips its final output to
//! the [0, 1] pixel box; PGD additionally projects every iterate onto the
//! epsilon ball around the clean input.

mod cw;
mod deepfool;
mod noise;
mod pgd;

pub use cw::{cw_l2, CwResult};
pub use deepfool::{deepfool, DeepFoolResult};
pub use noise::{fill_gaussian, fill_uniform, gaussian_noise};
pub use pgd::{bim, fgsm, pgd};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mode, Network};
use crate::tensor::Tensor;

/// Attack hyperparameters; defaults are the evaluation setting used across
/// the experiment suite.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// L-infinity budget for FGSM/BIM/PGD.
    pub epsilon: f64,
    /// PGD/BIM per-step size.
    pub step_alpha: f64,
    pub pgd_iters: usize,
    /// true: start from a uniform random point in the epsilon ball (PGD);
    /// false: start at the clean input (BIM).
    pub pgd_random_init: bool,
    /// Gaussian-noise attack mean and standard deviation.
    pub mu: f64,
    pub sigma: f64,
    /// DeepFool boundary overshoot (the method's epsilon).
    pub df_overshoot: f64,
    pub df_max_iters: usize,
    /// Carlini-Wagner confidence margin kappa.
    pub kappa: f64,
    /// Carlini-Wagner inner gradient-descent rate and step count.
    pub cw_lr: f64,
    pub cw_iters: usize,
    /// Bisection range and trial count for the CW constant c.
    pub cw_c_min: f64,
    pub cw_c_max: f64,
    pub cw_c_steps: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 0.031,
            step_alpha: 0.00784,
            pgd_iters: 7,
            pgd_random_init: true,
            mu: 0.0,
            sigma: 0.1,
            df_overshoot: 1e-6,
            df_max_iters: 100,
            kappa: 0.0,
            cw_lr: 0.01,
            cw_iters: 10,
            cw_c_min: 1e-5,
            cw_c_max: 20.0,
            cw_c_steps: 9,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::config("attack.epsilon", "must be positive"));
        }
        if !(self.step_alpha > 0.0) {
            return Err(Error::config("attack.step_alpha", "must be positive"));
        }
        if self.sigma < 0.0 {
            return Err(Error::config("attack.sigma", "must be non-negative"));
        }
        if self.cw_c_min <= 0.0 || self.cw_c_max <= self.cw_c_min {
            return Err(Error::config(
                "attack.cw_c_min",
                "need 0 < cw_c_min < cw_c_max",
            ));
        }
        Ok(())
    }
}

/// Attack selector used by evaluation configs. `Identity` leaves inputs
/// untouched, which makes robust evaluation collapse to natural accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Identity,
    Fgsm,
    Bim,
    Pgd,
    DeepFool,
    Cw,
    Noise,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Identity => "identity",
            AttackKind::Fgsm => "fgsm",
            AttackKind::Bim => "bim",
            AttackKind::Pgd => "pgd",
            AttackKind::DeepFool => "deepfool",
            AttackKind::Cw => "cw",
            AttackKind::Noise => "noise",
        }
    }

    pub fn parse(name: &str) -> Result<AttackKind> {
        const ALL: [AttackKind; 7] = [
            AttackKind::Identity,
            AttackKind::Fgsm,
            AttackKind::Bim,
            AttackKind::Pgd,
            AttackKind::DeepFool,
            AttackKind::Cw,
            AttackKind::Noise,
        ];
        ALL.iter().copied().find(|k| k.name() == name).ok_or_else(|| {
            Error::config(
                "attack",
                format!("unknown attack `{name}`; expected one of {:?}", ALL.map(|k| k.name())),
            )
        })
    }
}

/// sign with sign(+-0) = 0, the convention used by the step rules.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Copy of the network pinned to test mode; attacks never sample forward
/// randomness or consume batch statistics.
pub(crate) fn test_view(net: &Network) -> Network {
    let mut view = net.clone();
    view.mode = Mode::Test;
    view
}

/// One-hot targets for hard labels; attacks maximize the plain
/// cross-entropy against the true class.
pub(crate) fn one_hot(labels: &[usize], n_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), n_classes]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::config(
                "labels",
                format!("label {y} out of range for {n_classes} classes"),
            ));
        }
        t.row_mut(i)[y] = 1.0;
    }
    Ok(t)
}

/// Batch shape of x must start with the label count.
pub(crate) fn check_batch(x: &Tensor, labels: &[usize]) -> Result<()> {
    if x.batch() != labels.len() {
        return Err(Error::shape(format!(
            "batch of {} examples with {} labels",
            x.batch(),
            labels.len()
        )));
    }
    Ok(())
}
