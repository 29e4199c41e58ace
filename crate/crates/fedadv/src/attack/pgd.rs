//! Fast gradient sign method and its iterated forms (BIM / PGD).

use rand::Rng;

use super::{check_batch, one_hot, sign, test_view, AttackConfig};
use crate::error::Result;
use crate::nn::{loss_and_grads, Network};
use crate::rng::derived_rng;
use crate::tensor::Tensor;

const PGD_INIT_TAG: u64 = 0x7064_0001;

/// x' = clip_[0,1](x + epsilon * sign(grad_x loss)); one gradient step.
pub fn fgsm(net: &Network, x: &Tensor, labels: &[usize], cfg: &AttackConfig) -> Result<Tensor> {
    check_batch(x, labels)?;
    let view = test_view(net);
    let targets = one_hot(labels, view.output_dim())?;
    let lg = loss_and_grads(&view, x, &targets, None)?;
    let mut adv = x.clone();
    for (v, g) in adv.data.iter_mut().zip(&lg.grad_input.data) {
        *v += cfg.epsilon * sign(*g);
        *v = v.clamp(0.0, 1.0);
    }
    Ok(adv)
}

/// Iterated sign steps projected onto the epsilon ball after every step,
/// then onto the [0, 1] box. `pgd_random_init` picks a uniform start in the
/// ball (per-example streams derived from `seed`); without it this is BIM.
///
/// With one iteration, step size epsilon and no random start, the iterate
/// reproduces FGSM bit for bit: the ball projection clamps against the same
/// fl(x +- epsilon) values the step itself produces.
pub fn pgd(net: &Network, x: &Tensor, labels: &[usize], cfg: &AttackConfig, seed: u64) -> Result<Tensor> {
    check_batch(x, labels)?;
    let view = test_view(net);
    let targets = one_hot(labels, view.output_dim())?;
    let lo = x.map(|v| v - cfg.epsilon);
    let hi = x.map(|v| v + cfg.epsilon);

    let mut adv = x.clone();
    if cfg.pgd_random_init {
        for b in 0..adv.batch() {
            let mut rng = derived_rng(seed, &[PGD_INIT_TAG, b as u64]);
            for v in adv.row_mut(b) {
                *v += rng.random_range(-cfg.epsilon..=cfg.epsilon);
            }
        }
        project(&mut adv, &lo, &hi);
    }
    for _ in 0..cfg.pgd_iters {
        let lg = loss_and_grads(&view, &adv, &targets, None)?;
        for (v, g) in adv.data.iter_mut().zip(&lg.grad_input.data) {
            *v += cfg.step_alpha * sign(*g);
        }
        project(&mut adv, &lo, &hi);
    }
    Ok(adv)
}

/// BIM is PGD started at the clean input.
pub fn bim(net: &Network, x: &Tensor, labels: &[usize], cfg: &AttackConfig) -> Result<Tensor> {
    let mut c = *cfg;
    c.pgd_random_init = false;
    pgd(net, x, labels, &c, 0)
}

/// Ball clamp against precomputed bounds, then pixel-box clamp. The box
/// clamp can only move values toward the clean input, so ball membership
/// survives it.
fn project(adv: &mut Tensor, lo: &Tensor, hi: &Tensor) {
    for ((v, &l), &h) in adv.data.iter_mut().zip(&lo.data).zip(&hi.data) {
        *v = v.clamp(l, h).clamp(0.0, 1.0);
    }
}
