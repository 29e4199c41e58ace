//! SGD with classical momentum and coupled weight decay, plus the piecewise
//! learning-rate schedule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Use `SgdConfig::lr` for every epoch.
    Fixed,
    /// Use [`lr_at_epoch`], ignoring `SgdConfig::lr`.
    Piecewise,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.001,
            momentum: 0.9,
            weight_decay: 0.0002,
            schedule: Schedule::Fixed,
        }
    }
}

impl SgdConfig {
    /// Learning rate in effect at (zero-based) epoch `m`.
    pub fn lr_for_epoch(&self, m: usize) -> f64 {
        match self.schedule {
            Schedule::Fixed => self.lr,
            Schedule::Piecewise => lr_at_epoch(m),
        }
    }
}

/// Step decay: 1e-3 below epoch 100, 1e-4 below epoch 150, 1e-5 afterwards.
pub fn lr_at_epoch(m: usize) -> f64 {
    if m < 100 {
        0.001
    } else if m < 150 {
        0.0001
    } else {
        0.00001
    }
}

/// Per-model optimizer state (velocity buffer).
#[derive(Debug, Clone)]
pub struct SgdState {
    pub velocity: Vec<f64>,
}

impl SgdState {
    pub fn new(param_count: usize) -> SgdState {
        SgdState {
            velocity: vec![0.0; param_count],
        }
    }
}

/// v <- momentum * v + g + weight_decay * theta;  theta <- theta - lr * v.
/// `lr` is the effective rate for this step (after any schedule).
pub fn sgd_step(params: &mut [f64], grads: &[f64], state: &mut SgdState, cfg: &SgdConfig, lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.velocity.len());
    for i in 0..params.len() {
        let v = cfg.momentum * state.velocity[i] + grads[i] + cfg.weight_decay * params[i];
        state.velocity[i] = v;
        params[i] -= lr * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-computed two-step trace: theta0 = 0, g = 1 each step, lr = 0.1,
    /// momentum = 0.9, no decay.
    ///   v1 = 1.0      theta1 = -0.1
    ///   v2 = 1.9      theta2 = -0.1 - 0.19 = -0.29
    #[test]
    fn momentum_two_step_hand_trace() {
        let cfg = SgdConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            schedule: Schedule::Fixed,
        };
        let mut params = vec![0.0];
        let mut state = SgdState::new(1);
        sgd_step(&mut params, &[1.0], &mut state, &cfg, 0.1);
        assert!((params[0] - -0.1).abs() < 1e-15);
        sgd_step(&mut params, &[1.0], &mut state, &cfg, 0.1);
        assert!((params[0] - -0.29).abs() < 1e-15);
    }

    /// Zero gradient still shrinks weights through the decay term:
    /// v = 0.1 * 1.0, theta = 1 - 0.1 * 0.1 = 0.99.
    #[test]
    fn weight_decay_pulls_toward_zero() {
        let cfg = SgdConfig {
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.1,
            schedule: Schedule::Fixed,
        };
        let mut params = vec![1.0];
        let mut state = SgdState::new(1);
        sgd_step(&mut params, &[0.0], &mut state, &cfg, 0.1);
        assert!((params[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn schedule_boundaries_are_exact() {
        assert_eq!(lr_at_epoch(0), 0.001);
        assert_eq!(lr_at_epoch(99), 0.001);
        assert_eq!(lr_at_epoch(100), 0.0001);
        assert_eq!(lr_at_epoch(149), 0.0001);
        assert_eq!(lr_at_epoch(150), 0.00001);
        assert_eq!(lr_at_epoch(500), 0.00001);
    }

    #[test]
    fn fixed_schedule_uses_configured_rate() {
        let cfg = SgdConfig {
            lr: 0.42,
            ..SgdConfig::default()
        };
        assert_eq!(cfg.lr_for_epoch(0), 0.42);
        assert_eq!(cfg.lr_for_epoch(1000), 0.42);
        let pw = SgdConfig {
            schedule: Schedule::Piecewise,
            ..cfg
        };
        assert_eq!(pw.lr_for_epoch(120), 0.0001);
    }
}
