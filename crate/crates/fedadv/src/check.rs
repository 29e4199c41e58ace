//! Finite-difference oracles for gradient verification.
//!
//! Central differences of the scalar loss are the independent reference the
//! analytic backward pass is judged against. Callers are responsible for
//! avoiding stencils that straddle activation kinks (see
//! [`crate::activation::ActKind::kinks`]).

use crate::nn::{loss, Network};
use crate::tensor::Tensor;

/// |a - b| / max(|a| + |b|, floor); symmetric and safe near zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

fn loss_of(net: &Network, x: &Tensor, targets: &Tensor) -> f64 {
    let logits = net
        .forward(x, None)
        .expect("gradcheck forward must be deterministic without an RNG");
    loss::soft_cross_entropy(&logits, targets)
        .expect("gradcheck loss")
        .0
}

/// Central-difference d loss / d params[i].
pub fn numeric_param_grad(net: &Network, x: &Tensor, targets: &Tensor, i: usize, h: f64) -> f64 {
    let mut plus = net.clone();
    plus.params[i] += h;
    let mut minus = net.clone();
    minus.params[i] -= h;
    (loss_of(&plus, x, targets) - loss_of(&minus, x, targets)) / (2.0 * h)
}

/// Central-difference d loss / d x[i].
pub fn numeric_input_grad(net: &Network, x: &Tensor, targets: &Tensor, i: usize, h: f64) -> f64 {
    let mut plus = x.clone();
    plus.data[i] += h;
    let mut minus = x.clone();
    minus.data[i] -= h;
    (loss_of(net, &plus, targets) - loss_of(net, &minus, targets)) / (2.0 * h)
}

/// True when any value entering an activation sits within `margin` of one of
/// that activation's kinks, i.e. a finite-difference stencil through this
/// point could straddle a non-smooth spot and report a false mismatch.
pub fn near_activation_kink(net: &Network, x: &Tensor, margin: f64) -> bool {
    let sites = net
        .activation_inputs(x)
        .expect("kink scan forward must succeed");
    sites.iter().any(|(act, pre)| {
        pre.data
            .iter()
            .any(|v| act.kinks().iter().any(|k| (v - k).abs() < margin))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_is_symmetric_and_floored() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        // Near-zero pairs divide by the floor, not by zero.
        assert!(relative_error(1e-12, -1e-12).is_finite());
    }
}
