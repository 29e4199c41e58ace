//! DeepFool: iterative minimal-perturbation attack via linearized decision
//! boundaries.

use super::{test_view, AttackConfig};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::{argmax, Tensor};

#[derive(Debug, Clone)]
pub struct DeepFoolResult {
    pub x_adv: Tensor,
    /// Linearization steps actually applied.
    pub iterations: usize,
    /// false when the prediction never left the reference class (degenerate
    /// gradients or iteration budget exhausted).
    pub fooled: bool,
}

/// Untargeted DeepFool on a single example (shape [1, ...]).
///
/// The reference class defaults to the network's own prediction at `x`;
/// passing `label` instead treats that class as the one to escape, and an
/// input the network already misclassifies returns immediately with zero
/// perturbation. Each step moves to the nearest linearized class boundary
///   r = (|f_l| / ||w_l||^2) * w_l,   l = argmin_k |f_k| / ||w_k||
/// with f_k the logit gap to the reference class and w_k its input
/// gradient; the final output overshoots the accumulated perturbation by
/// (1 + df_overshoot) and is clipped to the pixel box.
pub fn deepfool(
    net: &Network,
    x: &Tensor,
    label: Option<usize>,
    cfg: &AttackConfig,
) -> Result<DeepFoolResult> {
    if x.batch() != 1 {
        return Err(Error::shape(format!(
            "deepfool works on a single example, got batch {}",
            x.batch()
        )));
    }
    let view = test_view(net);
    let n = view.output_dim();
    if let Some(y) = label {
        if y >= n {
            return Err(Error::config(
                "label",
                format!("label {y} out of range for {n} classes"),
            ));
        }
    }

    let logits0 = view.forward(x, None)?;
    let pred0 = argmax(logits0.row(0));
    let reference = label.unwrap_or(pred0);
    if pred0 != reference {
        return Ok(DeepFoolResult {
            x_adv: x.clone(),
            iterations: 0,
            fooled: true,
        });
    }

    let mut r_total = Tensor::zeros(&x.shape);
    let mut adv = x.clone();
    let mut iterations = 0;
    let mut fooled = false;
    for _ in 0..cfg.df_max_iters {
        let (logits, cache) = view.forward_cached(&adv, None)?;
        if argmax(logits.row(0)) != reference {
            fooled = true;
            break;
        }
        // Input gradient of every logit.
        let mut grads: Vec<Tensor> = Vec::with_capacity(n);
        for k in 0..n {
            let mut seed = Tensor::zeros(&logits.shape);
            seed.row_mut(0)[k] = 1.0;
            let (_, gx) = view.backward(&cache, &seed);
            grads.push(gx);
        }
        // Nearest linearized boundary among non-reference classes.
        let mut best: Option<(f64, usize, f64)> = None; // (ratio, class, ||w||^2)
        for k in 0..n {
            if k == reference {
                continue;
            }
            let f_k = logits.row(0)[k] - logits.row(0)[reference];
            let mut norm_sq = 0.0;
            for (a, b) in grads[k].data.iter().zip(&grads[reference].data) {
                let w = a - b;
                norm_sq += w * w;
            }
            if norm_sq <= 1e-24 {
                continue; // boundary unreachable through the linearization
            }
            let ratio = f_k.abs() / norm_sq.sqrt();
            if best.map_or(true, |(r, _, _)| ratio < r) {
                best = Some((ratio, k, norm_sq));
            }
        }
        let Some((_, l, norm_sq)) = best else {
            break; // every pairwise gradient degenerate; cannot move
        };
        let f_l = logits.row(0)[l] - logits.row(0)[reference];
        let scale = f_l.abs() / norm_sq;
        for ((r, &gl), &gr) in r_total
            .data
            .iter_mut()
            .zip(&grads[l].data)
            .zip(&grads[reference].data)
        {
            *r += scale * (gl - gr);
        }
        for ((v, &x0), &r) in adv.data.iter_mut().zip(&x.data).zip(&r_total.data) {
            *v = x0 + (1.0 + cfg.df_overshoot) * r;
        }
        iterations += 1;
    }
    if !fooled && iterations > 0 {
        // Budget exhausted; the last iterate may still have crossed.
        let logits = view.forward(&adv, None)?;
        fooled = argmax(logits.row(0)) != reference;
    }
    adv.clamp_in_place(0.0, 1.0);
    Ok(DeepFoolResult {
        x_adv: adv,
        iterations,
        fooled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use crate::tensor::l2_distance;

    /// Dense 2-logit net: logit gap g(x) = (w1 - w0) . x + (b1 - b0); the
    /// true minimal perturbation has norm |g| / ||w1 - w0||. DeepFool on a
    /// linear model must land on (1 + overshoot) times that.
    #[test]
    fn linear_model_matches_hyperplane_distance() {
        let mut net = Network::new(
            &[4],
            vec![LayerSpec::Dense { inputs: 4, outputs: 2 }],
            0,
        )
        .unwrap();
        // W laid out [in][out]: rows per input, columns per class.
        #[rustfmt::skip]
        let w = [
            0.6, -0.2,
            -0.1, 0.4,
            0.3, 0.3,
            -0.5, 0.2,
        ];
        net.params[..8].copy_from_slice(&w);
        net.params[8] = 0.05; // b0
        net.params[9] = -0.02; // b1

        let x = Tensor::from_vec(&[1, 4], vec![0.5, 0.4, 0.6, 0.5]).unwrap();
        let logits = net.forward(&x, None).unwrap();
        let pred = argmax(logits.row(0));
        let gap = logits.row(0)[1 - pred] - logits.row(0)[pred];
        let dw: Vec<f64> = (0..4).map(|i| w[2 * i + (1 - pred)] - w[2 * i + pred]).collect();
        let norm = dw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expect = gap.abs() / norm;

        let cfg = AttackConfig::default();
        let res = deepfool(&net, &x, None, &cfg).unwrap();
        assert!(res.fooled);
        assert_eq!(res.iterations, 1, "a linear model needs exactly one step");
        let dist = l2_distance(&res.x_adv, &x);
        let rel = (dist - expect * (1.0 + cfg.df_overshoot)).abs() / expect;
        assert!(rel < 1e-6, "distance {dist} vs closed form {expect}, rel {rel}");
    }

    #[test]
    fn already_misclassified_label_returns_immediately() {
        let net = Network::new(&[3], vec![LayerSpec::Dense { inputs: 3, outputs: 2 }], 1).unwrap();
        let x = Tensor::from_vec(&[1, 3], vec![0.2, 0.8, 0.5]).unwrap();
        let pred = argmax(net.forward(&x, None).unwrap().row(0));
        let wrong = 1 - pred;
        let res = deepfool(&net, &x, Some(wrong), &AttackConfig::default()).unwrap();
        assert!(res.fooled);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.x_adv.data, x.data);
    }

    /// Constant logits give zero pairwise gradients everywhere: the attack
    /// must report not-fooled instead of dividing by zero.
    #[test]
    fn degenerate_gradients_set_not_fooled() {
        let mut net = Network::new(&[3], vec![LayerSpec::Dense { inputs: 3, outputs: 2 }], 2).unwrap();
        for p in &mut net.params {
            *p = 0.0;
        }
        let x = Tensor::from_vec(&[1, 3], vec![0.4, 0.5, 0.6]).unwrap();
        let res = deepfool(&net, &x, None, &AttackConfig::default()).unwrap();
        assert!(!res.fooled);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.x_adv.data, x.data);
        assert!(res.x_adv.all_finite());
    }
}
