//! Carlini-Wagner L2 attack with tanh box reparameterization.

use super::{test_view, AttackConfig};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::{argmax, l2_distance, Tensor};

#[derive(Debug, Clone)]
pub struct CwResult {
    pub x_adv: Tensor,
    /// true when some candidate changed the predicted class; `x_adv` is then
    /// the smallest-L2 such candidate seen across all trade-off trials.
    pub success: bool,
    pub l2: f64,
}

/// Targeted-at-escape (untargeted) C&W L2 on a single example.
///
/// Optimizes  ||x' - x||^2 + c * max(z_y - max_{i != y} z_i, -kappa)  over
/// w with x' = (tanh w + 1) / 2, which keeps candidates inside the pixel
/// box by construction. Plain gradient descent runs `cw_iters` steps at
/// `cw_lr` per trial; the trade-off constant c is bisected over
/// [cw_c_min, cw_c_max] for `cw_c_steps` trials, shrinking c after any
/// success to look for smaller perturbations. Inputs are clamped away from
/// the box edge before atanh so the initial w is finite.
pub fn cw_l2(net: &Network, x: &Tensor, y: usize, cfg: &AttackConfig) -> Result<CwResult> {
    if x.batch() != 1 {
        return Err(Error::shape(format!(
            "cw_l2 works on a single example, got batch {}",
            x.batch()
        )));
    }
    let view = test_view(net);
    let n = view.output_dim();
    if y >= n {
        return Err(Error::config(
            "label",
            format!("label {y} out of range for {n} classes"),
        ));
    }

    let logits0 = view.forward(x, None)?;
    if argmax(logits0.row(0)) != y {
        return Ok(CwResult {
            x_adv: x.clone(),
            success: true,
            l2: 0.0,
        });
    }

    let w0: Vec<f64> = x
        .data
        .iter()
        .map(|&v| (2.0 * v.clamp(1e-6, 1.0 - 1e-6) - 1.0).atanh())
        .collect();

    let mut best: Option<(f64, Tensor)> = None; // (l2, candidate)
    let (mut lo, mut hi) = (cfg.cw_c_min, cfg.cw_c_max);
    for _ in 0..cfg.cw_c_steps {
        let c = 0.5 * (lo + hi);
        let mut w = w0.clone();
        let mut trial_hit = false;
        for _ in 0..cfg.cw_iters {
            let mut cand = Tensor::zeros(&x.shape);
            let mut dxdw = vec![0.0; w.len()];
            for ((out, d), &wi) in cand.data.iter_mut().zip(&mut dxdw).zip(&w) {
                let t = wi.tanh();
                *out = 0.5 * (t + 1.0);
                *d = 0.5 * (1.0 - t * t);
            }
            let (logits, cache) = view.forward_cached(&cand, None)?;
            let row = logits.row(0);
            let mut runner = if y == 0 { 1 } else { 0 };
            for (k, &z) in row.iter().enumerate() {
                if k != y && z > row[runner] {
                    runner = k;
                }
            }
            if argmax(row) != y {
                trial_hit = true;
                let d = l2_distance(&cand, x);
                if best.as_ref().map_or(true, |(b, _)| d < *b) {
                    best = Some((d, cand.clone()));
                }
            }
            let margin = row[y] - row[runner];
            // d/dx' of the objective; the margin term only pulls while the
            // hinge is active.
            let mut dx = Tensor::zeros(&x.shape);
            for ((g, &cv), &xv) in dx.data.iter_mut().zip(&cand.data).zip(&x.data) {
                *g = 2.0 * (cv - xv);
            }
            if margin > -cfg.kappa {
                let mut seed = Tensor::zeros(&logits.shape);
                seed.row_mut(0)[y] = 1.0;
                seed.row_mut(0)[runner] = -1.0;
                let (_, gx) = view.backward(&cache, &seed);
                for (g, &m) in dx.data.iter_mut().zip(&gx.data) {
                    *g += c * m;
                }
            }
            for ((wi, &g), &d) in w.iter_mut().zip(&dx.data).zip(&dxdw) {
                *wi -= cfg.cw_lr * g * d;
            }
        }
        if trial_hit {
            hi = c;
        } else {
            lo = c;
        }
    }

    Ok(match best {
        Some((l2, x_adv)) => CwResult {
            x_adv,
            success: true,
            l2,
        },
        None => CwResult {
            x_adv: x.clone(),
            success: false,
            l2: 0.0,
        },
    })
}
