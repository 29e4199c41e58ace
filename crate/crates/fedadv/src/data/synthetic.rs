//! Synthetic image generator: each class renders a fixed set of Gaussian
//! blobs, with per-example jitter and background noise. Small enough for
//! desk-scale training runs while keeping a real spatial class signal.

use super::LabeledBatch;
use crate::attack::fill_gaussian;
use crate::error::{Error, Result};
use crate::rng::derived_rng;
use crate::tensor::Tensor;
use rand::Rng;

const SYNTH_TAG: u64 = 0x5359_0001;

#[derive(Debug, Clone, Copy)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

/// Generator parameters. `class_blobs[c]` lists the blobs rendered for
/// every example of class c; jitter perturbs centers (pixels) and
/// amplitudes (relative) per example, and `noise_sigma` adds independent
/// Gaussian pixel noise per channel.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub class_blobs: Vec<Vec<Blob>>,
    pub center_jitter: f64,
    pub amplitude_jitter: f64,
    pub noise_sigma: f64,
}

impl SyntheticSpec {
    /// Default layout: one blob per class, centers equally spaced on a
    /// circle, 8 x 8 single-channel images.
    pub fn grid(n_classes: usize, per_class: usize) -> Self {
        let (h, w) = (8usize, 8usize);
        let (mid_y, mid_x) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
        let radius = 0.28 * h.min(w) as f64;
        let class_blobs = (0..n_classes)
            .map(|c| {
                let theta = std::f64::consts::TAU * c as f64 / n_classes.max(1) as f64;
                vec![Blob {
                    cx: mid_x + radius * theta.cos(),
                    cy: mid_y + radius * theta.sin(),
                    sigma: 1.1,
                    amplitude: 0.85,
                }]
            })
            .collect();
        Self {
            n_classes,
            per_class,
            channels: 1,
            height: h,
            width: w,
            class_blobs,
            center_jitter: 0.5,
            amplitude_jitter: 0.15,
            noise_sigma: 0.06,
        }
    }

    pub fn image_dims(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::config("n_classes", "must be positive"));
        }
        if self.class_blobs.len() != self.n_classes {
            return Err(Error::config(
                "class_blobs",
                format!(
                    "{} blob lists for {} classes",
                    self.class_blobs.len(),
                    self.n_classes
                ),
            ));
        }
        if self.channels * self.height * self.width == 0 {
            return Err(Error::config("image_dims", "zero-sized images"));
        }
        for (name, v) in [
            ("center_jitter", self.center_jitter),
            ("amplitude_jitter", self.amplitude_jitter),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Renders the full dataset in class-major order. Each example draws
    /// from its own RNG stream keyed by (seed, example index), so the
    /// output is independent of evaluation order.
    pub fn generate(&self, seed: u64) -> Result<LabeledBatch> {
        self.validate()?;
        let n = self.n_classes * self.per_class;
        let plane = self.height * self.width;
        let row_len = self.channels * plane;
        let mut data = vec![0.0; n * row_len];
        let mut labels = Vec::with_capacity(n);
        for idx in 0..n {
            let class = idx / self.per_class.max(1);
            labels.push(class);
            let mut rng = derived_rng(seed, &[SYNTH_TAG, idx as u64]);
            let row = &mut data[idx * row_len..(idx + 1) * row_len];
            let mut signal = vec![0.0; plane];
            for blob in &self.class_blobs[class] {
                let j = self.center_jitter;
                let cx = blob.cx + rng.random_range(-j..=j);
                let cy = blob.cy + rng.random_range(-j..=j);
                let aj = self.amplitude_jitter;
                let amp = blob.amplitude * (1.0 + rng.random_range(-aj..=aj));
                let denom = 2.0 * blob.sigma * blob.sigma;
                for y in 0..self.height {
                    for x in 0..self.width {
                        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                        signal[y * self.width + x] += amp * (-d2 / denom).exp();
                    }
                }
            }
            for c in 0..self.channels {
                let chan = &mut row[c * plane..(c + 1) * plane];
                fill_gaussian(chan, 0.0, self.noise_sigma, &mut rng);
                for (p, &s) in chan.iter_mut().zip(&signal) {
                    *p = (*p + s).clamp(0.0, 1.0);
                }
            }
        }
        let mut shape = vec![n];
        shape.extend(self.image_dims());
        LabeledBatch::new(Tensor::from_vec(&shape, data)?, labels)
    }
}
