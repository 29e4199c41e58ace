//! The eleven pluggable activation functions and their derivatives.
//!
//! Each function is exposed both as a plain `f64 -> f64` pair (value and
//! derivative) and through the [`ActKind`] selector used by network layer
//! descriptors and config files. RReLU is the only stochastic one: in train
//! mode it samples a fresh negative-side slope per element, in test mode it
//! uses the fixed midpoint slope (l + u) / 2.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SELU self-normalizing constants.
pub const SELU_ALPHA: f64 = 1.6732632423543772848170429916717;
pub const SELU_LAMBDA: f64 = 1.0507009873554804934193349852946;

/// CeLU negative-side scale; a fixed hyperparameter, not trained.
pub const CELU_ALPHA: f64 = 1.0;

/// RReLU negative-slope sampling range; test mode uses the midpoint.
pub const RRELU_LOWER: f64 = 1.0 / 8.0;
pub const RRELU_UPPER: f64 = 1.0 / 3.0;

const GELU_C: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.7978845608028654;

pub fn relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        0.0
    }
}

pub fn relu_prime(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Test-mode RReLU: the negative side uses the expected slope (l + u) / 2.
pub fn rrelu_test(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x * (RRELU_LOWER + RRELU_UPPER) / 2.0
    }
}

pub fn rrelu_test_prime(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        (RRELU_LOWER + RRELU_UPPER) / 2.0
    }
}

pub fn selu(x: f64) -> f64 {
    if x >= 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

pub fn selu_prime(x: f64) -> f64 {
    if x >= 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

pub fn celu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * ((x / alpha).exp() - 1.0)
    }
}

pub fn celu_prime(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        (x / alpha).exp()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

pub fn hard_silu(x: f64) -> f64 {
    if x <= -3.0 {
        0.0
    } else if x >= 3.0 {
        x
    } else {
        x * (x + 3.0) / 6.0
    }
}

pub fn hard_silu_prime(x: f64) -> f64 {
    if x <= -3.0 {
        0.0
    } else if x >= 3.0 {
        1.0
    } else {
        (2.0 * x + 3.0) / 6.0
    }
}

pub fn hard_tanh(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

pub fn hard_tanh_prime(x: f64) -> f64 {
    if x > -1.0 && x < 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Tanh-polynomial form of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

pub fn gelu_prime(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Softplus with sharpness beta; computed as max(x,0) + log1p(exp(-beta|x|))/beta
/// to stay finite for large |x|.
pub fn softplus(x: f64, beta: f64) -> f64 {
    let bx = beta * x;
    bx.max(0.0) / beta + (-bx.abs()).exp().ln_1p() / beta
}

pub fn softplus_prime(x: f64, beta: f64) -> f64 {
    sigmoid(beta * x)
}

pub fn telu(x: f64) -> f64 {
    // For x >= 30, tanh(e^x) is exactly 1 in f64; shortcut before e^x can overflow.
    if x >= 30.0 {
        x
    } else {
        x * x.exp().tanh()
    }
}

pub fn telu_prime(x: f64) -> f64 {
    if x >= 30.0 {
        return 1.0;
    }
    let e = x.exp();
    let t = e.tanh();
    t + x * (1.0 - t * t) * e
}

pub fn mish(x: f64) -> f64 {
    x * softplus(x, 1.0).tanh()
}

pub fn mish_prime(x: f64) -> f64 {
    let t = softplus(x, 1.0).tanh();
    t + x * (1.0 - t * t) * sigmoid(x)
}

/// Selector used by layer descriptors and config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActKind {
    Relu,
    RRelu,
    Selu,
    Celu,
    Silu,
    HardSilu,
    HardTanh,
    Gelu,
    Softplus,
    Telu,
    Mish,
}

pub const ALL_ACTIVATIONS: [ActKind; 11] = [
    ActKind::Relu,
    ActKind::RRelu,
    ActKind::Selu,
    ActKind::Celu,
    ActKind::Silu,
    ActKind::HardSilu,
    ActKind::HardTanh,
    ActKind::Gelu,
    ActKind::Softplus,
    ActKind::Telu,
    ActKind::Mish,
];

impl ActKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActKind::Relu => "relu",
            ActKind::RRelu => "rrelu",
            ActKind::Selu => "selu",
            ActKind::Celu => "celu",
            ActKind::Silu => "silu",
            ActKind::HardSilu => "hardsilu",
            ActKind::HardTanh => "hardtanh",
            ActKind::Gelu => "gelu",
            ActKind::Softplus => "softplus",
            ActKind::Telu => "telu",
            ActKind::Mish => "mish",
        }
    }

    pub fn parse(name: &str) -> Result<ActKind> {
        ALL_ACTIVATIONS
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                Error::config(
                    "activation",
                    format!(
                        "unknown activation `{}`; expected one of {:?}",
                        name,
                        ALL_ACTIVATIONS.map(|k| k.name())
                    ),
                )
            })
    }

    /// Test-mode value.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ActKind::Relu => relu(x),
            ActKind::RRelu => rrelu_test(x),
            ActKind::Selu => selu(x),
            ActKind::Celu => celu(x, CELU_ALPHA),
            ActKind::Silu => silu(x),
            ActKind::HardSilu => hard_silu(x),
            ActKind::HardTanh => hard_tanh(x),
            ActKind::Gelu => gelu(x),
            ActKind::Softplus => softplus(x, 1.0),
            ActKind::Telu => telu(x),
            ActKind::Mish => mish(x),
        }
    }

    /// Test-mode analytic derivative. Train-mode RReLU derivatives are only
    /// available through [`ActKind::eval_train`], which returns the slope
    /// sampled by the matching forward evaluation.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ActKind::Relu => relu_prime(x),
            ActKind::RRelu => rrelu_test_prime(x),
            ActKind::Selu => selu_prime(x),
            ActKind::Celu => celu_prime(x, CELU_ALPHA),
            ActKind::Silu => silu_prime(x),
            ActKind::HardSilu => hard_silu_prime(x),
            ActKind::HardTanh => hard_tanh_prime(x),
            ActKind::Gelu => gelu_prime(x),
            ActKind::Softplus => softplus_prime(x, 1.0),
            ActKind::Telu => telu_prime(x),
            ActKind::Mish => mish_prime(x),
        }
    }

    /// Train-mode (value, local derivative). Only RReLU consumes the RNG:
    /// a fresh slope ~ U(RRELU_LOWER, RRELU_UPPER) per element.
    pub fn eval_train(&self, x: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match self {
            ActKind::RRelu => {
                if x >= 0.0 {
                    (x, 1.0)
                } else {
                    let a = rng.random_range(RRELU_LOWER..RRELU_UPPER);
                    (a * x, a)
                }
            }
            _ => (self.eval(x), self.derivative(x)),
        }
    }

    /// Points where the function is not C1; gradient checks must not place
    /// finite-difference stencils across these.
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            ActKind::Relu | ActKind::RRelu | ActKind::Selu => &[0.0],
            ActKind::HardSilu => &[-3.0, 3.0],
            ActKind::HardTanh => &[-1.0, 1.0],
            _ => &[],
        }
    }
}
