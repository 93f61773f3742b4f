//! Element-wise activation functions and their derivatives.

use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

pub const LEAKY_RELU_SLOPE: f64 = 0.01;
pub const ELU_ALPHA: f64 = 1.0;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
pub const GELU_SCALE: f64 = 1.702;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied activation given as a value/derivative pair.
#[derive(Clone)]
pub struct CustomActivation {
    pub name: String,
    value: ScalarFn,
    derivative: ScalarFn,
    kinked: bool,
}

impl fmt::Debug for CustomActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomActivation")
            .field("name", &self.name)
            .field("kinked", &self.kinked)
            .finish_non_exhaustive()
    }
}

/// Activation function together with its hyperparameters.
///
/// Breakpoints are always at the origin. At a kink the derivative returns
/// its right limit, e.g. `relu'(0) = 1` and `selu'(0) = lambda`.
#[derive(Debug, Clone)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Elu {
        alpha: f64,
    },
    Selu {
        lambda: f64,
        alpha: f64,
    },
    /// `x * sigmoid(scale * x)`
    Gelu {
        scale: f64,
    },
    Custom(CustomActivation),
}

impl PartialEq for Activation {
    fn eq(&self, other: &Self) -> bool {
        use Activation::*;
        match (self, other) {
            (Identity, Identity) | (Tanh, Tanh) | (Relu, Relu) => true,
            (LeakyRelu { slope: a }, LeakyRelu { slope: b }) => a == b,
            (Elu { alpha: a }, Elu { alpha: b }) => a == b,
            (
                Selu {
                    lambda: l1,
                    alpha: a1,
                },
                Selu {
                    lambda: l2,
                    alpha: a2,
                },
            ) => l1 == l2 && a1 == a2,
            (Gelu { scale: a }, Gelu { scale: b }) => a == b,
            (Custom(a), Custom(b)) => {
                Arc::ptr_eq(&a.value, &b.value) && Arc::ptr_eq(&a.derivative, &b.derivative)
            }
            _ => false,
        }
    }
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            slope: LEAKY_RELU_SLOPE,
        }
    }

    pub fn elu() -> Self {
        Activation::Elu { alpha: ELU_ALPHA }
    }

    pub fn selu() -> Self {
        Activation::Selu {
            lambda: SELU_LAMBDA,
            alpha: SELU_ALPHA,
        }
    }

    pub fn gelu() -> Self {
        Activation::Gelu { scale: GELU_SCALE }
    }

    pub fn custom<V, D>(name: impl Into<String>, value: V, derivative: D, kinked: bool) -> Self
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Activation::Custom(CustomActivation {
            name: name.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            kinked,
        })
    }

    /// The six activations with default hyperparameters, in table order.
    pub fn builtins() -> [Activation; 6] {
        [
            Activation::Tanh,
            Activation::Relu,
            Activation::leaky_relu(),
            Activation::elu(),
            Activation::selu(),
            Activation::gelu(),
        ]
    }

    /// Parses the CLI names (case-insensitive).
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "leakyrelu" | "leaky_relu" | "leaky-relu" => Ok(Activation::leaky_relu()),
            "elu" => Ok(Activation::elu()),
            "selu" => Ok(Activation::selu()),
            "gelu" => Ok(Activation::gelu()),
            other => Err(Error::invalid(format!(
                "unknown activation '{other}' (expected tanh, relu, leakyrelu, elu, selu, gelu)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leakyrelu",
            Activation::Elu { .. } => "elu",
            Activation::Selu { .. } => "selu",
            Activation::Gelu { .. } => "gelu",
            Activation::Custom(c) => &c.name,
        }
    }

    /// Named hyperparameters.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Activation::LeakyRelu { slope } => vec![("slope", slope)],
            Activation::Elu { alpha } => vec![("alpha", alpha)],
            Activation::Selu { lambda, alpha } => vec![("lambda", lambda), ("alpha", alpha)],
            Activation::Gelu { scale } => vec![("scale", scale)],
            _ => Vec::new(),
        }
    }

    /// Not differentiable at the origin.
    pub fn kinked(&self) -> bool {
        match self {
            Activation::Relu | Activation::LeakyRelu { .. } => true,
            Activation::Selu { lambda, alpha } => (lambda * alpha - lambda).abs() > 0.0,
            Activation::Elu { alpha } => *alpha != 1.0,
            Activation::Custom(c) => c.kinked,
            _ => false,
        }
    }

    /// Defined piecewise around the origin, so Gaussian expectations of
    /// `phi`, `phi^2` or `phi'^2` need the split quadrature even when `phi`
    /// itself is differentiable (ELU's second derivative jumps at 0).
    pub fn piecewise(&self) -> bool {
        self.kinked() || matches!(self, Activation::Elu { .. })
    }

    /// Lipschitz constants of `phi` and `phi'` where they are known.
    /// GELU's is rounded up from a numerical maximum.
    pub fn lipschitz(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            Activation::Identity => (Some(1.0), Some(0.0)),
            Activation::Tanh => (Some(1.0), Some(4.0 / (3.0 * 3f64.sqrt()))),
            Activation::Relu => (Some(1.0), None),
            Activation::LeakyRelu { slope } => (Some(slope.abs().max(1.0)), None),
            Activation::Elu { alpha: 1.0 } => (Some(1.0), Some(1.0)),
            Activation::Elu { alpha } => (Some(alpha.abs().max(1.0)), None),
            Activation::Selu { lambda, alpha } => (Some(lambda * alpha.max(1.0)), None),
            Activation::Gelu { scale } if scale == GELU_SCALE => (Some(1.0999), None),
            _ => (None, None),
        }
    }

    /// `phi(x)` without input validation; the hot path of propagation.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Elu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x.exp_m1()
                }
            }
            Activation::Selu { lambda, alpha } => {
                if x > 0.0 {
                    lambda * x
                } else {
                    lambda * alpha * x.exp_m1()
                }
            }
            Activation::Gelu { scale } => x * sigmoid(scale * x),
            Activation::Custom(c) => (c.value)(x),
        }
    }

    /// `phi'(x)`, right limit at a kink.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    *slope
                }
            }
            Activation::Elu { alpha } => {
                if x >= 0.0 {
                    1.0
                } else {
                    alpha * x.exp()
                }
            }
            Activation::Selu { lambda, alpha } => {
                if x >= 0.0 {
                    *lambda
                } else {
                    lambda * alpha * x.exp()
                }
            }
            Activation::Gelu { scale } => {
                let s = sigmoid(scale * x);
                s + scale * x * s * (1.0 - s)
            }
            Activation::Custom(c) => (c.derivative)(x),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `phi(x)`, rejecting non-finite input.
pub fn act_eval(spec: &Activation, x: f64) -> Result<f64> {
    check_input(x)?;
    Ok(spec.value(x))
}

/// `phi'(x)`, rejecting non-finite input.
pub fn act_deriv(spec: &Activation, x: f64) -> Result<f64> {
    check_input(x)?;
    Ok(spec.derivative(x))
}

fn check_input(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            location: "activation input".into(),
            value: x,
        })
    }
}

/// `a * phi + b`, the form a Gaussian-Poincaré normalized activation takes.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineActivation {
    pub base: Activation,
    pub scale: f64,
    pub shift: f64,
}

impl AffineActivation {
    pub fn raw(base: Activation) -> Self {
        Self {
            base,
            scale: 1.0,
            shift: 0.0,
        }
    }

    pub fn new(base: Activation, scale: f64, shift: f64) -> Self {
        Self { base, scale, shift }
    }

    pub fn is_raw(&self) -> bool {
        self.scale == 1.0 && self.shift == 0.0
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.scale * self.base.value(x) + self.shift
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.scale * self.base.derivative(x)
    }
}
