use crate::error::{QepError, Result};
use crate::numerics::Matrix;

/// Element-wise activation with `σ(0) = 0` and Lipschitz constant
/// [`gamma`](Activation::gamma) with respect to the Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    /// `x ↦ s·tanh(x)`, Lipschitz constant `s`.
    ScaledTanh(f64),
}

impl Activation {
    pub fn gamma(&self) -> f64 {
        match *self {
            Activation::Identity | Activation::Relu => 1.0,
            Activation::ScaledTanh(s) => s,
        }
    }

    /// Name used in model files.
    pub fn kind(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::ScaledTanh(_) => "tanh",
        }
    }

    /// Inverse of [`kind`](Activation::kind) plus `gamma`.
    pub fn from_kind(kind: &str, gamma: f64) -> Result<Self> {
        let act = match kind {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "tanh" => Activation::ScaledTanh(gamma),
            other => return Err(QepError::InvalidConfig(format!("unknown activation kind '{other}'"))),
        };
        act.validate()?;
        if act.gamma() != gamma {
            return Err(QepError::InvalidConfig(format!("activation '{kind}' requires gamma {}", act.gamma())));
        }
        Ok(act)
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            Activation::ScaledTanh(s) if !(s.is_finite() && s > 0.0) => Err(QepError::InvalidConfig(format!(
                "tanh scale must be positive and finite, got {s}"
            ))),
            other => Ok(other),
        }
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            Activation::Identity => v,
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::ScaledTanh(s) => s * v.tanh(),
        }
    }

    pub fn apply(&self, m: &Matrix) -> Matrix {
        match self {
            Activation::Identity => m.clone(),
            _ => m.map(|v| self.eval(v)),
        }
    }
}
