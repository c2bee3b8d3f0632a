use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

pub const DEFAULT_LEAKY_SLOPE: f32 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f32 },
    Sigmoid,
    HSwish,
    HSigmoid,
}

impl Activation {
    pub const fn leaky() -> Self {
        Activation::LeakyRelu { alpha: DEFAULT_LEAKY_SLOPE }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu { alpha } if !(alpha > 0.0 && alpha < 1.0) => Err(
                TensorError::invalid("activation", format!("leaky_relu slope {alpha} outside (0, 1)")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn apply(&self, x: f32) -> f32 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { alpha } => {
                if x >= 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Activation::Sigmoid => {
                // split on sign so exp never overflows
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::HSigmoid => h_sigmoid(x),
            Activation::HSwish => x * h_sigmoid(x),
        }
    }
}

#[inline]
fn h_sigmoid(x: f32) -> f32 {
    (x + 3.0).clamp(0.0, 6.0) / 6.0
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => f.write_str("relu"),
            Activation::LeakyRelu { alpha } => write!(f, "leaky_relu({alpha})"),
            Activation::Sigmoid => f.write_str("sigmoid"),
            Activation::HSwish => f.write_str("h_swish"),
            Activation::HSigmoid => f.write_str("h_sigmoid"),
        }
    }
}

impl FromStr for Activation {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        let act = match s {
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "h_swish" => Activation::HSwish,
            "h_sigmoid" => Activation::HSigmoid,
            "leaky_relu" => Activation::leaky(),
            other => {
                let alpha = other
                    .strip_prefix("leaky_relu(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|a| a.parse::<f32>().ok())
                    .ok_or_else(|| {
                        TensorError::invalid("activation", format!("unknown activation {other:?}"))
                    })?;
                Activation::LeakyRelu { alpha }
            }
        };
        act.validate()?;
        Ok(act)
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Result<Tensor> {
    kind.validate()?;
    Ok(input.map(|v| kind.apply(v)))
}
