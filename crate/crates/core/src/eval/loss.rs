use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    L1,
    /// L1 weighted by the reconstruction error of each image.
    FocalL1,
    /// Same weighting applied per pixel.
    FocalL1PerPixel,
    /// L1 plus `λ·‖∇sr‖₂ / N`.
    L1Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// TV weight; only read by `L1Tv`.
    pub lambda: f64,
}

pub const DEFAULT_TV_LAMBDA: f64 = 1e-4;

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec { kind, lambda: DEFAULT_TV_LAMBDA }
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::new(LossKind::L1)
    }
}

/// Evaluates `spec` on normalized `[0, 1]` tensors.
pub fn loss(sr: &Tensor, gt: &Tensor, spec: &LossSpec) -> Result<f64> {
    if sr.shape() != gt.shape() {
        return Err(EvalError::Shape(format!("sr {} vs gt {}", sr.shape(), gt.shape())));
    }
    if spec.lambda.is_nan() || spec.lambda < 0.0 || !spec.lambda.is_finite() {
        return Err(EvalError::Invalid(format!("loss weight {} must be finite and non-negative", spec.lambda)));
    }
    let abs: Vec<f64> = sr.data().iter().zip(gt.data()).map(|(a, b)| (*a as f64 - *b as f64).abs()).collect();
    let n = abs.len() as f64;
    let l1 = abs.iter().sum::<f64>() / n;
    Ok(match spec.kind {
        LossKind::L1 => l1,
        LossKind::FocalL1 => {
            let per = abs.len() / sr.shape().n;
            let items: Vec<f64> = abs.chunks(per).map(|c| c.iter().sum::<f64>() / per as f64).collect();
            let wsum: f64 = items.iter().sum();
            if wsum == 0.0 {
                0.0
            } else {
                items.iter().map(|l| l * l).sum::<f64>() / wsum
            }
        }
        LossKind::FocalL1PerPixel => {
            let wsum: f64 = abs.iter().sum();
            if wsum == 0.0 {
                0.0
            } else {
                abs.iter().map(|d| d * d).sum::<f64>() / wsum
            }
        }
        LossKind::L1Tv => l1 + spec.lambda * total_variation(sr).sqrt() / n,
    })
}

/// Sum of squared forward differences; the difference past the last row or
/// column is zero (replicate boundary).
fn total_variation(t: &Tensor) -> f64 {
    let s = t.shape();
    let mut acc = 0.0f64;
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    let v = t.at(n, c, y, x) as f64;
                    if x + 1 < s.w {
                        acc += (t.at(n, c, y, x + 1) as f64 - v).powi(2);
                    }
                    if y + 1 < s.h {
                        acc += (t.at(n, c, y + 1, x) as f64 - v).powi(2);
                    }
                }
            }
        }
    }
    acc
}
