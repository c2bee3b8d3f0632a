use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::data::quantize;
use crate::Tensor;

/// PSNR in dB, or the verdict for a zero-error pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4} dB"),
            Psnr::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrChannel {
    #[default]
    Rgb,
    /// BT.601 luma of the quantized RGB values.
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsnrOptions {
    pub border: usize,
    pub channel: PsnrChannel,
}

impl Default for PsnrOptions {
    fn default() -> Self {
        PsnrOptions { border: 4, channel: PsnrChannel::Rgb }
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0
}

/// RGB PSNR after 8-bit quantization, ignoring `border` pixels per side.
pub fn psnr(sr: &Tensor, gt: &Tensor, border: usize) -> Result<Psnr> {
    psnr_with(sr, gt, &PsnrOptions { border, ..Default::default() })
}

pub fn psnr_with(sr: &Tensor, gt: &Tensor, opts: &PsnrOptions) -> Result<Psnr> {
    let s = sr.shape();
    if s != gt.shape() {
        return Err(EvalError::Shape(format!("sr {s} vs gt {}", gt.shape())));
    }
    let b = opts.border;
    if s.h <= 2 * b || s.w <= 2 * b {
        return Err(EvalError::Shape(format!("{}x{} image too small for border {b}", s.h, s.w)));
    }
    if opts.channel == PsnrChannel::Y && s.c != 3 {
        return Err(EvalError::Shape(format!("Y channel needs 3 channels, got {}", s.c)));
    }
    let (sr, gt) = (quantize(sr), quantize(gt));
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for n in 0..s.n {
        for y in b..s.h - b {
            for x in b..s.w - b {
                match opts.channel {
                    PsnrChannel::Rgb => {
                        for c in 0..s.c {
                            let d = sr.at(n, c, y, x) as f64 - gt.at(n, c, y, x) as f64;
                            sum += d * d;
                            count += 1;
                        }
                    }
                    PsnrChannel::Y => {
                        let px = |t: &Tensor, c| t.at(n, c, y, x) as f64;
                        let d = luma(px(&sr, 0), px(&sr, 1), px(&sr, 2)) - luma(px(&gt, 0), px(&gt, 1), px(&gt, 2));
                        sum += d * d;
                        count += 1;
                    }
                }
            }
        }
    }
    let mse = sum / count as f64;
    Ok(if mse == 0.0 { Psnr::Infinite } else { Psnr::Finite(10.0 * (255.0f64 * 255.0 / mse).log10()) })
}

/// Mean of the finite values; `None` when every pair was exact.
pub fn mean_psnr(values: &[Psnr]) -> Option<f64> {
    let finite: Vec<f64> = values.iter().filter_map(|p| p.db()).collect();
    if finite.is_empty() {
        None
    } else {
        Some(finite.iter().sum::<f64>() / finite.len() as f64)
    }
}
