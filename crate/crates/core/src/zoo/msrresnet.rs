use serde::{Deserialize, Serialize};

use super::blocks::{bilinear_x4, global_skip, msr_upsampler, residual_block, ResidualSpec};
use super::{attach, ensure, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsrResNetConfig {
    pub width: usize,
    pub blocks: usize,
    /// Leaky ReLU slope.
    pub alpha: f32,
}

impl Default for MsrResNetConfig {
    fn default() -> Self {
        MsrResNetConfig { width: 64, blocks: 16, alpha: 0.2 }
    }
}

/// MSRResNet: first conv, `blocks` residual blocks, two ×2 pixel-shuffle
/// stages, HR conv, last conv, plus the bilinear global skip.
pub fn build_msrresnet(cfg: &MsrResNetConfig) -> Result<Graph> {
    ensure(cfg.width > 0, || "width must be positive".into())?;
    let act = Activation::LeakyRelu { alpha: cfg.alpha };
    let w = cfg.width;
    let mut b = GraphBuilder::new("msrresnet");
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let f = b.conv("conv_first", &x, ConvParams::new(3, w, 3));
    let mut h = b.act("conv_first.act", &f, act);
    b.set_tag("ResBlk");
    for i in 0..cfg.blocks {
        h = residual_block(&mut b, &format!("body{i}"), &h, ResidualSpec::plain(w, act));
    }
    let out = msr_upsampler(&mut b, &h, w, 3, act);
    let out = global_skip(&mut b, &x, &out, bilinear_x4());
    Ok(attach(b.finish(&out)?, ArchConfig::Msrresnet(cfg.clone())))
}
