use serde::{Deserialize, Serialize};

use super::blocks::{global_skip, msr_upsampler, squeeze_excitation};
use super::{attach, ensure, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams, ResizeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpzConfig {
    pub width: usize,
    /// Output width of each block's first conv; its length is the block count.
    pub first_widths: Vec<usize>,
    pub se_reduction: usize,
}

impl Default for PpzConfig {
    fn default() -> Self {
        PpzConfig { width: 64, first_widths: vec![42; 10], se_reduction: 4 }
    }
}

/// PPZ: bias-free reflect-padded residual blocks with h-swish and an
/// h-sigmoid SE gate; MSRResNet upsampler; bicubic global skip.
pub fn build_ppz(cfg: &PpzConfig) -> Result<Graph> {
    let w = cfg.width;
    ensure(w > 0 && cfg.first_widths.iter().all(|&v| v > 0), || "widths must be positive".into())?;
    ensure(cfg.se_reduction > 0 && cfg.se_reduction <= w, || format!("se_reduction {} out of range", cfg.se_reduction))?;
    let body = |i, o| ConvParams::new(i, o, 3).no_bias().reflect();
    let mut b = GraphBuilder::new("ppz");
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let mut h = b.conv("conv_first", &x, body(3, w));
    b.set_tag("ResBlk");
    for (i, &mid) in cfg.first_widths.iter().enumerate() {
        h = b.scoped(format!("body{i}"), |b| {
            let c = b.conv("conv1", &h, body(w, mid));
            let a = b.act("act", &c, Activation::HSwish);
            let c = b.conv("conv2", &a, body(mid, w));
            let g = squeeze_excitation(b, "se", &c, w, w / cfg.se_reduction, Activation::Relu, Activation::HSigmoid);
            b.sum("add", &[&g, &h])
        });
    }
    let out = msr_upsampler(&mut b, &h, w, 3, Activation::leaky());
    let out = global_skip(&mut b, &x, &out, ResizeSpec::bicubic(4.0));
    Ok(attach(b.finish(&out)?, ArchConfig::Ppz(cfg.clone())))
}
