use serde::{Deserialize, Serialize};

use super::blocks::{bilinear_x4, global_skip, msr_upsampler, residual_block, ResidualSpec};
use super::{attach, ensure, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BlockChoice {
    InvertedResidual { expand: usize },
    BasicResidual,
    BasicResidualLrelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvResConfig {
    pub width: usize,
    pub blocks: Vec<BlockChoice>,
}

impl Default for InvResConfig {
    fn default() -> Self {
        InvResConfig { width: 64, blocks: vec![BlockChoice::InvertedResidual { expand: 6 }; 16] }
    }
}

/// `x + project(act(dw3x3(act(expand(x)))))`, all bias-free.
pub fn inverted_residual_block(b: &mut GraphBuilder, scope: &str, x: &str, width: usize, expand: usize) -> String {
    let mid = width * expand;
    b.scoped(scope, |b| {
        let e = b.conv("expand", x, ConvParams::new(width, mid, 1).no_bias());
        let e = b.act("expand.act", &e, Activation::Relu);
        let d = b.conv("dw", &e, ConvParams::depthwise(mid, 3).no_bias());
        let d = b.act("dw.act", &d, Activation::Relu);
        let p = b.conv("project", &d, ConvParams::new(mid, width, 1).no_bias());
        b.sum("add", &[&p, x])
    })
}

/// MSRResNet with a per-position block menu; the default body is sixteen
/// inverted residual blocks with expansion 6.
pub fn build_inverted_residual(cfg: &InvResConfig) -> Result<Graph> {
    let w = cfg.width;
    ensure(w > 0, || "width must be positive".into())?;
    for (i, c) in cfg.blocks.iter().enumerate() {
        if let BlockChoice::InvertedResidual { expand } = c {
            ensure(*expand >= 1, || format!("block {i}: expand ratio {expand} < 1"))?;
        }
    }
    let act = Activation::leaky();
    let mut b = GraphBuilder::new("invres");
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let f = b.conv("conv_first", &x, ConvParams::new(3, w, 3));
    let mut h = b.act("conv_first.act", &f, act);
    b.set_tag("ResBlk");
    for (i, choice) in cfg.blocks.iter().enumerate() {
        let scope = format!("body{i}");
        h = match *choice {
            BlockChoice::InvertedResidual { expand } => inverted_residual_block(&mut b, &scope, &h, w, expand),
            BlockChoice::BasicResidual => residual_block(&mut b, &scope, &h, ResidualSpec::plain(w, Activation::Relu)),
            BlockChoice::BasicResidualLrelu => residual_block(&mut b, &scope, &h, ResidualSpec::plain(w, act)),
        };
    }
    let out = msr_upsampler(&mut b, &h, w, 3, act);
    let out = global_skip(&mut b, &x, &out, bilinear_x4());
    Ok(attach(b.finish(&out)?, ArchConfig::Invres(cfg.clone())))
}
