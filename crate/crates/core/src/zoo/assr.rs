use serde::{Deserialize, Serialize};

use super::blocks::squeeze_excitation;
use super::{attach, ensure, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssrConfig {
    pub width: usize,
    /// Aggregative blocks.
    pub blocks: usize,
    /// Residual units per aggregative block.
    pub units: usize,
    pub se_reduction: usize,
}

impl Default for AssrConfig {
    fn default() -> Self {
        AssrConfig { width: 64, blocks: 3, units: 4, se_reduction: 16 }
    }
}

/// ASSR: bias-free single-width body. Each aggregative block chains
/// residual units, concatenates their outputs once, fuses them with a 1×1
/// conv and an SE gate. Global residual, then expansion conv + shuffle ×2
/// twice.
pub fn build_assr(cfg: &AssrConfig) -> Result<Graph> {
    let w = cfg.width;
    ensure(w > 0 && cfg.blocks > 0 && cfg.units > 0, || "width, blocks and units must be positive".into())?;
    ensure(cfg.se_reduction > 0 && cfg.se_reduction <= w, || format!("se_reduction {} out of range", cfg.se_reduction))?;
    let conv = |k| ConvParams::new(w, w, k).no_bias();
    let relu = Activation::Relu;
    let mut b = GraphBuilder::new("assr");
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let siel = b.conv("siel", &x, ConvParams::new(3, w, 3).no_bias());
    let mut h = siel.clone();
    for i in 0..cfg.blocks {
        h = b.scoped(format!("ab{i}"), |b| {
            b.set_tag("ResBlk");
            let mut u = h.clone();
            let mut outs = Vec::new();
            for j in 0..cfg.units {
                u = b.scoped(format!("aru{j}"), |b| {
                    let c = b.conv("conv1", &u, conv(3));
                    let a = b.act("act", &c, relu);
                    let c = b.conv("conv2", &a, conv(3));
                    b.sum("add", &[&c, &u])
                });
                outs.push(u.clone());
            }
            b.set_tag("FuseBlk");
            let refs: Vec<&str> = outs.iter().map(String::as_str).collect();
            let cat = b.concat("cat", &refs);
            let f = b.conv("aff", &cat, ConvParams::new(w * cfg.units, w, 1).no_bias());
            let g = squeeze_excitation(b, "se", &f, w, w / cfg.se_reduction, relu, Activation::Sigmoid);
            b.sum("add", &[&g, &h])
        });
    }
    b.set_tag("ResBlk");
    let gr = b.conv("gr", &h, conv(3));
    let gr = b.sum("gr.add", &[&gr, &siel]);
    b.set_tag("UpsBlk");
    let c = b.conv("usn1", &gr, ConvParams::new(w, 4 * w, 3).no_bias());
    let c = b.pixel_shuffle("usn1.shuffle", &c, 2);
    let c = b.act("usn1.act", &c, relu);
    let c = b.conv("usn2", &c, ConvParams::new(w, 12, 3).no_bias());
    let out = b.pixel_shuffle("usn2.shuffle", &c, 2);
    Ok(attach(b.finish(&out)?, ArchConfig::Assr(cfg.clone())))
}
