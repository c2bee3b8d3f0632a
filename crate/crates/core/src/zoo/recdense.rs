use serde::{Deserialize, Serialize};

use super::blocks::{bilinear_x4, global_skip, msr_upsampler, residual_block, ResidualSpec};
use super::{attach, ensure, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecDenseConfig {
    pub width: usize,
    /// Recurrent parts, each a group of residual blocks.
    pub parts: usize,
    pub blocks_per_part: usize,
    /// Applications of each part's shared group.
    pub recurrences: usize,
}

impl Default for RecDenseConfig {
    fn default() -> Self {
        RecDenseConfig { width: 64, parts: 2, blocks_per_part: 3, recurrences: 2 }
    }
}

/// Recurrent dense network: each part applies one weight-shared group of
/// residual blocks `recurrences` times; after every application the output
/// is concatenated with the group input and reduced by a shared 1×1 conv.
/// Part outputs are fused by a 3×3 conv before the MSRResNet upsampler.
pub fn build_recurrent_dense(cfg: &RecDenseConfig) -> Result<Graph> {
    let w = cfg.width;
    ensure(w > 0 && cfg.parts > 0 && cfg.blocks_per_part > 0 && cfg.recurrences > 0, || {
        "all sizes must be positive".into()
    })?;
    let act = Activation::leaky();
    let mut b = GraphBuilder::new("recdense");
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let f = b.conv("conv_first", &x, ConvParams::new(3, w, 3));
    let f = b.act("conv_first.act", &f, act);
    let mut h = f.clone();
    let mut part_outs = Vec::new();
    for p in 0..cfg.parts {
        let mut groups: Vec<Vec<String>> = Vec::new();
        for r in 0..cfg.recurrences {
            let scope = format!("part{p}.rec{r}");
            let (out, ids) = b.scoped(scope.clone(), |b| {
                b.set_tag("ResBlk");
                let mut u = h.clone();
                let mut ids = Vec::new();
                for i in 0..cfg.blocks_per_part {
                    u = residual_block(b, &format!("block{i}"), &u, ResidualSpec::plain(w, act));
                    ids.push(format!("{scope}.block{i}.conv1"));
                    ids.push(format!("{scope}.block{i}.conv2"));
                }
                b.set_tag("FuseBlk");
                let cat = b.concat("cat", &[&h, &u]);
                let red = b.conv("reduce", &cat, ConvParams::new(2 * w, w, 1));
                ids.push(red.clone());
                (red, ids)
            });
            groups.push(ids);
            h = out;
        }
        for slot in 0..groups[0].len() {
            b.share(groups.iter().map(|g| g[slot].clone()).collect());
        }
        part_outs.push(h.clone());
    }
    b.set_tag("FuseBlk");
    let fused = if part_outs.len() == 1 {
        b.conv("fusion", &part_outs[0], ConvParams::new(w, w, 3))
    } else {
        let refs: Vec<&str> = part_outs.iter().map(String::as_str).collect();
        let cat = b.concat("fusion.cat", &refs);
        b.conv("fusion", &cat, ConvParams::new(w * cfg.parts, w, 3))
    };
    let fused = b.sum("fusion.add", &[&fused, &f]);
    let out = msr_upsampler(&mut b, &fused, w, 3, act);
    let out = global_skip(&mut b, &x, &out, bilinear_x4());
    Ok(attach(b.finish(&out)?, ArchConfig::Recdense(cfg.clone())))
}
