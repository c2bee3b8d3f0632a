use serde::{Deserialize, Serialize};

use super::blocks::squeeze_excitation;
use super::{attach, ensure, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImdnConfig {
    pub width: usize,
    pub blocks: usize,
    /// Channels split off at each distillation stage.
    pub distilled: usize,
    /// Adds a squeeze-excitation gate before each block's 1×1 fusion.
    pub attention: bool,
    pub alpha: f32,
}

impl Default for ImdnConfig {
    fn default() -> Self {
        ImdnConfig { width: 64, blocks: 8, distilled: 16, attention: false, alpha: 0.2 }
    }
}

/// One information multi-distillation block; returns its output id.
pub fn imdb_block(b: &mut GraphBuilder, scope: &str, x: &str, cfg: &ImdnConfig) -> String {
    let w = cfg.width;
    let d = cfg.distilled;
    let r = w - d;
    let act = Activation::LeakyRelu { alpha: cfg.alpha };
    b.scoped(scope, |b| {
        let mut slices = Vec::new();
        let mut rest = x.to_string();
        let mut in_ch = w;
        for stage in 1..=3 {
            let c = b.conv(&format!("c{stage}"), &rest, ConvParams::new(in_ch, w, 3));
            let a = b.act(&format!("c{stage}.act"), &c, act);
            let parts = b.split(&format!("split{stage}"), &a, &[d, r]);
            slices.push(parts[0].clone());
            rest = parts[1].clone();
            in_ch = r;
        }
        let c4 = b.conv("c4", &rest, ConvParams::new(r, d, 3));
        slices.push(c4);
        let refs: Vec<&str> = slices.iter().map(String::as_str).collect();
        let mut cat = b.concat("cat", &refs);
        if cfg.attention {
            cat = squeeze_excitation(b, "se", &cat, 4 * d, (4 * d / 16).max(1), Activation::Relu, Activation::Sigmoid);
        }
        let fused = b.conv("c5", &cat, ConvParams::new(4 * d, w, 1));
        b.sum("add", &[&fused, x])
    })
}

/// IMDN: first conv, distillation blocks, concat of every block output →
/// 1×1 → 3×3 plus a long skip, then a single conv + ×4 pixel shuffle.
pub fn build_imdn(cfg: &ImdnConfig) -> Result<Graph> {
    ensure(cfg.width > 0 && cfg.blocks > 0, || "width and blocks must be positive".into())?;
    ensure(cfg.distilled > 0 && cfg.distilled < cfg.width, || {
        format!("distilled {} must be in 1..{}", cfg.distilled, cfg.width)
    })?;
    let w = cfg.width;
    let act = Activation::LeakyRelu { alpha: cfg.alpha };
    let mut b = GraphBuilder::new("imdn");
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let f = b.conv("conv_first", &x, ConvParams::new(3, w, 3));
    b.set_tag("ResBlk");
    let mut h = f.clone();
    let mut outs = Vec::new();
    for i in 0..cfg.blocks {
        h = imdb_block(&mut b, &format!("imdb{i}"), &h, cfg);
        outs.push(h.clone());
    }
    b.set_tag("FuseBlk");
    let refs: Vec<&str> = outs.iter().map(String::as_str).collect();
    let cat = b.concat("body_cat", &refs);
    let c = b.conv("fuse", &cat, ConvParams::new(w * cfg.blocks, w, 1));
    let c = b.act("fuse.act", &c, act);
    let c = b.conv("lr_conv", &c, ConvParams::new(w, w, 3));
    let c = b.sum("long_skip", &[&c, &f]);
    b.set_tag("UpsBlk");
    let up = b.conv("upconv", &c, ConvParams::new(w, 3 * 16, 3));
    let out = b.pixel_shuffle("upconv.shuffle", &up, 4);
    Ok(attach(b.finish(&out)?, ArchConfig::Imdn(cfg.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{count_params, receptive_field, LayerKind};
    use crate::zoo::blocks::{residual_block, ResidualSpec};

    fn single<F: FnOnce(&mut GraphBuilder, &str) -> String>(f: F) -> Graph {
        let mut b = GraphBuilder::new("one");
        let x = b.input(64);
        let out = f(&mut b, &x);
        b.finish(&out).unwrap()
    }

    #[test]
    fn one_block_params() {
        let g = single(|b, x| imdb_block(b, "imdb", x, &ImdnConfig::default()));
        assert_eq!(count_params(&g).total, 36_928 + 27_712 + 27_712 + 6_928 + 4_160);
        for n in g.nodes() {
            if let LayerKind::Split { sizes, .. } = &n.kind {
                assert_eq!(sizes, &vec![16, 48]);
            }
        }
    }

    #[test]
    fn block_rf_equals_two_residual_blocks() {
        let imdb = single(|b, x| imdb_block(b, "imdb", x, &ImdnConfig::default()));
        let res = single(|b, x| {
            let spec = ResidualSpec::plain(64, Activation::leaky());
            let h = residual_block(b, "r0", x, spec);
            residual_block(b, "r1", &h, spec)
        });
        assert_eq!(receptive_field(&imdb), receptive_field(&res));
    }

    #[test]
    fn attention_adds_gate_params() {
        let plain = build_imdn(&ImdnConfig::default()).unwrap();
        let att = build_imdn(&ImdnConfig { attention: true, ..Default::default() }).unwrap();
        assert_eq!(count_params(&att).total - count_params(&plain).total, 8 * 580);
    }
}
