use super::blocks::{bilinear_x4, global_skip, residual_block, ResidualSpec};
use super::{attach, invalid, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::search::SearchConfig;
use crate::tensor::{Activation, ConvParams};

/// Builds a point of the krahaon search space; rejects configs outside it.
pub fn build_krahaon(cfg: &SearchConfig) -> Result<Graph> {
    cfg.validate().map_err(invalid)?;
    build_krahaon_layout(cfg)
}

/// Same layout without the search-space check:
/// `n_x` blocks(x) → conv(x, 4y) → shuffle(2) → `n_y` blocks(y) →
/// conv(y, 4z) → shuffle(2) → `n_z` blocks(z) → conv(z, 3), plus the
/// bilinear global skip.
pub fn build_krahaon_layout(cfg: &SearchConfig) -> Result<Graph> {
    if cfg.x == 0 || cfg.y == 0 || cfg.z == 0 {
        return Err(invalid("widths must be positive"));
    }
    let act = Activation::leaky();
    let mut b = GraphBuilder::new("krahaon");
    let input = b.input(3);
    b.set_tag("SfeBlk");
    let f = b.conv("conv_first", &input, ConvParams::new(3, cfg.x, 3));
    let mut h = b.act("conv_first.act", &f, act);
    let stages = [(cfg.x, cfg.n_x, Some(cfg.y)), (cfg.y, cfg.n_y, Some(cfg.z)), (cfg.z, cfg.n_z, None)];
    for (s, &(width, count, next)) in stages.iter().enumerate() {
        b.set_tag("ResBlk");
        for i in 0..count {
            h = residual_block(&mut b, &format!("stage{s}.body{i}"), &h, ResidualSpec::plain(width, act));
        }
        if let Some(next) = next {
            b.set_tag("UpsBlk");
            let c = b.conv(&format!("upconv{s}"), &h, ConvParams::new(width, 4 * next, 3));
            let ps = b.pixel_shuffle(&format!("upconv{s}.shuffle"), &c, 2);
            h = b.act(&format!("upconv{s}.act"), &ps, act);
        }
    }
    b.set_tag("RecBlk");
    let out = b.conv("conv_last", &h, ConvParams::new(cfg.z, 3, 3));
    let out = global_skip(&mut b, &input, &out, bilinear_x4());
    Ok(attach(b.finish(&out)?, ArchConfig::Krahaon(*cfg)))
}
