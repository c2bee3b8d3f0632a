use serde::{Deserialize, Serialize};

use super::blocks::{bilinear_x4, global_skip, residual_block, ResidualSpec};
use super::{attach, ensure, invalid, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoucsrConfig {
    pub width: usize,
    pub blocks: usize,
    /// Block outputs (1-based; 0 is the first-conv feature) concatenated and
    /// shuffled ×2 in the first stage.
    pub taps_a: Vec<usize>,
    /// Taps for the second ×2 stage.
    pub taps_b: Vec<usize>,
    pub alpha: f32,
}

impl Default for NoucsrConfig {
    fn default() -> Self {
        NoucsrConfig { width: 64, blocks: 16, taps_a: (1..=8).collect(), taps_b: (9..=16).collect(), alpha: 0.2 }
    }
}

fn shuffled_channels(channels: usize, what: &str) -> Result<usize> {
    if !channels.is_multiple_of(4) {
        return Err(invalid(format!("{what}: {channels} channels not divisible by 4")));
    }
    Ok(channels / 4)
}

/// NoUCSR: residual body whose tapped features are concatenated and pixel
/// shuffled twice (×2, ×2) with no upsampling convs; one 3×3 conv
/// reconstructs RGB.
pub fn build_noucsr(cfg: &NoucsrConfig) -> Result<Graph> {
    let w = cfg.width;
    ensure(w > 0, || "width must be positive".into())?;
    for &t in cfg.taps_a.iter().chain(&cfg.taps_b) {
        ensure(t <= cfg.blocks, || format!("tap {t} beyond {} blocks", cfg.blocks))?;
    }
    ensure(!cfg.taps_a.is_empty() && !cfg.taps_b.is_empty(), || "both tap lists must be non-empty".into())?;
    let ca = shuffled_channels(w * cfg.taps_a.len(), "stage A")?;
    let cb = shuffled_channels(w * cfg.taps_b.len(), "stage B")?;
    let cc = shuffled_channels(ca + cb, "stage C")?;

    let act = Activation::LeakyRelu { alpha: cfg.alpha };
    let mut b = GraphBuilder::new("noucsr");
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let f = b.conv("conv_first", &x, ConvParams::new(3, w, 3));
    let mut feats = vec![b.act("conv_first.act", &f, act)];
    b.set_tag("ResBlk");
    for i in 0..cfg.blocks {
        let h = residual_block(&mut b, &format!("body{i}"), &feats[i], ResidualSpec::plain(w, act));
        feats.push(h);
    }
    b.set_tag("UpsBlk");
    let stage = |b: &mut GraphBuilder, name: &str, taps: &[usize]| {
        let refs: Vec<&str> = taps.iter().map(|&t| feats[t].as_str()).collect();
        let cat = b.concat(&format!("{name}.cat"), &refs);
        b.pixel_shuffle(&format!("{name}.shuffle"), &cat, 2)
    };
    let a = stage(&mut b, "stage_a", &cfg.taps_a);
    let bb = stage(&mut b, "stage_b", &cfg.taps_b);
    let cat = b.concat("stage_c.cat", &[&a, &bb]);
    let up = b.pixel_shuffle("stage_c.shuffle", &cat, 2);
    b.set_tag("RecBlk");
    let out = b.conv("conv_last", &up, ConvParams::new(cc, 3, 3));
    let out = global_skip(&mut b, &x, &out, bilinear_x4());
    Ok(attach(b.finish(&out)?, ArchConfig::Noucsr(cfg.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{count_params, LayerKind};

    #[test]
    fn upsampler_has_no_conv_params() {
        let g = build_noucsr(&NoucsrConfig::default()).unwrap();
        let p = count_params(&g);
        assert_eq!(p.count("UpsBlk"), 0);
        let rec_convs = g
            .nodes()
            .iter()
            .filter(|n| n.block_tag == "RecBlk" && matches!(n.kind, LayerKind::Conv(_)))
            .count();
        assert!(rec_convs <= 1);
    }

    #[test]
    fn indivisible_concat_rejected() {
        let cfg = NoucsrConfig { width: 6, taps_a: vec![1], ..Default::default() };
        assert!(build_noucsr(&cfg).is_err());
        let cfg = NoucsrConfig { taps_b: vec![17], ..Default::default() };
        assert!(build_noucsr(&cfg).is_err());
    }
}
