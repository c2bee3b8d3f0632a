use serde::{Deserialize, Serialize};

use super::blocks::{bilinear_x4, global_skip, light_upsampler, residual_block, ResidualSpec};
use super::{attach, ensure, invalid, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilaResNetConfig {
    pub track: u8,
    pub width: usize,
    /// Dilations of the two convs of each residual block.
    pub patterns: Vec<(usize, usize)>,
    pub res_scale: Option<f32>,
    /// Block pairs `(a, b)` (0-based) whose convs share weights.
    pub share_blocks: Vec<(usize, usize)>,
    /// Blocks whose two convs share one weight.
    pub share_within: Vec<usize>,
}

const T3_PATTERNS: [(usize, usize); 15] = [
    (1, 1),
    (1, 2),
    (1, 2),
    (2, 2),
    (2, 2),
    (1, 2),
    (1, 2),
    (2, 2),
    (2, 2),
    (1, 2),
    (1, 2),
    (1, 1),
    (2, 2),
    (1, 1),
    (1, 2),
];

impl DilaResNetConfig {
    /// Default layout for a challenge track.
    pub fn track(track: u8) -> Result<Self> {
        let base = DilaResNetConfig {
            track,
            width: 64,
            patterns: T3_PATTERNS.to_vec(),
            res_scale: Some(0.5),
            share_blocks: Vec::new(),
            share_within: Vec::new(),
        };
        Ok(match track {
            1 => DilaResNetConfig {
                share_blocks: vec![(1, 2), (3, 4), (5, 6), (7, 8), (9, 10)],
                share_within: vec![12],
                ..base
            },
            2 => DilaResNetConfig {
                patterns: (0..12).map(|i| if i % 2 == 0 { (1, 2) } else { (2, 2) }).collect(),
                res_scale: None,
                ..base
            },
            3 => base,
            other => return Err(invalid(format!("track must be 1, 2 or 3, got {other}"))),
        })
    }
}

/// DilaResNet: MSRResNet-style body built from dilated residual blocks,
/// optional residual scaling and weight sharing, light ×2 ×2 upsampler.
pub fn build_dilaresnet(cfg: &DilaResNetConfig) -> Result<Graph> {
    let w = cfg.width;
    let n = cfg.patterns.len();
    ensure(w > 0, || "width must be positive".into())?;
    ensure(cfg.patterns.iter().all(|&(a, b)| a > 0 && b > 0), || "dilations must be positive".into())?;
    let mut used = vec![false; n];
    for &(a, b) in &cfg.share_blocks {
        ensure(a < n && b < n && a != b, || format!("share pair ({a}, {b}) out of range"))?;
        ensure(cfg.patterns[a] == cfg.patterns[b], || format!("blocks {a} and {b} have different dilations"))?;
        ensure(!used[a] && !used[b], || format!("block in pair ({a}, {b}) already shared"))?;
        used[a] = true;
        used[b] = true;
    }
    for &k in &cfg.share_within {
        ensure(k < n && !used[k], || format!("block {k} cannot share within"))?;
        let (d1, d2) = cfg.patterns[k];
        ensure(d1 == d2, || format!("block {k} convs have different dilations"))?;
    }

    let act = Activation::leaky();
    let mut b = GraphBuilder::new(format!("dilaresnet-t{}", cfg.track));
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let f = b.conv("conv_first", &x, ConvParams::new(3, w, 3));
    let mut h = b.act("conv_first.act", &f, act);
    b.set_tag("ResBlk");
    for (i, &dilations) in cfg.patterns.iter().enumerate() {
        let spec = ResidualSpec { dilations, res_scale: cfg.res_scale, ..ResidualSpec::plain(w, act) };
        h = residual_block(&mut b, &format!("body{i}"), &h, spec);
    }
    for &(a, c) in &cfg.share_blocks {
        for conv in ["conv1", "conv2"] {
            b.share(vec![format!("body{a}.{conv}"), format!("body{c}.{conv}")]);
        }
    }
    for &k in &cfg.share_within {
        b.share(vec![format!("body{k}.conv1"), format!("body{k}.conv2")]);
    }
    let out = light_upsampler(&mut b, &h, w, 3, act, true);
    let out = global_skip(&mut b, &x, &out, bilinear_x4());
    Ok(attach(b.finish(&out)?, ArchConfig::Dilaresnet(cfg.clone())))
}
