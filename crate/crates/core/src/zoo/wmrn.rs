use serde::{Deserialize, Serialize};

use super::blocks::{bilinear_x4, global_skip, residual_block, ResidualSpec};
use super::{attach, ensure, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmrnConfig {
    pub width: usize,
    /// WMResBlocks in the non-linear mapping stage.
    pub blocks: usize,
    /// Depthwise kernel sizes of the parallel branches.
    pub kernels: Vec<usize>,
}

impl Default for WmrnConfig {
    fn default() -> Self {
        WmrnConfig { width: 64, blocks: 10, kernels: vec![3, 5] }
    }
}

/// Depthwise `k×k` → act → pointwise 1×1, both biased.
pub(crate) fn separable(b: &mut GraphBuilder, scope: &str, x: &str, w: usize, k: usize, act: Activation) -> String {
    b.scoped(scope, |b| {
        let d = b.conv("dw", x, ConvParams::depthwise(w, k));
        let a = b.act("act", &d, act);
        b.conv("pw", &a, ConvParams::new(w, w, 1))
    })
}

/// WMRN: feature extraction (first conv + residual block), non-linear
/// mapping by weighted multi-scale separable blocks, reconstruction from
/// the FE and NLM features, interpolated global residual.
pub fn build_wmrn(cfg: &WmrnConfig) -> Result<Graph> {
    let w = cfg.width;
    ensure(w > 0 && cfg.blocks > 0, || "width and blocks must be positive".into())?;
    ensure(!cfg.kernels.is_empty() && cfg.kernels.iter().all(|k| k % 2 == 1), || {
        format!("kernels {:?} must be odd and non-empty", cfg.kernels)
    })?;
    let act = Activation::leaky();
    let mut b = GraphBuilder::new("wmrn");
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let f = b.conv("conv_first", &x, ConvParams::new(3, w, 3));
    let f = b.act("conv_first.act", &f, act);
    let fe = residual_block(&mut b, "fe", &f, ResidualSpec::plain(w, act));
    b.set_tag("ResBlk");
    let mut h = fe.clone();
    for i in 0..cfg.blocks {
        h = b.scoped(format!("nlm{i}"), |b| {
            let mut branches = Vec::new();
            for &k in &cfg.kernels {
                let s = separable(b, &format!("k{k}"), &h, w, k, act);
                branches.push(b.scale(&format!("k{k}.lambda"), &s, true, 1.0));
            }
            let refs: Vec<&str> = branches.iter().map(String::as_str).collect();
            let merged = if refs.len() == 1 { branches[0].clone() } else { b.sum("merge.sum", &refs) };
            let m = b.conv("merge", &merged, ConvParams::new(w, w, 1));
            b.sum("add", &[&m, &h])
        });
    }
    b.set_tag("FuseBlk");
    let cat = b.concat("rec.cat", &[&fe, &h]);
    let r = b.conv("rec.fuse", &cat, ConvParams::new(2 * w, w, 1));
    b.set_tag("UpsBlk");
    let mut u = r;
    for i in 1..=2 {
        let c = b.conv(&format!("upconv{i}"), &u, ConvParams::new(w, 4 * w, 3));
        let ps = b.pixel_shuffle(&format!("upconv{i}.shuffle"), &c, 2);
        u = b.act(&format!("upconv{i}.act"), &ps, act);
    }
    b.set_tag("RecBlk");
    let out = b.conv("conv_last", &u, ConvParams::new(w, 3, 3));
    let out = global_skip(&mut b, &x, &out, bilinear_x4());
    Ok(attach(b.finish(&out)?, ArchConfig::Wmrn(cfg.clone())))
}
