use serde::{Deserialize, Serialize};

use super::{attach, ensure, ArchConfig, Result};
use crate::ir::{Graph, GraphBuilder};
use crate::tensor::{Activation, ConvParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwsrnConfig {
    pub width: usize,
    /// Expansion factor inside each AWRU.
    pub wide: usize,
    /// Local fusion blocks.
    pub lfbs: usize,
    /// AWRUs per LFB.
    pub units: usize,
    /// Kernel sizes of the parallel AWMS convs.
    pub awms_kernels: Vec<usize>,
}

impl Default for AwsrnConfig {
    fn default() -> Self {
        AwsrnConfig { width: 32, wide: 4, lfbs: 4, units: 4, awms_kernels: vec![3, 5, 7] }
    }
}

/// Adaptive weighted residual unit: `λ_res·body(x) + λ_x·x`.
fn awru(b: &mut GraphBuilder, scope: &str, x: &str, w: usize, wide: usize) -> String {
    b.scoped(scope, |b| {
        let c = b.conv("expand", x, ConvParams::new(w, w * wide, 3));
        let a = b.act("act", &c, Activation::Relu);
        let c = b.conv("contract", &a, ConvParams::new(w * wide, w, 3));
        let r = b.scale("lambda_res", &c, true, 1.0);
        let s = b.scale("lambda_x", x, true, 1.0);
        b.sum("add", &[&r, &s])
    })
}

/// AWSRN: local fusion blocks of AWRUs with a 1×1 fusion unit, an
/// adaptive multi-scale upsampler, and a conv + shuffle skip branch.
pub fn build_awsrn(cfg: &AwsrnConfig) -> Result<Graph> {
    let w = cfg.width;
    ensure(w > 0 && cfg.wide > 0 && cfg.lfbs > 0 && cfg.units > 0, || "sizes must be positive".into())?;
    ensure(!cfg.awms_kernels.is_empty() && cfg.awms_kernels.iter().all(|k| k % 2 == 1), || {
        format!("AWMS kernels {:?} must be odd and non-empty", cfg.awms_kernels)
    })?;
    let mut b = GraphBuilder::new("awsrn");
    let x = b.input(3);
    b.set_tag("SfeBlk");
    let mut h = b.conv("head", &x, ConvParams::new(3, w, 3));
    b.set_tag("ResBlk");
    for i in 0..cfg.lfbs {
        h = b.scoped(format!("lfb{i}"), |b| {
            let mut u = h.clone();
            let mut outs = Vec::new();
            for j in 0..cfg.units {
                u = awru(b, &format!("awru{j}"), &u, w, cfg.wide);
                outs.push(u.clone());
            }
            let refs: Vec<&str> = outs.iter().map(String::as_str).collect();
            let cat = b.concat("lrfu.cat", &refs);
            let f = b.conv("lrfu", &cat, ConvParams::new(w * cfg.units, w, 1));
            b.sum("lrfu.add", &[&f, &h])
        });
    }
    b.set_tag("UpsBlk");
    let mut branches = Vec::new();
    for &k in &cfg.awms_kernels {
        let c = b.conv(&format!("awms.k{k}"), &h, ConvParams::new(w, 3 * 16, k));
        branches.push(b.scale(&format!("awms.k{k}.lambda"), &c, true, 1.0));
    }
    let refs: Vec<&str> = branches.iter().map(String::as_str).collect();
    let merged = if refs.len() == 1 { branches[0].clone() } else { b.sum("awms.sum", &refs) };
    let up = b.pixel_shuffle("awms.shuffle", &merged, 4);
    b.set_tag("Skip");
    let s = b.conv("skip.conv", &x, ConvParams::new(3, 3 * 16, 3));
    let s = b.pixel_shuffle("skip.shuffle", &s, 4);
    let out = b.sum("out", &[&up, &s]);
    Ok(attach(b.finish(&out)?, ArchConfig::Awsrn(cfg.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{forward, init_weights, InitScheme};
    use crate::tensor::{self, Shape, Tensor};

    fn unit_graph() -> Graph {
        let mut b = GraphBuilder::new("awru");
        let x = b.input(4);
        let out = awru(&mut b, "u", &x, 4, 2);
        b.finish(&out).unwrap()
    }

    fn sample() -> Tensor {
        Tensor::from_fn(Shape::new(1, 4, 6, 6), |_, c, y, x| ((c * 5 + y * 3 + x * 7) % 11) as f32 - 5.0)
    }

    #[test]
    fn zero_residual_weight_is_identity() {
        let g = unit_graph();
        let mut store = init_weights(&g, 3, InitScheme::KaimingUniform);
        store.slots.get_mut("u.lambda_res.scale").unwrap().data_mut()[0] = 0.0;
        let x = sample();
        assert_eq!(forward(&g, &store, &x).unwrap(), x);
    }

    #[test]
    fn half_residual_weight_is_residual_scaling() {
        let g = unit_graph();
        let mut store = init_weights(&g, 3, InitScheme::KaimingUniform);
        let x = sample();
        let full = forward(&g, &store, &x).unwrap();
        store.slots.get_mut("u.lambda_res.scale").unwrap().data_mut()[0] = 0.5;
        let half = forward(&g, &store, &x).unwrap();
        let body = tensor::add(&full, &tensor::scale(&x, -1.0)).unwrap();
        let want = tensor::add(&x, &tensor::scale(&body, 0.5)).unwrap();
        assert!(half.max_abs_diff(&want).unwrap() < 1e-4);
    }

    #[test]
    fn awms_single_branch_selection() {
        let cfg = AwsrnConfig { width: 4, wide: 2, lfbs: 1, units: 1, awms_kernels: vec![3, 5, 7] };
        let g = build_awsrn(&cfg).unwrap();
        let mut store = init_weights(&g, 5, InitScheme::KaimingUniform);
        for k in [5, 7] {
            store.slots.get_mut(&format!("awms.k{k}.lambda.scale")).unwrap().data_mut()[0] = 0.0;
        }
        let only3 = AwsrnConfig { awms_kernels: vec![3], ..cfg };
        let g3 = build_awsrn(&only3).unwrap();
        let mut s3 = init_weights(&g3, 5, InitScheme::KaimingUniform);
        for (name, t) in s3.slots.iter_mut() {
            *t = store.slots[name].clone();
        }
        let x = Tensor::from_fn(Shape::new(1, 3, 8, 8), |_, c, y, x| ((c + y * x) % 7) as f32 / 7.0);
        let a = forward(&g, &store, &x).unwrap();
        let b = forward(&g3, &s3, &x).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-5);
    }
}
