//! Building blocks shared by several architectures.

use crate::ir::{GraphBuilder, LayerKind};
use crate::tensor::{Activation, ConvParams, ResizeSpec};

/// Which layers a residual block uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSpec {
    pub width: usize,
    pub act: Activation,
    pub bias: bool,
    pub dilations: (usize, usize),
    /// Fixed multiplier on the residual branch.
    pub res_scale: Option<f32>,
}

impl ResidualSpec {
    pub fn plain(width: usize, act: Activation) -> Self {
        ResidualSpec { width, act, bias: true, dilations: (1, 1), res_scale: None }
    }
}

/// `x + [scale ·] conv(act(conv(x)))`; returns the output id. The two convs
/// are `<scope>.conv1` / `<scope>.conv2`.
pub fn residual_block(b: &mut GraphBuilder, scope: &str, x: &str, spec: ResidualSpec) -> String {
    b.scoped(scope, |b| {
        let p = ConvParams::new(spec.width, spec.width, 3).bias(spec.bias);
        let c1 = b.conv("conv1", x, p.dilated(spec.dilations.0));
        let a = b.act("act", &c1, spec.act);
        let mut y = b.conv("conv2", &a, p.dilated(spec.dilations.1));
        if let Some(s) = spec.res_scale {
            y = b.scale("res_scale", &y, false, s);
        }
        b.sum("add", &[&y, x])
    })
}

/// Squeeze-and-excitation gate: pool → dense reduce → act → dense expand →
/// gate activation → channel-wise multiply.
pub fn squeeze_excitation(
    b: &mut GraphBuilder,
    scope: &str,
    x: &str,
    channels: usize,
    reduced: usize,
    inner: Activation,
    gate: Activation,
) -> String {
    b.scoped(scope, |b| {
        let p = b.add("pool", LayerKind::GlobalAvgPool, &[x]);
        let d1 = b.add(
            "fc1",
            LayerKind::Dense { in_features: channels, out_features: reduced, has_bias: true },
            &[&p],
        );
        let a = b.act("act", &d1, inner);
        let d2 = b.add(
            "fc2",
            LayerKind::Dense { in_features: reduced, out_features: channels, has_bias: true },
            &[&a],
        );
        let g = b.act("gate", &d2, gate);
        b.add("scale", LayerKind::Mul, &[x, &g])
    })
}

/// Upsampler + reconstruction of MSRResNet: two `conv(w, 4w) → shuffle(2) →
/// act` stages tagged `UpsBlk`, then `conv(w, w) → act → conv(w, out)`
/// tagged `RecBlk`.
pub fn msr_upsampler(b: &mut GraphBuilder, x: &str, width: usize, out_channels: usize, act: Activation) -> String {
    let saved = b.tag().to_string();
    b.set_tag("UpsBlk");
    let mut y = x.to_string();
    for i in 1..=2 {
        let c = b.conv(&format!("upconv{i}"), &y, ConvParams::new(width, width * 4, 3));
        let ps = b.pixel_shuffle(&format!("upconv{i}.shuffle"), &c, 2);
        y = b.act(&format!("upconv{i}.act"), &ps, act);
    }
    b.set_tag("RecBlk");
    let hr = b.conv("hr_conv", &y, ConvParams::new(width, width, 3));
    let hr = b.act("hr_conv.act", &hr, act);
    let out = b.conv("conv_last", &hr, ConvParams::new(width, out_channels, 3));
    b.set_tag(&saved);
    out
}

/// Lighter upsampler: `conv(w, 4w) → shuffle(2) → act → conv(w, 4·out) →
/// shuffle(2)`, all tagged `UpsBlk`.
pub fn light_upsampler(b: &mut GraphBuilder, x: &str, width: usize, out_channels: usize, act: Activation, bias: bool) -> String {
    let saved = b.tag().to_string();
    b.set_tag("UpsBlk");
    let c = b.conv("upconv1", x, ConvParams::new(width, width * 4, 3).bias(bias));
    let ps = b.pixel_shuffle("upconv1.shuffle", &c, 2);
    let a = b.act("upconv1.act", &ps, act);
    let c = b.conv("upconv2", &a, ConvParams::new(width, out_channels * 4, 3).bias(bias));
    let out = b.pixel_shuffle("upconv2.shuffle", &c, 2);
    b.set_tag(&saved);
    out
}

/// Adds the ×4-interpolated input to `x` (the global skip).
pub fn global_skip(b: &mut GraphBuilder, input: &str, x: &str, spec: ResizeSpec) -> String {
    let saved = b.tag().to_string();
    b.set_tag("Skip");
    let up = b.add("skip.interp", LayerKind::Resize(spec), &[input]);
    let out = b.sum("skip.add", &[x, &up]);
    b.set_tag(&saved);
    out
}

/// Bilinear ×4, pixel-center aligned.
pub fn bilinear_x4() -> ResizeSpec {
    ResizeSpec::bilinear(4.0)
}
