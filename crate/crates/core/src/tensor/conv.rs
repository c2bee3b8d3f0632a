use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use super::{Result, Shape, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    Zero,
    /// Mirror about the edge sample without repeating it.
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
    pub pad_mode: PadMode,
    pub has_bias: bool,
}

impl ConvParams {
    /// Square `k×k` convolution with "same" padding, stride 1, biased.
    pub fn new(in_channels: usize, out_channels: usize, k: usize) -> Self {
        ConvParams {
            in_channels,
            out_channels,
            kernel: (k, k),
            stride: 1,
            padding: (k - 1) / 2,
            dilation: 1,
            groups: 1,
            pad_mode: PadMode::Zero,
            has_bias: true,
        }
    }

    /// Depthwise `k×k` convolution over `channels`.
    pub fn depthwise(channels: usize, k: usize) -> Self {
        ConvParams { groups: channels, ..ConvParams::new(channels, channels, k) }
    }

    /// Sets the dilation and re-derives "same" padding.
    pub fn dilated(self, dilation: usize) -> Self {
        ConvParams { dilation, padding: (self.kernel.0 - 1) * dilation / 2, ..self }
    }

    pub fn no_bias(self) -> Self {
        ConvParams { has_bias: false, ..self }
    }

    pub fn bias(self, has_bias: bool) -> Self {
        ConvParams { has_bias, ..self }
    }

    pub fn reflect(self) -> Self {
        ConvParams { pad_mode: PadMode::Reflect, ..self }
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels / self.groups, self.kernel.0, self.kernel.1)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(self.out_channels, 1, 1, 1)
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups > 1 && self.groups == self.in_channels && self.out_channels == self.in_channels
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.groups == 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("kernel height", self.kernel.0),
            ("kernel width", self.kernel.1),
            ("stride", self.stride),
            ("dilation", self.dilation),
            ("groups", self.groups),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TensorError::invalid("conv2d", format!("{name} must be positive")));
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(TensorError::invalid(
                "conv2d",
                format!(
                    "channels {}->{} not divisible by groups {}",
                    self.in_channels, self.out_channels, self.groups
                ),
            ));
        }
        Ok(())
    }

    fn out_extent(&self, len: usize, k: usize, axis: &str) -> Result<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = len + 2 * self.padding;
        if padded < span {
            return Err(TensorError::EmptyOutput {
                op: "conv2d",
                detail: format!("input {axis} {len} with padding {} is smaller than the {span}-pixel kernel span", self.padding),
            });
        }
        Ok((padded - span) / self.stride + 1)
    }

    /// Output shape for `input`, checking channel count and output size.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        if input.c != self.in_channels {
            return Err(TensorError::shape(
                "conv2d",
                format!("input channels: got {}, expected {}", input.c, self.in_channels),
            ));
        }
        let oh = self.out_extent(input.h, self.kernel.0, "height")?;
        let ow = self.out_extent(input.w, self.kernel.1, "width")?;
        Ok(Shape::new(input.n, self.out_channels, oh, ow))
    }

    fn check_operands(&self, input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Shape> {
        let out = self.output_shape(input.shape())?;
        let ws = self.weight_shape();
        if weight.shape() != ws {
            return Err(TensorError::shape(
                "conv2d",
                format!("weight shape: got {}, expected {ws}", weight.shape()),
            ));
        }
        match (self.has_bias, bias) {
            (true, Some(b)) if b.shape().numel() != self.out_channels => Err(TensorError::shape(
                "conv2d",
                format!("bias length: got {}, expected {}", b.shape().numel(), self.out_channels),
            )),
            (true, None) => Err(TensorError::invalid("conv2d", "bias required but not given")),
            (false, Some(_)) => Err(TensorError::invalid("conv2d", "bias given to a bias-free conv")),
            _ => Ok(out),
        }
    }
}

#[inline]
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let last = len as isize - 1;
    let mut i = i;
    while i < 0 || i > last {
        if i < 0 {
            i = -i;
        }
        if i > last {
            i = 2 * last - i;
        }
    }
    i as usize
}

#[inline]
fn sample(plane: &[f32], h: usize, w: usize, y: isize, x: isize, mode: PadMode) -> f32 {
    match mode {
        PadMode::Zero => {
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                0.0
            } else {
                plane[y as usize * w + x as usize]
            }
        }
        PadMode::Reflect => plane[reflect_index(y, h) * w + reflect_index(x, w)],
    }
}

/// Direct nested-loop convolution. Slow; kept as the reference path.
pub fn conv2d_reference(
    input: &Tensor,
    p: &ConvParams,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    let out_shape = p.check_operands(input, weight, bias)?;
    let s = input.shape();
    let (kh, kw) = p.kernel;
    let icg = p.in_channels / p.groups;
    let ocg = p.out_channels / p.groups;
    let plane_len = s.h * s.w;
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for oc in 0..p.out_channels {
            let g = oc / ocg;
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut acc = 0.0f64;
                    for icl in 0..icg {
                        let ic = g * icg + icl;
                        let base = (n * s.c + ic) * plane_len;
                        let plane = &input.data()[base..base + plane_len];
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let y = (oy * p.stride + ky * p.dilation) as isize - p.padding as isize;
                                let x = (ox * p.stride + kx * p.dilation) as isize - p.padding as isize;
                                let v = sample(plane, s.h, s.w, y, x, p.pad_mode);
                                acc += weight.at(oc, icl, ky, kx) as f64 * v as f64;
                            }
                        }
                    }
                    if let Some(b) = bias {
                        acc += b.data()[oc] as f64;
                    }
                    out.set(n, oc, oy, ox, acc as f32);
                }
            }
        }
    }
    Ok(out)
}

const TILE_PIXELS: usize = 4096;

/// Tiled im2col convolution; output rows are split into tiles that are
/// processed in parallel, each with its own column buffer. The per-element
/// reduction order is fixed so results do not depend on thread count.
pub fn conv2d(input: &Tensor, p: &ConvParams, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let out_shape = p.check_operands(input, weight, bias)?;
    let s = input.shape();
    let (kh, kw) = p.kernel;
    let icg = p.in_channels / p.groups;
    let ocg = p.out_channels / p.groups;
    let k_len = icg * kh * kw;
    let (oh, ow) = (out_shape.h, out_shape.w);
    let rows_per_tile = (TILE_PIXELS / ow).clamp(1, oh);
    let plane_len = s.h * s.w;
    let out_plane = oh * ow;
    let wdata = weight.data();
    let bdata = bias.map(|b| b.data());

    let jobs: Vec<(usize, usize, usize)> = (0..s.n)
        .flat_map(|n| {
            (0..p.groups).flat_map(move |g| (0..oh).step_by(rows_per_tile).map(move |row| (n, g, row)))
        })
        .collect();

    let results: Vec<Vec<f32>> = jobs
        .par_iter()
        .map(|&(n, g, row0)| {
            let rows = rows_per_tile.min(oh - row0);
            let tile = rows * ow;
            let mut cols = vec![0.0f32; k_len * tile];
            for icl in 0..icg {
                let ic = g * icg + icl;
                let base = (n * s.c + ic) * plane_len;
                let plane = &input.data()[base..base + plane_len];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let k = (icl * kh + ky) * kw + kx;
                        let dst = &mut cols[k * tile..(k + 1) * tile];
                        for r in 0..rows {
                            let y = ((row0 + r) * p.stride + ky * p.dilation) as isize - p.padding as isize;
                            for ox in 0..ow {
                                let x = (ox * p.stride + kx * p.dilation) as isize - p.padding as isize;
                                dst[r * ow + ox] = sample(plane, s.h, s.w, y, x, p.pad_mode);
                            }
                        }
                    }
                }
            }
            let mut out = vec![0.0f32; ocg * tile];
            let mut acc = vec![0.0f64; tile];
            for ocl in 0..ocg {
                let oc = g * ocg + ocl;
                acc.iter_mut().for_each(|a| *a = 0.0);
                let wrow = &wdata[oc * k_len..(oc + 1) * k_len];
                for (k, &wv) in wrow.iter().enumerate() {
                    let wv = wv as f64;
                    let col = &cols[k * tile..(k + 1) * tile];
                    for (a, &c) in acc.iter_mut().zip(col) {
                        *a += wv * c as f64;
                    }
                }
                let b = bdata.map_or(0.0, |b| b[oc] as f64);
                for (o, a) in out[ocl * tile..(ocl + 1) * tile].iter_mut().zip(&acc) {
                    *o = (a + b) as f32;
                }
            }
            out
        })
        .collect();

    let mut out = Tensor::zeros(out_shape);
    let data = out.data_mut();
    for (&(n, g, row0), tile_out) in jobs.iter().zip(results) {
        let rows = rows_per_tile.min(oh - row0);
        let tile = rows * ow;
        for ocl in 0..ocg {
            let oc = g * ocg + ocl;
            let dst = (n * p.out_channels + oc) * out_plane + row0 * ow;
            data[dst..dst + tile].copy_from_slice(&tile_out[ocl * tile..(ocl + 1) * tile]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_counts_taps() {
        let input = Tensor::full(Shape::new(1, 1, 5, 5), 1.0);
        let p = ConvParams::new(1, 1, 3).no_bias();
        let w = Tensor::full(p.weight_shape(), 1.0);
        let out = conv2d(&input, &p, &w, None).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 5, 5));
        assert_eq!(out.at(0, 0, 2, 2), 9.0);
        assert_eq!(out.at(0, 0, 0, 0), 4.0);
        assert_eq!(out.at(0, 0, 0, 2), 6.0);
    }

    #[test]
    fn reflect_padding_keeps_constant() {
        let input = Tensor::full(Shape::new(1, 1, 4, 4), 1.0);
        let p = ConvParams::new(1, 1, 3).no_bias().reflect();
        let w = Tensor::full(p.weight_shape(), 1.0);
        let out = conv2d(&input, &p, &w, None).unwrap();
        assert!(out.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn reflect_index_mirrors_without_repeat() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-2, 5), 2);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(6, 5), 2);
        assert_eq!(reflect_index(-3, 2), 1);
        assert_eq!(reflect_index(4, 1), 0);
    }

    #[test]
    fn identity_pointwise() {
        let input = Tensor::from_fn(Shape::new(1, 1, 3, 4), |_, _, y, x| (y * 4 + x) as f32);
        let p = ConvParams::new(1, 1, 1);
        let w = Tensor::full(p.weight_shape(), 1.0);
        let b = Tensor::zeros(p.bias_shape());
        assert_eq!(conv2d(&input, &p, &w, Some(&b)).unwrap(), input);
    }

    #[test]
    fn shape_errors_name_the_dimension() {
        let input = Tensor::zeros(Shape::new(1, 2, 5, 5));
        let p = ConvParams::new(3, 4, 3).no_bias();
        let w = Tensor::zeros(p.weight_shape());
        let err = conv2d(&input, &p, &w, None).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");

        let p = ConvParams::new(2, 4, 3).no_bias();
        let bad_w = Tensor::zeros(Shape::new(4, 2, 3, 1));
        assert!(conv2d(&input, &p, &bad_w, None).unwrap_err().to_string().contains("weight shape"));

        let tiny = Tensor::zeros(Shape::new(1, 2, 2, 2));
        let p = ConvParams { padding: 0, ..ConvParams::new(2, 2, 3).no_bias() };
        let w = Tensor::zeros(p.weight_shape());
        assert!(matches!(conv2d(&tiny, &p, &w, None), Err(TensorError::EmptyOutput { .. })));
    }

    #[test]
    fn groups_must_divide_channels() {
        let p = ConvParams { groups: 3, ..ConvParams::new(4, 4, 3) };
        assert!(p.validate().is_err());
    }

    #[test]
    fn tiling_does_not_change_results() {
        // Forces several row tiles.
        let input = Tensor::from_fn(Shape::new(1, 2, 70, 90), |_, c, y, x| ((c * 31 + y * 7 + x * 3) % 11) as f32 - 5.0);
        let p = ConvParams::new(2, 3, 3);
        let w = Tensor::from_fn(p.weight_shape(), |o, i, y, x| ((o + 2 * i + 3 * y + x) % 5) as f32 * 0.25 - 0.5);
        let b = Tensor::from_fn(p.bias_shape(), |o, _, _, _| o as f32);
        let fast = conv2d(&input, &p, &w, Some(&b)).unwrap();
        let slow = conv2d_reference(&input, &p, &w, Some(&b)).unwrap();
        assert_eq!(fast, slow);
    }
}
