//! Dense rank-4 `f32` tensors in NCHW layout and the primitives the zoo
//! architectures are built from.
//!
//! Every fast path has a slow reference implementation next to it so tests
//! can compare the two directly.

mod activation;
mod conv;
mod resize;

pub use activation::{activation, Activation};
pub use conv::{conv2d, conv2d_reference, ConvParams, PadMode};
pub use resize::{resize, ResizeMode, ResizeSpec};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op} would produce an empty output ({detail})")]
    EmptyOutput { op: &'static str, detail: String },
    #[error("invalid argument to {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::ShapeMismatch { op, detail: detail.into() }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::InvalidArgument { op, detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// `(n, c, h, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn with_channels(self, c: usize) -> Self {
        Shape { c, ..self }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

impl std::str::FromStr for Shape {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('x').collect();
        let dims: std::result::Result<Vec<usize>, _> =
            parts.iter().map(|p| p.trim().parse::<usize>()).collect();
        match dims {
            Ok(d) if d.len() == 4 => Ok(Shape::new(d[0], d[1], d[2], d[3])),
            _ => Err(TensorError::invalid("shape", format!("expected NxCxHxW, got {s:?}"))),
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).finish_non_exhaustive()
    }
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![0.0; shape.numel()] }
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Tensor { shape, data: vec![value; shape.numel()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(TensorError::shape(
                "from_vec",
                format!("shape {shape} needs {} values, got {}", shape.numel(), data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let s = self.shape;
        ((n * s.c + c) * s.h + y) * s.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor) -> Option<f32> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max),
        )
    }

    /// Channel slice `[start, start+len)` of every batch item.
    pub fn channel_slice(&self, start: usize, len: usize) -> Result<Tensor> {
        let s = self.shape;
        if start + len > s.c {
            return Err(TensorError::shape(
                "channel_slice",
                format!("range {start}..{} exceeds {} channels", start + len, s.c),
            ));
        }
        let plane = s.h * s.w;
        let mut data = Vec::with_capacity(s.n * len * plane);
        for n in 0..s.n {
            let base = (n * s.c + start) * plane;
            data.extend_from_slice(&self.data[base..base + len * plane]);
        }
        Ok(Tensor { shape: s.with_channels(len), data })
    }
}

/// Binary elementwise operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryOp {
    Add,
    Mul,
}

impl BinaryOp {
    #[inline]
    fn apply(self, a: f32, b: f32) -> f32 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Mul => a * b,
        }
    }
}

/// Second operand of [`elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Scalar(f32),
    /// Same shape as the first operand, or `(n, c, 1, 1)` broadcast over space.
    Tensor(&'a Tensor),
}

pub fn elementwise(a: &Tensor, b: Operand<'_>, op: BinaryOp) -> Result<Tensor> {
    match b {
        Operand::Scalar(s) => Ok(a.map(|v| op.apply(v, s))),
        Operand::Tensor(b) if b.shape == a.shape => Ok(Tensor {
            shape: a.shape,
            data: a.data.iter().zip(&b.data).map(|(&x, &y)| op.apply(x, y)).collect(),
        }),
        Operand::Tensor(b) if b.shape == Shape::new(a.shape.n, a.shape.c, 1, 1) => {
            let plane = a.shape.h * a.shape.w;
            let data = a
                .data
                .chunks(plane.max(1))
                .zip(&b.data)
                .flat_map(|(chunk, &g)| chunk.iter().map(move |&x| op.apply(x, g)))
                .collect();
            Ok(Tensor { shape: a.shape, data })
        }
        Operand::Tensor(b) => Err(TensorError::shape(
            "elementwise",
            format!("operands {} and {} are not broadcast-compatible", a.shape, b.shape),
        )),
    }
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    elementwise(a, Operand::Tensor(b), BinaryOp::Add)
}

pub fn scale(a: &Tensor, s: f32) -> Tensor {
    a.map(|v| v * s)
}

/// Spatial mean per channel; `(n, c, h, w) -> (n, c, 1, 1)`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let s = input.shape;
    let plane = s.h * s.w;
    if plane == 0 {
        return Err(TensorError::shape("global_avg_pool", format!("empty spatial extent in {s}")));
    }
    let data = input
        .data
        .chunks(plane)
        .map(|ch| (ch.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32)
        .collect();
    Ok(Tensor { shape: Shape::new(s.n, s.c, 1, 1), data })
}

pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| TensorError::invalid("concat_channels", "no inputs"))?
        .shape;
    for (i, t) in inputs.iter().enumerate() {
        let s = t.shape;
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(TensorError::shape(
                "concat_channels",
                format!("input {i} has shape {s}, expected n/h/w of {first}"),
            ));
        }
    }
    let total_c: usize = inputs.iter().map(|t| t.shape.c).sum();
    let plane = first.h * first.w;
    let mut data = Vec::with_capacity(first.n * total_c * plane);
    for n in 0..first.n {
        for t in inputs {
            let len = t.shape.c * plane;
            data.extend_from_slice(&t.data[n * len..(n + 1) * len]);
        }
    }
    Ok(Tensor { shape: first.with_channels(total_c), data })
}

pub fn split_channels(input: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let total: usize = sizes.iter().sum();
    if total != input.shape.c || sizes.contains(&0) {
        return Err(TensorError::shape(
            "split_channels",
            format!("sizes {sizes:?} do not partition {} channels", input.shape.c),
        ));
    }
    let mut start = 0;
    sizes
        .iter()
        .map(|&len| {
            let t = input.channel_slice(start, len);
            start += len;
            t
        })
        .collect()
}

/// Sub-pixel rearrangement `(n, c·r², h, w) -> (n, c, r·h, r·w)`.
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let s = input.shape;
    if r == 0 || !s.c.is_multiple_of(r * r) {
        return Err(TensorError::shape(
            "pixel_shuffle",
            format!("{} channels not divisible by r²={}", s.c, r * r),
        ));
    }
    let oc = s.c / (r * r);
    let out_shape = Shape::new(s.n, oc, s.h * r, s.w * r);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..oc {
            for dy in 0..r {
                for dx in 0..r {
                    let ic = c * r * r + dy * r + dx;
                    for y in 0..s.h {
                        let src = input.index(n, ic, y, 0);
                        let dst_row = out.index(n, c, y * r + dy, 0);
                        for x in 0..s.w {
                            out.data[dst_row + x * r + dx] = input.data[src + x];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let s = input.shape;
    if r == 0 || !s.h.is_multiple_of(r) || !s.w.is_multiple_of(r) {
        return Err(TensorError::shape(
            "pixel_unshuffle",
            format!("spatial dims {}x{} not divisible by r={r}", s.h, s.w),
        ));
    }
    let out_shape = Shape::new(s.n, s.c * r * r, s.h / r, s.w / r);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..s.c {
            for dy in 0..r {
                for dx in 0..r {
                    let oc = c * r * r + dy * r + dx;
                    for y in 0..out_shape.h {
                        for x in 0..out_shape.w {
                            let v = input.at(n, c, y * r + dy, x * r + dx);
                            out.set(n, oc, y, x, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn pixel_shuffle_shape_rule() {
        let t = Tensor::zeros(Shape::new(1, 4, 2, 2));
        assert_eq!(pixel_shuffle(&t, 2).unwrap().shape(), Shape::new(1, 1, 4, 4));
    }

    #[test]
    fn pixel_shuffle_tile_pattern() {
        let t = Tensor::from_fn(Shape::new(1, 4, 3, 3), |_, c, _, _| c as f32);
        let out = pixel_shuffle(&t, 2).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                let expected = [[0.0, 1.0], [2.0, 3.0]][y % 2][x % 2];
                assert_eq!(out.at(0, 0, y, x), expected);
            }
        }
    }

    #[test]
    fn pixel_shuffle_rejects_bad_channels() {
        let t = Tensor::zeros(Shape::new(1, 6, 2, 2));
        assert!(matches!(pixel_shuffle(&t, 2), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn concat_then_split_round_trip() {
        let a = random(Shape::new(2, 16, 5, 4), 1);
        let b = random(Shape::new(2, 48, 5, 4), 2);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape().c, 64);
        assert_eq!(cat.channel_slice(0, 16).unwrap(), a);
        let parts = split_channels(&cat, &[16, 48]).unwrap();
        assert_eq!(parts, vec![a, b]);
        assert_eq!(split_channels(&cat, &[64]).unwrap(), vec![cat.clone()]);
    }

    #[test]
    fn concat_and_split_errors() {
        let a = Tensor::zeros(Shape::new(1, 2, 4, 4));
        let b = Tensor::zeros(Shape::new(1, 2, 5, 4));
        assert!(concat_channels(&[&a, &b]).is_err());
        assert!(split_channels(&a, &[1, 2]).is_err());
    }

    #[test]
    fn global_avg_pool_mean() {
        let t = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&t).unwrap().data(), &[2.5]);
        let c = Tensor::full(Shape::new(1, 3, 4, 5), 7.5);
        assert!(global_avg_pool(&c).unwrap().data().iter().all(|&v| v == 7.5));

        let r = random(Shape::new(2, 3, 7, 5), 3);
        let pooled = global_avg_pool(&r).unwrap();
        for n in 0..2 {
            for c in 0..3 {
                let mut sum = 0.0f64;
                for y in 0..7 {
                    for x in 0..5 {
                        sum += r.at(n, c, y, x) as f64;
                    }
                }
                assert!((pooled.at(n, c, 0, 0) as f64 - sum / 35.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn elementwise_identities() {
        let x = random(Shape::new(1, 3, 4, 4), 4);
        assert_eq!(elementwise(&x, Operand::Scalar(0.0), BinaryOp::Add).unwrap(), x);
        assert_eq!(elementwise(&x, Operand::Scalar(1.0), BinaryOp::Mul).unwrap(), x);
        let half = scale(&x, 0.5);
        assert!(add(&half, &half).unwrap().max_abs_diff(&x).unwrap() < 1e-6);
    }

    #[test]
    fn elementwise_matches_loop() {
        let a = random(Shape::new(2, 3, 4, 5), 5);
        let b = random(Shape::new(2, 3, 4, 5), 6);
        let sum = add(&a, &b).unwrap();
        for i in 0..a.data().len() {
            assert_eq!(sum.data()[i], a.data()[i] + b.data()[i]);
        }
        let c = Tensor::zeros(Shape::new(2, 3, 5, 4));
        assert!(add(&a, &c).is_err());
    }

    #[test]
    fn channel_broadcast_mul() {
        let a = Tensor::full(Shape::new(1, 2, 3, 3), 2.0);
        let g = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![0.5, 0.0]).unwrap();
        let out = elementwise(&a, Operand::Tensor(&g), BinaryOp::Mul).unwrap();
        assert!(out.channel_slice(0, 1).unwrap().data().iter().all(|&v| v == 1.0));
        assert!(out.channel_slice(1, 1).unwrap().data().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn pixel_shuffle_round_trip_is_bitwise(
            c in 1usize..4, h in 1usize..6, w in 1usize..6, r in 1usize..4, seed in any::<u64>()
        ) {
            let x = random(Shape::new(1, c * r * r, h, w), seed);
            let back = pixel_unshuffle(&pixel_shuffle(&x, r).unwrap(), r).unwrap();
            prop_assert_eq!(back, x);
        }
    }
}
