//! Separable resampling with `imresize`-style contributions: pixel-center
//! alignment, symmetric boundary extension, per-output weight normalization
//! and kernel widening when downscaling with antialiasing.

use serde::{Deserialize, Serialize};

use super::{Result, Shape, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeMode {
    Bilinear,
    Bicubic,
}

impl ResizeMode {
    fn support(self) -> f64 {
        match self {
            ResizeMode::Bilinear => 2.0,
            ResizeMode::Bicubic => 4.0,
        }
    }

    fn kernel(self, x: f64) -> f64 {
        let ax = x.abs();
        match self {
            ResizeMode::Bilinear => (1.0 - ax).max(0.0),
            // a = -0.5
            ResizeMode::Bicubic => {
                if ax <= 1.0 {
                    1.5 * ax * ax * ax - 2.5 * ax * ax + 1.0
                } else if ax <= 2.0 {
                    -0.5 * ax * ax * ax + 2.5 * ax * ax - 4.0 * ax + 2.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResizeSpec {
    pub scale: f64,
    pub mode: ResizeMode,
    pub antialias: bool,
    #[serde(default)]
    pub align_corners: bool,
}

impl ResizeSpec {
    pub fn new(scale: f64, mode: ResizeMode) -> Self {
        ResizeSpec { scale, mode, antialias: true, align_corners: false }
    }

    pub fn bilinear(scale: f64) -> Self {
        ResizeSpec::new(scale, ResizeMode::Bilinear)
    }

    pub fn bicubic(scale: f64) -> Self {
        ResizeSpec::new(scale, ResizeMode::Bicubic)
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(TensorError::invalid("resize", format!("scale {} must be positive", self.scale)));
        }
        let out = (len as f64 * self.scale - 1e-9).ceil();
        if out < 1.0 {
            return Err(TensorError::EmptyOutput {
                op: "resize",
                detail: format!("length {len} at scale {} has no output pixels", self.scale),
            });
        }
        Ok(out as usize)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        Ok(Shape::new(input.n, input.c, self.output_len(input.h)?, self.output_len(input.w)?))
    }
}

/// Sparse resampling matrix for one axis: for each output index, the
/// `(input index, weight)` taps, weights summing to one.
#[derive(Debug, Clone)]
struct Contributions {
    taps: Vec<Vec<(usize, f64)>>,
}

fn mirror(j: i64, len: usize) -> usize {
    let period = 2 * len as i64;
    let m = j.rem_euclid(period);
    if m >= len as i64 {
        (period - 1 - m) as usize
    } else {
        m as usize
    }
}

fn contributions(in_len: usize, out_len: usize, spec: &ResizeSpec) -> Contributions {
    let scale = out_len as f64 / in_len as f64;
    let scale = if (scale - spec.scale).abs() < 1e-9 { spec.scale } else { scale };
    let widen = spec.antialias && scale < 1.0 && !spec.align_corners;
    let (kscale, width) = if widen {
        (scale, spec.mode.support() / scale)
    } else {
        (1.0, spec.mode.support())
    };
    let taps = (0..out_len)
        .map(|u| {
            let center = if spec.align_corners {
                if out_len > 1 {
                    u as f64 * (in_len as f64 - 1.0) / (out_len as f64 - 1.0)
                } else {
                    0.0
                }
            } else {
                (u as f64 + 0.5) / scale - 0.5
            };
            let first = (center - width / 2.0).floor() as i64;
            let last = (center + width / 2.0).ceil() as i64;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity((last - first + 1) as usize);
            for j in first..=last {
                let w = kscale * spec.mode.kernel(kscale * (center - j as f64));
                if w != 0.0 {
                    let idx = mirror(j, in_len);
                    match row.iter_mut().find(|(i, _)| *i == idx) {
                        Some(entry) => entry.1 += w,
                        None => row.push((idx, w)),
                    }
                }
            }
            let total: f64 = row.iter().map(|(_, w)| w).sum();
            row.iter_mut().for_each(|(_, w)| *w /= total);
            row
        })
        .collect();
    Contributions { taps }
}

pub fn resize(input: &Tensor, spec: &ResizeSpec) -> Result<Tensor> {
    let s = input.shape();
    let out_shape = spec.output_shape(s)?;
    if s.h == 0 || s.w == 0 {
        return Err(TensorError::shape("resize", format!("empty input {s}")));
    }
    let cw = contributions(s.w, out_shape.w, spec);
    let ch = contributions(s.h, out_shape.h, spec);

    // width pass
    let mut mid = vec![0.0f64; s.n * s.c * s.h * out_shape.w];
    for (plane_idx, plane) in input.data().chunks(s.h * s.w).enumerate() {
        for y in 0..s.h {
            let row = &plane[y * s.w..(y + 1) * s.w];
            let dst = &mut mid[(plane_idx * s.h + y) * out_shape.w..][..out_shape.w];
            for (d, taps) in dst.iter_mut().zip(&cw.taps) {
                *d = taps.iter().map(|&(i, w)| w * row[i] as f64).sum();
            }
        }
    }

    // height pass
    let mut out = Tensor::zeros(out_shape);
    let ow = out_shape.w;
    for (plane_idx, dst_plane) in out.data_mut().chunks_mut(out_shape.h * ow).enumerate() {
        let src_plane = &mid[plane_idx * s.h * ow..(plane_idx + 1) * s.h * ow];
        for (oy, taps) in ch.taps.iter().enumerate() {
            for ox in 0..ow {
                let v: f64 = taps.iter().map(|&(i, w)| w * src_plane[i * ow + ox]).sum();
                dst_plane[oy * ow + ox] = v as f32;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_row(values: &[f32]) -> Tensor {
        Tensor::from_vec(Shape::new(1, 1, 1, values.len()), values.to_vec()).unwrap()
    }

    /// Independent pixel-center bilinear interpolation with edge clamping.
    fn bilinear_oracle(values: &[f32], scale: usize) -> Vec<f64> {
        let n = values.len();
        (0..n * scale)
            .map(|u| {
                let src = ((u as f64 + 0.5) / scale as f64 - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(n - 1);
                let i1 = (i0 + 1).min(n - 1);
                let t = src - i0 as f64;
                values[i0] as f64 * (1.0 - t) + values[i1] as f64 * t
            })
            .collect()
    }

    #[test]
    fn constant_is_preserved() {
        let t = Tensor::full(Shape::new(1, 2, 9, 7), 7.0);
        for mode in [ResizeMode::Bilinear, ResizeMode::Bicubic] {
            for scale in [0.25, 0.5, 1.0, 2.0, 3.0, 4.0] {
                let out = resize(&t, &ResizeSpec::new(scale, mode)).unwrap();
                assert!(out.data().iter().all(|&v| (v - 7.0).abs() < 1e-5), "{mode:?} {scale}");
            }
        }
    }

    #[test]
    fn bilinear_ramp_matches_oracle() {
        let values = [0.0, 1.0, 2.0, 3.0];
        let out = resize(&ramp_row(&values), &ResizeSpec::bilinear(2.0)).unwrap();
        let oracle = bilinear_oracle(&values, 2);
        assert_eq!(out.shape().w, 8);
        for (a, b) in out.data().iter().zip(&oracle) {
            assert!((*a as f64 - b).abs() < 1e-5, "{a} vs {b}");
        }
        // interior of a linear ramp stays linear
        assert!((out.data()[3] - 1.25).abs() < 1e-6);
    }

    #[test]
    fn align_corners_hits_endpoints() {
        let spec = ResizeSpec { align_corners: true, ..ResizeSpec::bilinear(2.0) };
        let out = resize(&ramp_row(&[0.0, 1.0, 2.0, 3.0]), &spec).unwrap();
        assert_eq!(out.data()[0], 0.0);
        assert!((out.data()[7] - 3.0).abs() < 1e-6);
        assert!((out.data()[1] - 3.0 / 7.0).abs() < 1e-6);
    }

    #[test]
    fn unit_scale_is_identity() {
        let t = Tensor::from_fn(Shape::new(1, 3, 6, 5), |_, c, y, x| ((c * 13 + y * 5 + x * 7) % 17) as f32);
        for mode in [ResizeMode::Bilinear, ResizeMode::Bicubic] {
            let out = resize(&t, &ResizeSpec::new(1.0, mode)).unwrap();
            assert!(out.max_abs_diff(&t).unwrap() < 1e-6);
        }
    }

    #[test]
    fn antialiased_quarter_of_periodic_image_is_its_mean() {
        // rows/cols follow a b b a so the symmetric extension stays periodic
        let pattern = [[10.0, 200.0, 200.0, 10.0], [60.0, 0.0, 0.0, 60.0], [60.0, 0.0, 0.0, 60.0], [10.0, 200.0, 200.0, 10.0]];
        let t = Tensor::from_fn(Shape::new(1, 1, 32, 32), |_, _, y, x| pattern[y % 4][x % 4]);
        let mean: f64 = pattern.iter().flatten().map(|&v| v as f64).sum::<f64>() / 16.0;
        let out = resize(&t, &ResizeSpec::bicubic(0.25)).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 8, 8));
        for &v in out.data() {
            assert!((v as f64 - mean).abs() < 1e-3, "{v} vs {mean}");
        }
    }

    #[test]
    fn rejects_bad_scale() {
        let t = Tensor::zeros(Shape::new(1, 1, 4, 4));
        assert!(resize(&t, &ResizeSpec::bilinear(0.0)).is_err());
        assert!(resize(&t, &ResizeSpec::bilinear(-2.0)).is_err());
        assert!(resize(&t, &ResizeSpec::bilinear(f64::NAN)).is_err());
    }

    #[test]
    fn mirror_repeats_edge() {
        assert_eq!(mirror(-1, 4), 0);
        assert_eq!(mirror(-2, 4), 1);
        assert_eq!(mirror(4, 4), 3);
        assert_eq!(mirror(5, 4), 2);
    }
}
