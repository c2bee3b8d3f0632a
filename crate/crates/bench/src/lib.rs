//! Deterministic inputs shared by the benchmarks.

use srzoo::tensor::ConvParams;
use srzoo::{Shape, Tensor};

/// Smooth pattern in `[0, 1)`, cheap to generate and free of RNG state.
pub fn pattern(shape: Shape) -> Tensor {
    Tensor::from_fn(shape, |n, c, y, x| ((n * 13 + c * 7 + y * 5 + x * 3) % 29) as f32 / 29.0)
}

/// A body convolution of the baseline model (64 -> 64, 3x3) with its
/// input, weight and bias at `size x size`.
pub fn body_conv(size: usize) -> (ConvParams, Tensor, Tensor, Tensor) {
    let p = ConvParams::new(64, 64, 3);
    let x = pattern(Shape::new(1, 64, size, size));
    let w = pattern(p.weight_shape()).map(|v| v - 0.5);
    let b = pattern(p.bias_shape());
    (p, x, w, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use srzoo::tensor::{conv2d, conv2d_reference};

    #[test]
    fn fast_and_reference_agree_on_bench_input() {
        let (p, x, w, b) = body_conv(9);
        let fast = conv2d(&x, &p, &w, Some(&b)).unwrap();
        let slow = conv2d_reference(&x, &p, &w, Some(&b)).unwrap();
        assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-5);
    }
}
