use super::{Graph, IrError, LayerKind, Result};
use crate::tensor::{Shape, TensorError};

/// Output shape of every node, aligned with [`Graph::nodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Shapes {
    ids: Vec<String>,
    shapes: Vec<Shape>,
}

impl Shapes {
    pub fn get(&self, id: &str) -> Option<Shape> {
        self.ids.iter().position(|i| i == id).map(|p| self.shapes[p])
    }

    pub fn at(&self, index: usize) -> Shape {
        self.shapes[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Shape)> {
        self.ids.iter().map(String::as_str).zip(self.shapes.iter().copied())
    }
}

pub(crate) fn node_output_shape(kind: &LayerKind, inputs: &[Shape], input_shape: Shape) -> std::result::Result<Shape, String> {
    let first = inputs.first().copied();
    let err = |e: TensorError| e.to_string();
    match kind {
        LayerKind::Input { channels } => {
            if input_shape.c != *channels {
                return Err(format!("input has {} channels, graph expects {channels}", input_shape.c));
            }
            Ok(input_shape)
        }
        LayerKind::Conv(p) => p.output_shape(first.unwrap()).map_err(err),
        LayerKind::Activation(_) | LayerKind::Scale { .. } => Ok(first.unwrap()),
        LayerKind::PixelShuffle { r } => {
            let s = first.unwrap();
            if *r == 0 || s.c % (r * r) != 0 {
                return Err(format!("{} channels not divisible by r²={}", s.c, r * r));
            }
            Ok(Shape::new(s.n, s.c / (r * r), s.h * r, s.w * r))
        }
        LayerKind::Resize(spec) => spec.output_shape(first.unwrap()).map_err(err),
        LayerKind::GlobalAvgPool => {
            let s = first.unwrap();
            Ok(Shape::new(s.n, s.c, 1, 1))
        }
        LayerKind::Concat => {
            let f = first.unwrap();
            let mut c = 0;
            for (i, s) in inputs.iter().enumerate() {
                if (s.n, s.h, s.w) != (f.n, f.h, f.w) {
                    return Err(format!("concat input {i} has shape {s}, expected n/h/w of {f}"));
                }
                c += s.c;
            }
            Ok(f.with_channels(c))
        }
        LayerKind::Split { sizes, part } => {
            let s = first.unwrap();
            if sizes.iter().sum::<usize>() != s.c || sizes.contains(&0) {
                return Err(format!("split sizes {sizes:?} do not partition {} channels", s.c));
            }
            let size = sizes.get(*part).ok_or_else(|| format!("split part {part} out of range"))?;
            Ok(s.with_channels(*size))
        }
        LayerKind::Add => {
            let f = first.unwrap();
            if let Some(bad) = inputs.iter().find(|s| **s != f) {
                return Err(format!("add operands {f} and {bad} differ"));
            }
            Ok(f)
        }
        LayerKind::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            if b == a || b == Shape::new(a.n, a.c, 1, 1) {
                Ok(a)
            } else {
                Err(format!("mul operands {a} and {b} are not broadcast-compatible"))
            }
        }
        LayerKind::Dense { in_features, out_features, .. } => {
            let s = first.unwrap();
            if s.h != 1 || s.w != 1 || s.c != *in_features {
                return Err(format!("dense expects (n, {in_features}, 1, 1), got {s}"));
            }
            Ok(Shape::new(s.n, *out_features, 1, 1))
        }
    }
}

/// Infers every node's shape for `input_shape`; the error names the first
/// inconsistent node.
pub fn validate_and_infer_shapes(graph: &Graph, input_shape: Shape) -> Result<Shapes> {
    let mut shapes: Vec<Shape> = Vec::with_capacity(graph.nodes().len());
    for node in graph.nodes() {
        let ins: Vec<Shape> = node
            .inputs
            .iter()
            .map(|i| shapes[graph.position(i).expect("validated reference")])
            .collect();
        let out = node_output_shape(&node.kind, &ins, input_shape)
            .map_err(|detail| IrError::invalid(&node.id, detail))?;
        if out.numel() == 0 {
            return Err(IrError::invalid(&node.id, format!("empty output shape {out}")));
        }
        shapes.push(out);
    }
    Ok(Shapes { ids: graph.nodes().iter().map(|n| n.id.clone()).collect(), shapes })
}
