use std::fmt;

use serde::{Deserialize, Serialize};

use super::{validate_and_infer_shapes, Graph, LayerKind, Result};
use crate::tensor::{ResizeMode, Shape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCount {
    pub tag: String,
    pub count: u64,
    pub percent: f64,
}

/// A total with its split over block tags (in order of first appearance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub total: u64,
    pub per_block: Vec<BlockCount>,
}

impl Breakdown {
    fn from_counts(counts: Vec<(String, u64)>) -> Self {
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        let per_block = counts
            .into_iter()
            .map(|(tag, count)| BlockCount {
                percent: if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 },
                tag,
                count,
            })
            .collect();
        Breakdown { total, per_block }
    }

    pub fn count(&self, tag: &str) -> u64 {
        self.per_block.iter().find(|b| b.tag == tag).map_or(0, |b| b.count)
    }

    /// Share of `tag` in percent; 0 for unknown tags.
    pub fn percent(&self, tag: &str) -> f64 {
        self.per_block.iter().find(|b| b.tag == tag).map_or(0.0, |b| b.percent)
    }
}

fn tally(graph: &Graph, mut per_node: impl FnMut(usize) -> u64) -> Breakdown {
    let mut counts: Vec<(String, u64)> = graph
        .block_tags()
        .into_iter()
        .filter(|t| t != "Input")
        .map(|t| (t, 0))
        .collect();
    for (i, node) in graph.nodes().iter().enumerate() {
        let c = per_node(i);
        if let Some(entry) = counts.iter_mut().find(|(t, _)| *t == node.block_tag) {
            entry.1 += c;
        }
    }
    Breakdown::from_counts(counts)
}

/// Parameters per slot, each shared slot counted once, attributed to the
/// owning node's block. Biases and learnable scales are included.
pub fn count_params(graph: &Graph) -> Breakdown {
    tally(graph, |i| {
        let node = &graph.nodes()[i];
        if graph.slot_owner(&node.id) != node.id {
            return 0;
        }
        node.kind.param_shapes().iter().map(|(_, s)| s.numel() as u64).sum()
    })
}

/// Multiply-accumulates of conv and dense layers for `input_shape`; biases,
/// activations and elementwise ops are not counted, weight sharing does not
/// reduce the count.
pub fn count_macs(graph: &Graph, input_shape: Shape) -> Result<Breakdown> {
    let shapes = validate_and_infer_shapes(graph, input_shape)?;
    Ok(tally(graph, |i| match graph.nodes()[i].kind {
        LayerKind::Conv(p) => {
            let out = shapes.at(i);
            (p.kernel.0 * p.kernel.1 * (p.in_channels / p.groups)) as u64
                * (out.c * out.h * out.w * out.n) as u64
        }
        LayerKind::Dense { in_features, out_features, .. } => {
            (in_features * out_features * shapes.at(i).n) as u64
        }
        _ => 0,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceptiveField {
    /// Side length in input pixels.
    Finite(u64),
    /// Depends on the whole image (global pooling on some path).
    Global,
}

impl ReceptiveField {
    pub fn finite(self) -> Option<u64> {
        match self {
            ReceptiveField::Finite(v) => Some(v),
            ReceptiveField::Global => None,
        }
    }
}

impl fmt::Display for ReceptiveField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReceptiveField::Finite(v) => write!(f, "{v}"),
            ReceptiveField::Global => f.write_str("global"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Field {
    /// Extent in input pixels.
    size: f64,
    /// Input pixels per step at this node's resolution.
    jump: f64,
    global: bool,
}

/// Receptive field of the output with respect to the input, maximized over
/// all paths. Convolutions grow the field by `(effective kernel - 1)` steps,
/// pixel shuffle and resizing change the step size, resizing also adds its
/// interpolation taps.
pub fn receptive_field(graph: &Graph) -> ReceptiveField {
    let mut fields: Vec<Field> = Vec::with_capacity(graph.nodes().len());
    for node in graph.nodes() {
        let ins: Vec<Field> = node
            .inputs
            .iter()
            .map(|i| fields[graph.position(i).expect("validated reference")])
            .collect();
        let merged = ins.iter().copied().reduce(|a, b| Field {
            size: a.size.max(b.size),
            jump: if a.global { b.jump } else { a.jump },
            global: a.global || b.global,
        });
        let f = match &node.kind {
            LayerKind::Input { .. } => Field { size: 1.0, jump: 1.0, global: false },
            LayerKind::Conv(p) => {
                let f = merged.unwrap();
                let k = p.kernel.0.max(p.kernel.1);
                let span = (p.dilation * (k - 1)) as f64;
                Field { size: f.size + span * f.jump, jump: f.jump * p.stride as f64, global: f.global }
            }
            LayerKind::PixelShuffle { r } => {
                let f = merged.unwrap();
                Field { jump: f.jump / *r as f64, ..f }
            }
            LayerKind::Resize(spec) => {
                let f = merged.unwrap();
                let support = match spec.mode {
                    ResizeMode::Bilinear => 2.0,
                    ResizeMode::Bicubic => 4.0,
                };
                let taps = if spec.scale < 1.0 && spec.antialias { support / spec.scale } else { support };
                Field { size: f.size + (taps - 1.0) * f.jump, jump: f.jump / spec.scale, global: f.global }
            }
            LayerKind::GlobalAvgPool => Field { global: true, ..merged.unwrap() },
            _ => merged.unwrap(),
        };
        fields.push(f);
    }
    let out = fields[graph.position(graph.output()).expect("validated output")];
    if out.global {
        ReceptiveField::Global
    } else {
        ReceptiveField::Finite((out.size - 1e-9).ceil() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::GraphBuilder;
    use crate::tensor::{Activation, ConvParams, ResizeSpec};

    fn stacked(dilations: &[usize]) -> Graph {
        let mut b = GraphBuilder::new("stack");
        let mut x = b.input(1);
        for (i, &d) in dilations.iter().enumerate() {
            x = b.conv(&format!("c{i}"), &x, ConvParams::new(1, 1, 3).dilated(d));
        }
        b.finish(&x).unwrap()
    }

    #[test]
    fn single_conv_params() {
        let mut b = GraphBuilder::new("one");
        let x = b.input(3);
        let c = b.conv("c", &x, ConvParams::new(3, 64, 3));
        let g = b.finish(&c).unwrap();
        assert_eq!(count_params(&g).total, 3 * 64 * 9 + 64);
    }

    #[test]
    fn depthwise_separable_params() {
        let mut b = GraphBuilder::new("dws");
        let x = b.input(64);
        let dw = b.conv("dw", &x, ConvParams::depthwise(64, 3));
        let pw = b.conv("pw", &dw, ConvParams::new(64, 64, 1));
        let g = b.finish(&pw).unwrap();
        assert_eq!(count_params(&g).total, 64 * 9 + 64 + 64 * 64 + 64);
    }

    #[test]
    fn pointwise_macs() {
        let mut b = GraphBuilder::new("pw");
        let x = b.input(64);
        let c = b.conv("c", &x, ConvParams::new(64, 64, 1));
        let g = b.finish(&c).unwrap();
        assert_eq!(count_macs(&g, Shape::new(1, 64, 10, 10)).unwrap().total, 409_600);
        assert_eq!(count_macs(&g, Shape::new(1, 64, 20, 10)).unwrap().total, 819_200);
    }

    #[test]
    fn sharing_reduces_params_not_macs() {
        let build = |share: bool| {
            let mut b = GraphBuilder::new("s");
            let x = b.input(8);
            let a = b.conv("a", &x, ConvParams::new(8, 8, 3));
            let r = b.act("r", &a, Activation::Relu);
            let c = b.conv("c", &r, ConvParams::new(8, 8, 3));
            let d = b.conv("d", &c, ConvParams::new(8, 8, 3));
            if share {
                b.share(vec![a, c, d.clone()]);
            }
            b.finish(&d).unwrap()
        };
        let slot = (8 * 8 * 9 + 8) as u64;
        let (plain, shared) = (build(false), build(true));
        assert_eq!(count_params(&shared).total, count_params(&plain).total - 2 * slot);
        let s = Shape::new(1, 8, 6, 6);
        assert_eq!(count_macs(&shared, s).unwrap(), count_macs(&plain, s).unwrap());
    }

    #[test]
    fn receptive_field_of_stacks() {
        assert_eq!(receptive_field(&stacked(&[1])), ReceptiveField::Finite(3));
        assert_eq!(receptive_field(&stacked(&[1, 1])), ReceptiveField::Finite(5));
        assert_eq!(receptive_field(&stacked(&[2])), ReceptiveField::Finite(5));
        assert_eq!(receptive_field(&stacked(&[2, 2])), ReceptiveField::Finite(9));
    }

    #[test]
    fn receptive_field_through_upsampling() {
        let mut b = GraphBuilder::new("up");
        let x = b.input(4);
        let up = b.pixel_shuffle("ps", &x, 2);
        let c = b.conv("c", &up, ConvParams::new(1, 1, 3));
        let g = b.finish(&c).unwrap();
        assert_eq!(receptive_field(&g), ReceptiveField::Finite(2));

        let mut b = GraphBuilder::new("skip");
        let x = b.input(1);
        let r = b.add("r", LayerKind::Resize(ResizeSpec::bilinear(4.0)), &[&x]);
        let g = b.finish(&r).unwrap();
        assert_eq!(receptive_field(&g), ReceptiveField::Finite(2));
    }

    #[test]
    fn global_pool_makes_field_global() {
        let mut b = GraphBuilder::new("se");
        let x = b.input(4);
        let p = b.add("pool", LayerKind::GlobalAvgPool, &[&x]);
        let m = b.add("gate", LayerKind::Mul, &[&x, &p]);
        let g = b.finish(&m).unwrap();
        assert_eq!(receptive_field(&g), ReceptiveField::Global);
    }

    #[test]
    fn shares_sum_to_hundred() {
        let mut b = GraphBuilder::new("tags");
        let x = b.input(3);
        b.set_tag("A");
        let a = b.conv("a", &x, ConvParams::new(3, 5, 3));
        b.set_tag("B");
        let c = b.conv("c", &a, ConvParams::new(5, 7, 1));
        let g = b.finish(&c).unwrap();
        let p = count_params(&g);
        let m = count_macs(&g, Shape::new(1, 3, 9, 9)).unwrap();
        for bd in [p, m] {
            let s: f64 = bd.per_block.iter().map(|b| b.percent).sum();
            assert!((s - 100.0).abs() < 1e-9);
        }
    }
}
