use super::{Graph, IrError, LayerKind, Result, WeightStore};
use crate::tensor::{self, BinaryOp, Operand, Tensor};

fn run_node(graph: &Graph, store: &WeightStore, id: &str, kind: &LayerKind, ins: &[&Tensor]) -> Result<Tensor> {
    let wrap = |e| IrError::tensor(id, e);
    let slot = |suffix: &str| store.get(&graph.slot_name(id, suffix));
    let out = match kind {
        LayerKind::Input { .. } => unreachable!("input handled by caller"),
        LayerKind::Conv(p) => {
            let w = slot("weight")?;
            let b = if p.has_bias { Some(slot("bias")?) } else { None };
            tensor::conv2d(ins[0], p, w, b).map_err(wrap)?
        }
        LayerKind::Activation(a) => tensor::activation(ins[0], *a).map_err(wrap)?,
        LayerKind::PixelShuffle { r } => tensor::pixel_shuffle(ins[0], *r).map_err(wrap)?,
        LayerKind::Resize(spec) => tensor::resize(ins[0], spec).map_err(wrap)?,
        LayerKind::GlobalAvgPool => tensor::global_avg_pool(ins[0]).map_err(wrap)?,
        LayerKind::Concat => tensor::concat_channels(ins).map_err(wrap)?,
        LayerKind::Split { sizes, part } => {
            let start: usize = sizes[..*part].iter().sum();
            if sizes.iter().sum::<usize>() != ins[0].shape().c {
                return Err(IrError::invalid(id, format!("split sizes {sizes:?} do not match {} channels", ins[0].shape().c)));
            }
            ins[0].channel_slice(start, sizes[*part]).map_err(wrap)?
        }
        LayerKind::Add => {
            let mut acc = ins[0].clone();
            for other in &ins[1..] {
                acc = tensor::add(&acc, other).map_err(wrap)?;
            }
            acc
        }
        LayerKind::Mul => tensor::elementwise(ins[0], Operand::Tensor(ins[1]), BinaryOp::Mul).map_err(wrap)?,
        LayerKind::Scale { learnable, init } => {
            let s = if *learnable { slot("scale")?.data()[0] } else { *init };
            tensor::scale(ins[0], s)
        }
        LayerKind::Dense { in_features, out_features, has_bias } => {
            let x = ins[0];
            let s = x.shape();
            if s.h != 1 || s.w != 1 || s.c != *in_features {
                return Err(IrError::invalid(id, format!("dense expects (n, {in_features}, 1, 1), got {s}")));
            }
            let w = slot("weight")?;
            let b = if *has_bias { Some(slot("bias")?) } else { None };
            let mut out = Tensor::zeros(tensor::Shape::new(s.n, *out_features, 1, 1));
            for n in 0..s.n {
                for o in 0..*out_features {
                    let mut acc = b.map_or(0.0f64, |b| b.data()[o] as f64);
                    for i in 0..*in_features {
                        acc += w.data()[o * in_features + i] as f64 * x.data()[n * in_features + i] as f64;
                    }
                    out.set(n, o, 0, 0, acc as f32);
                }
            }
            out
        }
    };
    Ok(out)
}

/// Executes `graph` on `input` in topological order. Intermediate maps are
/// dropped after their last reader.
pub fn forward(graph: &Graph, store: &WeightStore, input: &Tensor) -> Result<Tensor> {
    let nodes = graph.nodes();
    let mut last_use = vec![0usize; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for inp in &n.inputs {
            last_use[graph.position(inp).expect("validated reference")] = i;
        }
    }
    let out_pos = graph.position(graph.output()).expect("validated output");
    last_use[out_pos] = usize::MAX;

    let mut values: Vec<Option<Tensor>> = vec![None; nodes.len()];
    for (i, node) in nodes.iter().enumerate() {
        let out = if let LayerKind::Input { channels } = node.kind {
            if input.shape().c != channels {
                return Err(IrError::invalid(
                    &node.id,
                    format!("input has {} channels, graph expects {channels}", input.shape().c),
                ));
            }
            input.clone()
        } else {
            let ins: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|id| values[graph.position(id).expect("validated")].as_ref().expect("computed before use"))
                .collect();
            run_node(graph, store, &node.id, &node.kind, &ins)?
        };
        values[i] = Some(out);
        for inp in &node.inputs {
            let p = graph.position(inp).expect("validated");
            if last_use[p] == i {
                values[p] = None;
            }
        }
    }
    Ok(values[out_pos].take().expect("output computed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{init_weights, GraphBuilder, InitScheme};
    use crate::tensor::{ConvParams, Shape};

    #[test]
    fn identity_pointwise_graph() {
        let mut b = GraphBuilder::new("id");
        let x = b.input(1);
        let c = b.conv("c", &x, ConvParams::new(1, 1, 1));
        let g = b.finish(&c).unwrap();
        let store = init_weights(&g, 0, InitScheme::Constant(1.0));
        let mut store = store;
        store.slots.insert("c.bias".into(), Tensor::zeros(Shape::new(1, 1, 1, 1)));
        let input = Tensor::from_fn(Shape::new(1, 1, 4, 4), |_, _, y, x| (y * 4 + x) as f32);
        assert_eq!(forward(&g, &store, &input).unwrap(), input);
    }

    #[test]
    fn squeeze_excitation_with_zero_dense_halves() {
        let mut b = GraphBuilder::new("se");
        let x = b.input(4);
        let p = b.add("pool", LayerKind::GlobalAvgPool, &[&x]);
        let d1 = b.add("fc1", LayerKind::Dense { in_features: 4, out_features: 2, has_bias: true }, &[&p]);
        let d2 = b.add("fc2", LayerKind::Dense { in_features: 2, out_features: 4, has_bias: true }, &[&d1]);
        let s = b.act("sig", &d2, crate::tensor::Activation::Sigmoid);
        let m = b.add("gate", LayerKind::Mul, &[&x, &s]);
        let g = b.finish(&m).unwrap();
        let store = init_weights(&g, 0, InitScheme::Constant(0.0));
        let input = Tensor::from_fn(Shape::new(2, 4, 3, 3), |n, c, y, x| (n + c + y + x) as f32);
        let out = forward(&g, &store, &input).unwrap();
        assert!(out.max_abs_diff(&tensor::scale(&input, 0.5)).unwrap() < 1e-6);
    }

    #[test]
    fn missing_slot_is_an_error() {
        let mut b = GraphBuilder::new("m");
        let x = b.input(1);
        let c = b.conv("c", &x, ConvParams::new(1, 1, 3));
        let g = b.finish(&c).unwrap();
        let mut store = init_weights(&g, 0, InitScheme::KaimingUniform);
        store.slots.remove("c.weight");
        let err = forward(&g, &store, &Tensor::zeros(Shape::new(1, 1, 4, 4))).unwrap_err();
        assert!(matches!(err, IrError::MissingSlot(_)));
    }
}
