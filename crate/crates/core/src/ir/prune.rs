use super::{Graph, IrError, LayerKind, Result, WeightStore};
use crate::tensor::{ConvParams, Shape, Tensor};

fn not_prunable(node: &str, detail: impl Into<String>) -> IrError {
    IrError::NotPrunable { node: node.to_string(), detail: detail.into() }
}

fn in_shared_group(graph: &Graph, id: &str) -> bool {
    graph.shared_groups().iter().any(|g| g.iter().any(|m| m == id))
}

/// Convs whose input channels read the pruned conv's output, found by
/// walking through channel-preserving per-element nodes.
fn downstream_convs(graph: &Graph, conv_id: &str) -> Result<Vec<String>> {
    let mut frontier = vec![conv_id.to_string()];
    let mut convs = Vec::new();
    while let Some(id) = frontier.pop() {
        if id == graph.output() {
            return Err(not_prunable(&id, "feeds the graph output"));
        }
        let consumers = graph.consumers(&id);
        if consumers.is_empty() {
            return Err(not_prunable(&id, "has no consumers"));
        }
        for c in consumers {
            match &c.kind {
                LayerKind::Activation(_) | LayerKind::Scale { .. } => frontier.push(c.id.clone()),
                LayerKind::Conv(p) if p.groups == 1 && c.inputs.len() == 1 => {
                    if in_shared_group(graph, &c.id) {
                        return Err(not_prunable(&c.id, "consumer conv shares weights"));
                    }
                    if !convs.contains(&c.id) {
                        convs.push(c.id.clone());
                    }
                }
                LayerKind::Conv(_) => return Err(not_prunable(&c.id, "grouped consumer conv")),
                other => {
                    return Err(not_prunable(
                        &c.id,
                        format!("{} consumer needs every channel", other.name()),
                    ))
                }
            }
        }
    }
    Ok(convs)
}

fn select_rows(t: &Tensor, keep: &[usize]) -> Tensor {
    let s = t.shape();
    let per = s.c * s.h * s.w;
    let mut data = Vec::with_capacity(keep.len() * per);
    for &k in keep {
        data.extend_from_slice(&t.data()[k * per..(k + 1) * per]);
    }
    Tensor::from_vec(Shape::new(keep.len(), s.c, s.h, s.w), data).expect("consistent size")
}

fn select_cols(t: &Tensor, keep: &[usize]) -> Tensor {
    let s = t.shape();
    let plane = s.h * s.w;
    let mut data = Vec::with_capacity(s.n * keep.len() * plane);
    for n in 0..s.n {
        for &k in keep {
            let base = (n * s.c + k) * plane;
            data.extend_from_slice(&t.data()[base..base + plane]);
        }
    }
    Tensor::from_vec(Shape::new(s.n, keep.len(), s.h, s.w), data).expect("consistent size")
}

/// Removes the output channels of `conv_id` where `keep_mask` is false and
/// narrows every downstream conv's input channels to match.
pub fn prune_channels(
    graph: &Graph,
    store: &WeightStore,
    conv_id: &str,
    keep_mask: &[bool],
) -> Result<(Graph, WeightStore)> {
    store.check_against(graph)?;
    let node = graph.node(conv_id).ok_or_else(|| not_prunable(conv_id, "no such node"))?;
    let LayerKind::Conv(params) = node.kind else {
        return Err(not_prunable(conv_id, format!("is a {} node, not a conv", node.kind.name())));
    };
    if params.groups != 1 {
        return Err(not_prunable(conv_id, "grouped convs cannot be pruned"));
    }
    if in_shared_group(graph, conv_id) {
        return Err(not_prunable(conv_id, "conv shares weights"));
    }
    if keep_mask.len() != params.out_channels {
        return Err(not_prunable(
            conv_id,
            format!("mask has {} entries for {} channels", keep_mask.len(), params.out_channels),
        ));
    }
    let keep: Vec<usize> = keep_mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
    if keep.is_empty() {
        return Err(not_prunable(conv_id, "mask keeps no channel"));
    }
    if keep.len() == params.out_channels {
        return Ok((graph.clone(), store.clone()));
    }
    let consumers = downstream_convs(graph, conv_id)?;

    let mut nodes = graph.nodes().to_vec();
    let mut slots = store.slots.clone();
    for n in nodes.iter_mut() {
        if n.id == conv_id {
            n.kind = LayerKind::Conv(ConvParams { out_channels: keep.len(), ..params });
            let w = format!("{conv_id}.weight");
            slots.insert(w.clone(), select_rows(&store.slots[&w], &keep));
            if params.has_bias {
                let b = format!("{conv_id}.bias");
                slots.insert(b.clone(), select_rows(&store.slots[&b], &keep));
            }
        } else if consumers.contains(&n.id) {
            let LayerKind::Conv(p) = n.kind else { unreachable!() };
            n.kind = LayerKind::Conv(ConvParams { in_channels: keep.len(), ..p });
            let w = format!("{}.weight", n.id);
            slots.insert(w.clone(), select_cols(&store.slots[&w], &keep));
        }
    }
    let mut pruned = Graph::new(graph.name(), nodes, graph.output(), graph.shared_groups().to_vec())?;
    pruned.config = graph.config.clone();
    let fingerprint = pruned.fingerprint();
    let store = WeightStore { slots, seed: store.seed, scheme: store.scheme, fingerprint };
    Ok((pruned, store))
}
