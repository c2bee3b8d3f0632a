//! Layer-graph IR: immutable DAGs of layer specs with block tags, shape
//! inference, exact parameter/MAC/receptive-field accounting, weight stores
//! and a structural channel-pruning transform.

mod count;
mod forward;
mod prune;
mod shape;
mod text;
mod weights;

pub use count::{count_macs, count_params, receptive_field, Breakdown, ReceptiveField};
pub use forward::forward;
pub use prune::prune_channels;
pub use shape::{validate_and_infer_shapes, Shapes};
pub use text::{parse_graph, write_graph};
pub use weights::{
    init_weights, load_weights, read_weights, save_weights, InitScheme, WeightStore,
};

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::tensor::{Activation, ConvParams, ResizeSpec, Shape, TensorError};

#[derive(Debug, Error)]
pub enum IrError {
    #[error("duplicate node id {0:?}")]
    DuplicateId(String),
    #[error("node {node:?} reads unknown input {input:?}")]
    DanglingInput { node: String, input: String },
    #[error("graph has a cycle through node {0:?}")]
    Cycle(String),
    #[error("node {node:?}: {source}")]
    Tensor {
        node: String,
        #[source]
        source: TensorError,
    },
    #[error("node {node:?}: {detail}")]
    Invalid { node: String, detail: String },
    #[error("cannot prune through node {node:?}: {detail}")]
    NotPrunable { node: String, detail: String },
    #[error("weight fingerprint mismatch: store has {found}, graph expects {expected}")]
    Fingerprint { expected: String, found: String },
    #[error("weight store is missing slot {0:?}")]
    MissingSlot(String),
    #[error("slot {slot:?} has shape {found}, expected {expected}")]
    SlotShape { slot: String, expected: Shape, found: Shape },
    #[error("malformed weight file: {0}")]
    WeightFormat(String),
    #[error("graph text line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IrError {
    pub(crate) fn invalid(node: &str, detail: impl Into<String>) -> Self {
        IrError::Invalid { node: node.to_string(), detail: detail.into() }
    }

    pub(crate) fn tensor(node: &str, source: TensorError) -> Self {
        IrError::Tensor { node: node.to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, IrError>;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Input { channels: usize },
    Conv(ConvParams),
    Activation(Activation),
    PixelShuffle { r: usize },
    Resize(ResizeSpec),
    GlobalAvgPool,
    Concat,
    /// Emits part `part` of a channel split into `sizes`.
    Split { sizes: Vec<usize>, part: usize },
    /// Sum of all inputs.
    Add,
    /// Product of two inputs; the second may be an `(n, c, 1, 1)` gate.
    Mul,
    /// Multiplication by a scalar, a parameter slot when `learnable`.
    Scale { learnable: bool, init: f32 },
    /// Fully connected layer on `(n, in, 1, 1)` maps.
    Dense { in_features: usize, out_features: usize, has_bias: bool },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Input { .. } => "input",
            LayerKind::Conv(_) => "conv",
            LayerKind::Activation(_) => "act",
            LayerKind::PixelShuffle { .. } => "pixel_shuffle",
            LayerKind::Resize(_) => "resize",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Concat => "concat",
            LayerKind::Split { .. } => "split",
            LayerKind::Add => "add",
            LayerKind::Mul => "mul",
            LayerKind::Scale { .. } => "scale",
            LayerKind::Dense { .. } => "dense",
        }
    }

    /// Parameter slots this layer owns, as `(suffix, shape)`.
    pub fn param_shapes(&self) -> Vec<(&'static str, Shape)> {
        match *self {
            LayerKind::Conv(p) => {
                let mut v = vec![("weight", p.weight_shape())];
                if p.has_bias {
                    v.push(("bias", p.bias_shape()));
                }
                v
            }
            LayerKind::Dense { in_features, out_features, has_bias } => {
                let mut v = vec![("weight", Shape::new(out_features, in_features, 1, 1))];
                if has_bias {
                    v.push(("bias", Shape::new(out_features, 1, 1, 1)));
                }
                v
            }
            LayerKind::Scale { learnable: true, .. } => vec![("scale", Shape::new(1, 1, 1, 1))],
            _ => Vec::new(),
        }
    }

    fn arity(&self) -> Option<std::ops::RangeInclusive<usize>> {
        match self {
            LayerKind::Input { .. } => Some(0..=0),
            LayerKind::Concat | LayerKind::Add => Some(1..=usize::MAX),
            LayerKind::Mul => Some(2..=2),
            _ => Some(1..=1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
    pub block_tag: String,
}

/// A parameter slot: one stored tensor, possibly aliased by several nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Shape,
    pub owner: String,
    pub block_tag: String,
}

#[derive(Clone)]
pub struct Graph {
    name: String,
    nodes: Vec<LayerSpec>,
    output: String,
    shared_groups: Vec<Vec<String>>,
    config: Option<String>,
    index: HashMap<String, usize>,
    owner: HashMap<String, String>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("name", &self.name)
            .field("nodes", &self.nodes.len())
            .field("output", &self.output)
            .finish_non_exhaustive()
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.nodes == other.nodes
            && self.output == other.output
            && self.shared_groups == other.shared_groups
            && self.config == other.config
    }
}

impl Graph {
    /// Checks ids, arity, references and sharing, and reorders nodes
    /// topologically (stable with respect to the given order).
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<LayerSpec>,
        output: impl Into<String>,
        shared_groups: Vec<Vec<String>>,
    ) -> Result<Graph> {
        let output = output.into();
        let mut seen = HashSet::new();
        for n in &nodes {
            if !seen.insert(n.id.as_str()) {
                return Err(IrError::DuplicateId(n.id.clone()));
            }
        }
        for n in &nodes {
            if let Some(range) = n.kind.arity() {
                if !range.contains(&n.inputs.len()) {
                    return Err(IrError::invalid(
                        &n.id,
                        format!("{} takes {:?} inputs, got {}", n.kind.name(), range, n.inputs.len()),
                    ));
                }
            }
            for i in &n.inputs {
                if !seen.contains(i.as_str()) {
                    return Err(IrError::DanglingInput { node: n.id.clone(), input: i.clone() });
                }
            }
        }
        let inputs: Vec<&LayerSpec> =
            nodes.iter().filter(|n| matches!(n.kind, LayerKind::Input { .. })).collect();
        if inputs.len() != 1 {
            return Err(IrError::invalid(
                inputs.get(1).map_or("<graph>", |n| n.id.as_str()),
                format!("graph needs exactly one input node, found {}", inputs.len()),
            ));
        }
        if !seen.contains(output.as_str()) {
            return Err(IrError::invalid(&output, "output node does not exist"));
        }
        let nodes = topo_sort(nodes)?;
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();

        let mut owner = HashMap::new();
        for group in &shared_groups {
            let Some(first) = group.first() else { continue };
            let first_idx = *index
                .get(first)
                .ok_or_else(|| IrError::invalid(first, "shared group names an unknown node"))?;
            let kind = &nodes[first_idx].kind;
            if kind.param_shapes().is_empty() {
                return Err(IrError::invalid(first, "shared group member has no parameters"));
            }
            for member in group {
                let idx = *index
                    .get(member)
                    .ok_or_else(|| IrError::invalid(member, "shared group names an unknown node"))?;
                if &nodes[idx].kind != kind {
                    return Err(IrError::invalid(
                        member,
                        format!("shared with {first:?} but layer parameters differ"),
                    ));
                }
                if owner.insert(member.clone(), first.clone()).is_some() {
                    return Err(IrError::invalid(member, "node appears in two shared groups"));
                }
            }
        }
        Ok(Graph { name: name.into(), nodes, output, shared_groups, config: None, index, owner })
    }

    pub fn with_config(mut self, config: impl Into<String>) -> Graph {
        self.config = Some(config.into());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[LayerSpec] {
        &self.nodes
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    pub fn input(&self) -> &LayerSpec {
        self.nodes
            .iter()
            .find(|n| matches!(n.kind, LayerKind::Input { .. }))
            .expect("validated graph has an input")
    }

    pub fn input_channels(&self) -> usize {
        match self.input().kind {
            LayerKind::Input { channels } => channels,
            _ => unreachable!(),
        }
    }

    pub fn shared_groups(&self) -> &[Vec<String>] {
        &self.shared_groups
    }

    /// Serialized architecture config the graph was built from, if any.
    pub fn config(&self) -> Option<&str> {
        self.config.as_deref()
    }

    pub fn node(&self, id: &str) -> Option<&LayerSpec> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Node whose parameter slots `id` uses.
    pub fn slot_owner<'a>(&'a self, id: &'a str) -> &'a str {
        self.owner.get(id).map_or(id, String::as_str)
    }

    pub fn slot_name(&self, id: &str, suffix: &str) -> String {
        format!("{}.{suffix}", self.slot_owner(id))
    }

    /// Distinct parameter slots in node order.
    pub fn param_slots(&self) -> Vec<ParamSlot> {
        self.nodes
            .iter()
            .filter(|n| self.slot_owner(&n.id) == n.id)
            .flat_map(|n| {
                n.kind.param_shapes().into_iter().map(move |(suffix, shape)| ParamSlot {
                    name: format!("{}.{suffix}", n.id),
                    shape,
                    owner: n.id.clone(),
                    block_tag: n.block_tag.clone(),
                })
            })
            .collect()
    }

    /// Ids of nodes that read `id`.
    pub fn consumers(&self, id: &str) -> Vec<&LayerSpec> {
        self.nodes.iter().filter(|n| n.inputs.iter().any(|i| i == id)).collect()
    }

    /// Stable hash of the ordered `(slot name, shape)` list.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for slot in self.param_slots() {
            h.update(slot.name.as_bytes());
            h.update([0u8]);
            for d in slot.shape.dims() {
                h.update((d as u64).to_le_bytes());
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Block tags in order of first appearance.
    pub fn block_tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = Vec::new();
        for n in &self.nodes {
            if !tags.contains(&n.block_tag) {
                tags.push(n.block_tag.clone());
            }
        }
        tags
    }
}

fn topo_sort(nodes: Vec<LayerSpec>) -> Result<Vec<LayerSpec>> {
    let pos: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let in_order = nodes
        .iter()
        .enumerate()
        .all(|(i, n)| n.inputs.iter().all(|inp| pos[inp.as_str()] < i));
    if in_order {
        return Ok(nodes);
    }
    let mut indegree: Vec<usize> = nodes.iter().map(|n| n.inputs.len()).collect();
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for inp in &n.inputs {
            users[pos[inp.as_str()]].push(i);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &u in &users[i] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.insert(u);
            }
        }
    }
    if order.len() != nodes.len() {
        let stuck = (0..nodes.len()).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(IrError::Cycle(nodes[stuck].id.clone()));
    }
    let mut slots: Vec<Option<LayerSpec>> = nodes.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().expect("each index once")).collect())
}

/// Incremental graph construction with a current block tag and an id
/// prefix stack, so block helpers can be composed without id clashes.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    name: String,
    nodes: Vec<LayerSpec>,
    shared: Vec<Vec<String>>,
    tag: String,
    scope: Vec<String>,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        GraphBuilder {
            name: name.into(),
            nodes: Vec::new(),
            shared: Vec::new(),
            tag: "Body".to_string(),
            scope: Vec::new(),
        }
    }

    pub fn set_tag(&mut self, tag: &str) -> &mut Self {
        self.tag = tag.to_string();
        self
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn push_scope(&mut self, scope: impl Into<String>) {
        self.scope.push(scope.into());
    }

    pub fn pop_scope(&mut self) {
        self.scope.pop();
    }

    /// Runs `f` with `scope` pushed.
    pub fn scoped<T>(&mut self, scope: impl Into<String>, f: impl FnOnce(&mut Self) -> T) -> T {
        self.push_scope(scope);
        let out = f(self);
        self.pop_scope();
        out
    }

    fn qualify(&self, id: &str) -> String {
        if self.scope.is_empty() {
            id.to_string()
        } else {
            format!("{}.{id}", self.scope.join("."))
        }
    }

    pub fn add(&mut self, id: &str, kind: LayerKind, inputs: &[&str]) -> String {
        let id = self.qualify(id);
        self.nodes.push(LayerSpec {
            id: id.clone(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            block_tag: self.tag.clone(),
        });
        id
    }

    pub fn input(&mut self, channels: usize) -> String {
        let saved = std::mem::replace(&mut self.tag, "Input".to_string());
        let id = self.add("input", LayerKind::Input { channels }, &[]);
        self.tag = saved;
        id
    }

    pub fn conv(&mut self, id: &str, x: &str, p: ConvParams) -> String {
        self.add(id, LayerKind::Conv(p), &[x])
    }

    pub fn act(&mut self, id: &str, x: &str, a: Activation) -> String {
        self.add(id, LayerKind::Activation(a), &[x])
    }

    pub fn sum(&mut self, id: &str, xs: &[&str]) -> String {
        self.add(id, LayerKind::Add, xs)
    }

    pub fn concat(&mut self, id: &str, xs: &[&str]) -> String {
        self.add(id, LayerKind::Concat, xs)
    }

    pub fn scale(&mut self, id: &str, x: &str, learnable: bool, init: f32) -> String {
        self.add(id, LayerKind::Scale { learnable, init }, &[x])
    }

    pub fn pixel_shuffle(&mut self, id: &str, x: &str, r: usize) -> String {
        self.add(id, LayerKind::PixelShuffle { r }, &[x])
    }

    /// Adds one split node per part and returns their ids.
    pub fn split(&mut self, id: &str, x: &str, sizes: &[usize]) -> Vec<String> {
        (0..sizes.len())
            .map(|part| {
                self.add(&format!("{id}.{part}"), LayerKind::Split { sizes: sizes.to_vec(), part }, &[x])
            })
            .collect()
    }

    /// Declares that the given (already added) nodes share one parameter slot.
    pub fn share(&mut self, ids: Vec<String>) {
        if ids.len() > 1 {
            self.shared.push(ids);
        }
    }

    pub fn last_id(&self) -> Option<&str> {
        self.nodes.last().map(|n| n.id.as_str())
    }

    pub fn finish(self, output: &str) -> Result<Graph> {
        Graph::new(self.name, self.nodes, output, self.shared)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_chain() -> GraphBuilder {
        let mut b = GraphBuilder::new("chain");
        let x = b.input(3);
        let c1 = b.conv("c1", &x, ConvParams::new(3, 8, 3));
        b.conv("c2", &c1, ConvParams::new(8, 8, 3));
        b
    }

    #[test]
    fn builder_produces_valid_graph() {
        let g = conv_chain().finish("c2").unwrap();
        assert_eq!(g.nodes().len(), 3);
        assert_eq!(g.input_channels(), 3);
        assert_eq!(g.param_slots().len(), 4);
    }

    #[test]
    fn duplicate_and_dangling_ids_are_rejected() {
        let mut b = conv_chain();
        b.conv("c2", "c1", ConvParams::new(8, 8, 3));
        assert!(matches!(b.finish("c2"), Err(IrError::DuplicateId(id)) if id == "c2"));

        let mut b = conv_chain();
        b.conv("c3", "nope", ConvParams::new(8, 8, 3));
        assert!(matches!(b.finish("c3"), Err(IrError::DanglingInput { node, .. }) if node == "c3"));
    }

    #[test]
    fn cycles_are_detected() {
        let nodes = vec![
            LayerSpec { id: "input".into(), kind: LayerKind::Input { channels: 1 }, inputs: vec![], block_tag: "Input".into() },
            LayerSpec { id: "a".into(), kind: LayerKind::Add, inputs: vec!["input".into(), "b".into()], block_tag: "X".into() },
            LayerSpec { id: "b".into(), kind: LayerKind::Activation(Activation::Relu), inputs: vec!["a".into()], block_tag: "X".into() },
        ];
        assert!(matches!(Graph::new("cyc", nodes, "b", vec![]), Err(IrError::Cycle(_))));
    }

    #[test]
    fn out_of_order_nodes_are_sorted() {
        let nodes = vec![
            LayerSpec { id: "b".into(), kind: LayerKind::Activation(Activation::Relu), inputs: vec!["a".into()], block_tag: "X".into() },
            LayerSpec { id: "input".into(), kind: LayerKind::Input { channels: 1 }, inputs: vec![], block_tag: "Input".into() },
            LayerSpec { id: "a".into(), kind: LayerKind::Activation(Activation::Relu), inputs: vec!["input".into()], block_tag: "X".into() },
        ];
        let g = Graph::new("sorted", nodes, "b", vec![]).unwrap();
        let ids: Vec<&str> = g.nodes().iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["input", "a", "b"]);
    }

    #[test]
    fn shared_groups_require_identical_params() {
        let mut b = conv_chain();
        b.share(vec!["c1".into(), "c2".into()]);
        assert!(b.finish("c2").is_err());

        let mut b = GraphBuilder::new("shared");
        let x = b.input(4);
        let a = b.conv("a", &x, ConvParams::new(4, 4, 3));
        let c = b.conv("c", &a, ConvParams::new(4, 4, 3));
        b.share(vec![a.clone(), c.clone()]);
        let g = b.finish(&c).unwrap();
        assert_eq!(g.slot_owner("c"), "a");
        assert_eq!(g.param_slots().len(), 2);
    }

    #[test]
    fn fingerprint_tracks_slot_shapes() {
        let g1 = conv_chain().finish("c2").unwrap();
        let g2 = conv_chain().finish("c2").unwrap();
        assert_eq!(g1.fingerprint(), g2.fingerprint());
        let mut b = GraphBuilder::new("chain");
        let x = b.input(3);
        let c1 = b.conv("c1", &x, ConvParams::new(3, 9, 3));
        b.conv("c2", &c1, ConvParams::new(9, 8, 3));
        assert_ne!(b.finish("c2").unwrap().fingerprint(), g1.fingerprint());
    }

    #[test]
    fn scopes_qualify_ids() {
        let mut b = GraphBuilder::new("s");
        let x = b.input(2);
        let id = b.scoped("blk0", |b| b.scoped("body", |b| b.conv("conv1", &x, ConvParams::new(2, 2, 1))));
        assert_eq!(id, "blk0.body.conv1");
    }
}
