pub mod data;
pub mod eval;
pub mod ir;
pub mod search;
pub mod tensor;
pub mod zoo;

pub use ir::{Graph, GraphBuilder, WeightStore};
pub use tensor::{Shape, Tensor};
