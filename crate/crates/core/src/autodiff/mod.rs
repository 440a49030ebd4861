//! Reverse-mode automatic differentiation over rank-4 tensors.

pub mod checkpoint;
mod conv;
mod elementwise;
pub mod gradcheck;
mod graph;
mod norm;
mod param;
mod shape_ops;

pub(crate) use elementwise::{reduce_to_channels, sigmoid};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
pub use graph::{BackwardCtx, BackwardFn, Graph, Var};
pub use norm::{BatchNorm, Mode};
pub use param::{Adam, Buffer, Module, ParamId, Parameter, Slot};
