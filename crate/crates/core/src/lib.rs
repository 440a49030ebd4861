//! Mask optimization with gated learnable morphology.
//!
//! The crate is organized bottom-up: [`autodiff`] is a small tape-based
//! reverse-mode engine; [`morphology`] builds max-plus/min-plus operators
//! and the gated blocks on top of it; [`network`] assembles the
//! encoder-decoder generator and a conditional discriminator; [`litho`] is
//! a differentiable sum-of-coherent-systems simulator; [`metrics`] scores
//! masks; [`data`] makes synthetic layouts and reference masks; and
//! [`training`] runs the two-stage optimization.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod grid;
pub mod layers;
pub mod litho;
pub mod metrics;
pub mod morphology;
pub mod network;
pub mod parallel;
pub mod real;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use grid::BinaryGrid;
pub use real::Real;
pub use tensor::{Shape, Tensor};
