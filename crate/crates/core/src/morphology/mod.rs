//! Learnable non-flat morphology: dilation/erosion by per-channel
//! structuring surfaces, the gated [`MorphBasicBlock`], and the
//! channel-split [`MultiScaleMorphBlock`].

mod basic;
pub mod delta;
mod multiscale;
pub mod ops;
mod surface;

pub use basic::{MorphBasicBlock, MorphBasicConfig};
pub use multiscale::{default_se_schedule, MultiScaleConfig, MultiScaleMorphBlock};
pub use ops::{dilate, erode, gate_mix, MorphOp};
pub use surface::{GateVector, StructuringSurface};
