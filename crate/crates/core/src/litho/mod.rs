//! Differentiable forward lithography: mask to aerial image (SOCS), resist
//! sigmoid, printed set, and dose corners.

pub mod fft;
mod model;
mod sim;

pub use model::{
    decode_kernels, encode_kernels, gaussian_kernel, load_kernels, save_kernels, Kernel,
    LithoConfig, LithoModel,
};
pub use sim::{LithoSim, PrintBand, PrintedResult};
