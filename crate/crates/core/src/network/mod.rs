//! Mask generator, conditional discriminator and binarization.

mod discriminator;
mod generator;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig, GeneratorTrace};

use crate::grid::BinaryGrid;
use crate::real::Real;
use crate::tensor::Tensor;

/// Elementwise `v >= threshold`; ties go to 1.
pub fn binarize<T: Real>(t: &Tensor<T>, threshold: f64) -> Tensor<T> {
    let th = T::of(threshold);
    t.map(|v| if v >= th { T::one() } else { T::zero() })
}

/// Binarized masks of a `(B, 1, H, W)` batch.
pub fn binarize_grids<T: Real>(t: &Tensor<T>, threshold: f64) -> Vec<BinaryGrid> {
    let s = t.shape();
    (0..s.b)
        .map(|b| BinaryGrid::from_plane(t.plane(b, 0), s.h, s.w, threshold))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn binarize_ties_up_and_is_idempotent() {
        let t = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 3), vec![0.49, 0.5, 0.51]).unwrap();
        let b = binarize(&t, 0.5);
        assert_eq!(b.data(), &[0.0, 1.0, 1.0]);
        assert_eq!(binarize(&b, 0.5), b);
    }
}
