use crate::autodiff::{Graph, Module, Parameter, Slot, Var};
use crate::error::{Error, Result};
use crate::morphology::ops::{self, MorphOp};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Per-channel learnable non-flat structuring element: a `k x k` weight
/// surface with its origin at the centre, plus a bias.
pub struct StructuringSurface<T> {
    pub weights: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Real> StructuringSurface<T> {
    /// A flat (all-zero) surface with zero bias.
    pub fn flat(name: &str, channels: usize, size: usize) -> Result<Self> {
        if size % 2 == 0 || size == 0 {
            return Err(Error::invalid(
                "structuring surface",
                format!("window size must be odd, got {size}"),
            ));
        }
        Ok(StructuringSurface {
            weights: Parameter::new(
                format!("{name}.se"),
                Tensor::zeros(Shape::new(1, channels, size, size)),
            ),
            bias: Parameter::new(format!("{name}.se_bias"), Tensor::zeros(Shape::channels(channels))),
        })
    }

    pub fn from_tensors(name: &str, weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let s = weights.shape();
        if s.b != 1 || s.h != s.w || s.h % 2 == 0 {
            return Err(Error::invalid(
                "structuring surface",
                format!("weights must be (1, C, k, k) with odd k, got {s:?}"),
            ));
        }
        if bias.shape() != Shape::channels(s.c) {
            return Err(Error::Shape {
                op: "structuring surface",
                dim: "bias",
                expected: s.c,
                got: bias.numel(),
            });
        }
        Ok(StructuringSurface {
            weights: Parameter::new(format!("{name}.se"), weights),
            bias: Parameter::new(format!("{name}.se_bias"), bias),
        })
    }

    pub fn channels(&self) -> usize {
        self.weights.value().shape().c
    }

    pub fn size(&self) -> usize {
        self.weights.value().shape().h
    }

    /// `w'(q) = w(-q)`: the window rotated by 180 degrees.
    pub fn reflected(&self) -> Tensor<T> {
        let w = self.weights.value();
        let s = w.shape();
        Tensor::from_fn(s, |b, c, y, x| w.at(b, c, s.h - 1 - y, s.w - 1 - x))
    }

    pub fn apply(&self, g: &mut Graph<T>, op: MorphOp, x: Var) -> Result<Var> {
        let w = g.param(&self.weights);
        let b = g.param(&self.bias);
        ops::morph(g, op, x, w, b)
    }

    pub fn dilate(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.apply(g, MorphOp::Dilate, x)
    }

    pub fn erode(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.apply(g, MorphOp::Erode, x)
    }
}

impl<T: Real> Module<T> for StructuringSurface<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        f(Slot::Param(&mut self.weights));
        f(Slot::Param(&mut self.bias));
    }
}

/// Per-channel gate logits; `sigmoid(g)` weighs dilation against erosion.
pub struct GateVector<T> {
    pub logits: Parameter<T>,
}

impl<T: Real> GateVector<T> {
    /// Zero logits, so both paths start weighted 0.5.
    pub fn zeros(name: &str, channels: usize) -> Self {
        GateVector {
            logits: Parameter::new(format!("{name}.gate"), Tensor::zeros(Shape::channels(channels))),
        }
    }

    pub fn fill(&mut self, logit: f64) {
        self.logits.value_mut().data_mut().fill(T::of(logit));
    }

    pub fn channels(&self) -> usize {
        self.logits.value().numel()
    }

    pub fn weights(&self) -> Vec<T> {
        self.logits
            .value()
            .data()
            .iter()
            .map(|&v| crate::autodiff::sigmoid(v))
            .collect()
    }
}

impl<T: Real> Module<T> for GateVector<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        f(Slot::Param(&mut self.logits));
    }
}
