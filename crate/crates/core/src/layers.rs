//! Small parameterized building blocks shared by the morphology blocks and
//! the networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchNorm, Graph, Mode, Module, Parameter, Slot, Var};
use crate::error::Result;
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Real>(self, g: &mut Graph<T>, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

/// Zero-padded `k x k` convolution with bias.
pub struct Conv2d<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> Conv2d<T> {
    /// He-normal weights, zero bias, "same" padding.
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let std = (2.0 / (cin * k * k) as f64).sqrt();
        Conv2d {
            weight: Parameter::new(
                format!("{name}.weight"),
                Tensor::randn(Shape::new(cout, cin, k, k), std, rng),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(Shape::channels(cout))),
            stride,
            padding: k / 2,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value().shape().c
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value().shape().b
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        g.conv2d(x, w, Some(b), self.stride, self.padding)
    }

    /// Sets the weights to the identity map (1x1, `cin == cout`) and zero bias.
    pub fn set_identity(&mut self) {
        let s = self.weight.value().shape();
        assert!(s.h == 1 && s.b == s.c, "identity needs a square 1x1 conv");
        let w = self.weight.value_mut();
        for o in 0..s.b {
            for i in 0..s.c {
                w.set(o, i, 0, 0, if o == i { T::one() } else { T::zero() });
            }
        }
        self.bias.value_mut().data_mut().fill(T::zero());
    }

    pub fn zero(&mut self) {
        self.weight.value_mut().data_mut().fill(T::zero());
        self.bias.value_mut().data_mut().fill(T::zero());
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        f(Slot::Param(&mut self.weight));
        f(Slot::Param(&mut self.bias));
    }
}

/// Convolution, batch norm, activation.
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
    pub norm: BatchNorm<T>,
    pub activation: Activation,
}

impl<T: Real> ConvBlock<T> {
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        ConvBlock {
            conv: Conv2d::new(&format!("{name}.conv"), cin, cout, k, stride, rng),
            norm: BatchNorm::new(&format!("{name}.bn"), cout),
            activation: Activation::Relu,
        }
    }

    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<Var> {
        let y = self.conv.forward(g, x)?;
        let y = self.norm.forward(g, y, mode)?;
        Ok(self.activation.apply(g, y))
    }
}

impl<T: Real> Module<T> for ConvBlock<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        self.conv.visit(f);
        self.norm.visit(f);
    }
}
