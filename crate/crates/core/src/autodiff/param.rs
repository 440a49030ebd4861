use std::sync::atomic::{AtomicU64, Ordering};

use crate::autodiff::graph::Graph;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(u64);

impl ParamId {
    fn fresh() -> Self {
        ParamId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// A trainable tensor together with its Adam moments.
pub struct Parameter<T> {
    id: ParamId,
    name: String,
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let n = value.numel();
        Parameter {
            id: ParamId::fresh(),
            name: name.into(),
            value,
            grad: None,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    /// Direct write access; optimizer state is left untouched.
    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        &mut self.value
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, g: Vec<T>) {
        assert_eq!(g.len(), self.value.numel());
        self.grad = Some(g);
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.m, &self.v)
    }

    /// Adds this parameter's gradient from `graph` (if it was registered there).
    pub fn collect_grad(&mut self, graph: &Graph<T>) {
        let Some(var) = graph.param_var(self.id) else { return };
        let n = self.value.numel();
        let acc = self.grad.get_or_insert_with(|| vec![T::zero(); n]);
        if let Some(g) = graph.grad(var) {
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += *b);
        }
    }
}

impl<T: Real> Clone for Parameter<T> {
    /// Clones get a fresh identity so they never alias the original in a graph.
    fn clone(&self) -> Self {
        Parameter {
            id: ParamId::fresh(),
            name: self.name.clone(),
            value: self.value.clone(),
            grad: self.grad.clone(),
            m: self.m.clone(),
            v: self.v.clone(),
            step: self.step,
        }
    }
}

impl<T: Real> std::fmt::Debug for Parameter<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Parameter")
            .field("name", &self.name)
            .field("shape", &self.value.shape())
            .finish()
    }
}

/// Non-parameter state that still belongs in a checkpoint (running statistics).
pub struct Buffer<T> {
    pub name: String,
    pub value: Tensor<T>,
}

pub enum Slot<'a, T> {
    Param(&'a mut Parameter<T>),
    Buffer(&'a mut Buffer<T>),
}

impl<T: Real> Slot<'_, T> {
    pub fn name(&self) -> &str {
        match self {
            Slot::Param(p) => p.name(),
            Slot::Buffer(b) => &b.name,
        }
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor<T> {
        match self {
            Slot::Param(p) => p.value_mut(),
            Slot::Buffer(b) => &mut b.value,
        }
    }
}

/// Anything owning parameters.
pub trait Module<T: Real> {
    /// Visits every parameter and buffer in a fixed order.
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>));

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.visit(&mut |s| {
            if let Slot::Param(p) = s {
                f(p)
            }
        });
    }

    fn collect_grads(&mut self, graph: &Graph<T>) {
        self.visit_params(&mut |p| p.collect_grad(graph));
    }

    fn zero_grads(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value().numel());
        n
    }

    /// Euclidean norm of all accumulated gradients.
    fn grad_norm(&mut self) -> f64 {
        let mut s = 0.0;
        self.visit_params(&mut |p| {
            if let Some(g) = p.grad() {
                s += g.iter().map(|v| v.f64() * v.f64()).sum::<f64>();
            }
        });
        s.sqrt()
    }
}

impl<T: Real> Module<T> for Vec<Parameter<T>> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        for p in self.iter_mut() {
            f(Slot::Param(p));
        }
    }
}

impl<T: Real> Module<T> for Parameter<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        f(Slot::Param(self));
    }
}

/// Adam with bias correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam {
            lr,
            ..Adam::default()
        }
    }

    /// One update of every parameter, then clears the gradients.
    ///
    /// Fails without touching anything if a parameter has no gradient.
    pub fn step<T: Real>(&self, params: &mut [&mut Parameter<T>]) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
            return Err(Error::MissingGradient {
                name: p.name.clone(),
            });
        }
        for p in params.iter_mut() {
            self.update(p);
        }
        Ok(())
    }

    pub fn step_module<T: Real, M: Module<T> + ?Sized>(&self, module: &mut M) -> Result<()> {
        let mut missing = None;
        module.visit_params(&mut |p| {
            if missing.is_none() && p.grad.is_none() {
                missing = Some(p.name.clone());
            }
        });
        if let Some(name) = missing {
            return Err(Error::MissingGradient { name });
        }
        module.visit_params(&mut |p| self.update(p));
        Ok(())
    }

    fn update<T: Real>(&self, p: &mut Parameter<T>) {
        let g = p.grad.take().expect("checked by caller");
        p.step += 1;
        let t = p.step as i32;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        let one = T::one();
        for (((x, m), v), g) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(p.m.iter_mut())
            .zip(p.v.iter_mut())
            .zip(g)
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *x -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}
