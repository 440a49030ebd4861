use std::collections::HashMap;

use crate::autodiff::param::{ParamId, Parameter};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a backward rule sees: the forward inputs and output, and which
/// inputs actually need a gradient.
pub struct BackwardCtx<'a, T> {
    pub inputs: Vec<&'a Tensor<T>>,
    pub output: &'a Tensor<T>,
    pub needs: Vec<bool>,
}

/// Vector-Jacobian product of one op: maps the output gradient to one
/// optional gradient per input (same length as the input's data).
pub type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>, &[T]) -> Vec<Option<Vec<T>>>>;

struct Node<T> {
    op: &'static str,
    value: Tensor<T>,
    inputs: Vec<Var>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// A tape of operations recorded during one forward pass.
///
/// Nodes are appended in execution order, so every node's inputs precede
/// it. [`Graph::backward`] walks the tape once in reverse.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input; no gradient is tracked.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(Node {
            op: "leaf",
            value,
            inputs: Vec::new(),
            backward: None,
            requires_grad,
            grad: None,
        })
    }

    /// Registers a parameter as a gradient-tracking leaf. Registering the
    /// same parameter twice returns the same node.
    pub fn param(&mut self, p: &Parameter<T>) -> Var {
        if let Some(&v) = self.params.get(&p.id()) {
            return v;
        }
        let v = self.leaf(p.value().clone(), true);
        self.params.insert(p.id(), v);
        v
    }

    pub(crate) fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    /// A gradient-free copy of `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.input(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a gradient-tracking node, after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Records an op whose value was computed by the caller.
    pub fn record(
        &mut self,
        op: &'static str,
        inputs: &[Var],
        value: Tensor<T>,
        backward: BackwardFn<T>,
    ) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Node {
            op,
            value,
            inputs: inputs.to_vec(),
            backward: requires_grad.then_some(backward),
            requires_grad,
            grad: None,
        })
    }

    fn push(&mut self, node: Node<T>) -> Var {
        debug_assert!(node.inputs.iter().all(|v| v.0 < self.nodes.len()));
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Reverse-mode sweep from a scalar `loss`. Gradients add onto whatever
    /// a previous call left behind.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let numel = self.nodes[loss.0].value.numel();
        if numel != 1 {
            return Err(Error::NonScalarLoss { numel });
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(bw) = &node.backward {
                let ctx = BackwardCtx {
                    inputs: node.inputs.iter().map(|v| &self.nodes[v.0].value).collect(),
                    output: &node.value,
                    needs: node
                        .inputs
                        .iter()
                        .map(|v| self.nodes[v.0].requires_grad)
                        .collect(),
                };
                let input_grads = bw(&ctx, &g);
                debug_assert_eq!(input_grads.len(), node.inputs.len(), "op {}", node.op);
                for (v, ig) in node.inputs.iter().zip(input_grads) {
                    let Some(ig) = ig else { continue };
                    if !self.nodes[v.0].requires_grad {
                        continue;
                    }
                    debug_assert_eq!(ig.len(), self.nodes[v.0].value.numel(), "op {}", node.op);
                    match &mut grads[v.0] {
                        Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += *b),
                        slot => *slot = Some(ig),
                    }
                }
            }
            // Keep gradients only on leaves; intermediates are dropped.
            if self.nodes[i].inputs.is_empty() {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    slot => *slot = Some(g),
                }
            }
        }
        // Tracked leaves the loss never reached get explicit zeros.
        for n in &mut self.nodes[..=loss.0] {
            if n.requires_grad && n.inputs.is_empty() && n.grad.is_none() {
                n.grad = Some(vec![T::zero(); n.value.numel()]);
            }
        }
        Ok(())
    }
}
