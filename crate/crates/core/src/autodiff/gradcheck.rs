use crate::autodiff::graph::{Graph, Var};
use crate::autodiff::param::{Module, Parameter};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many (evenly spaced) elements per tensor.
    pub max_elems: Option<usize>,
    /// Lower bound on the error denominator, so tensors whose true gradient
    /// is zero are judged on absolute rounding noise.
    pub floor: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step: 1e-6,
            tolerance: 1e-4,
            max_elems: None,
            floor: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LeafReport {
    pub name: String,
    pub checked: usize,
    /// `max |analytic - numeric| / max(|analytic|, |numeric|)` over the
    /// checked elements, scaled by the largest gradient of the tensor.
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub leaves: Vec<LeafReport>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.leaves.iter().all(|l| l.max_rel_error <= self.tolerance)
    }

    pub fn max_error(&self) -> f64 {
        self.leaves.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&LeafReport> {
        self.leaves
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn pick(n: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
        _ => (0..n).collect(),
    }
}

fn with_param<M: Module<f64> + ?Sized>(
    module: &mut M,
    index: usize,
    f: &mut dyn FnMut(&mut Parameter<f64>),
) {
    let mut i = 0;
    module.visit_params(&mut |p| {
        if i == index {
            f(p);
        }
        i += 1;
    });
}

fn rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(floor, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Compares analytic gradients against central finite differences for
/// every input tensor and every parameter of `module`.
///
/// `build` receives a fresh graph, the module, and the inputs registered as
/// gradient-tracking leaves; it must return a scalar loss.
pub fn gradcheck<M, F>(
    module: &mut M,
    inputs: &[Tensor<f64>],
    mut build: F,
    opts: GradcheckOptions,
) -> Result<GradcheckReport>
where
    M: Module<f64> + ?Sized,
    F: FnMut(&mut Graph<f64>, &mut M, &[Var]) -> Result<Var>,
{
    let mut inputs: Vec<Tensor<f64>> = inputs.to_vec();

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, module, &vars)?;
    g.backward(loss)?;
    module.zero_grads();
    module.collect_grads(&g);
    let input_grads: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();
    let mut param_grads = Vec::new();
    let mut param_names = Vec::new();
    module.visit_params(&mut |p| {
        let n = p.value().numel();
        param_grads.push(p.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]));
        param_names.push(p.name().to_string());
    });
    module.zero_grads();
    drop(g);

    let h = opts.step;
    let mut eval = |module: &mut M, inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let loss = build(&mut g, module, &vars)?;
        Ok(g.value(loss).item())
    };

    let mut leaves = Vec::new();
    for i in 0..inputs.len() {
        let idx = pick(inputs[i].numel(), opts.max_elems);
        let mut numeric = Vec::with_capacity(idx.len());
        for &j in &idx {
            let orig = inputs[i].data()[j];
            inputs[i].data_mut()[j] = orig + h;
            let up = eval(module, &inputs)?;
            inputs[i].data_mut()[j] = orig - h;
            let down = eval(module, &inputs)?;
            inputs[i].data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
        let analytic: Vec<f64> = idx.iter().map(|&j| input_grads[i][j]).collect();
        leaves.push(LeafReport {
            name: format!("input{i}"),
            checked: idx.len(),
            max_rel_error: rel_error(&analytic, &numeric, opts.floor),
        });
    }
    for (pi, (grad, name)) in param_grads.iter().zip(param_names).enumerate() {
        let idx = pick(grad.len(), opts.max_elems);
        let mut numeric = Vec::with_capacity(idx.len());
        for &j in &idx {
            let mut orig = 0.0;
            with_param(module, pi, &mut |p| {
                orig = p.value().data()[j];
                p.value_mut().data_mut()[j] = orig + h;
            });
            let up = eval(module, &inputs)?;
            with_param(module, pi, &mut |p| p.value_mut().data_mut()[j] = orig - h);
            let down = eval(module, &inputs)?;
            with_param(module, pi, &mut |p| p.value_mut().data_mut()[j] = orig);
            numeric.push((up - down) / (2.0 * h));
        }
        let analytic: Vec<f64> = idx.iter().map(|&j| grad[j]).collect();
        leaves.push(LeafReport {
            name,
            checked: idx.len(),
            max_rel_error: rel_error(&analytic, &numeric, opts.floor),
        });
    }
    Ok(GradcheckReport {
        leaves,
        tolerance: opts.tolerance,
    })
}
