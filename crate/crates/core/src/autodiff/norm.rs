use crate::autodiff::graph::{Graph, Var};
use crate::autodiff::param::{Buffer, Module, Parameter, Slot};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

/// Per-channel batch normalization with running statistics.
pub struct BatchNorm<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Real> BatchNorm<T> {
    pub const EPS: f64 = 1e-5;
    pub const MOMENTUM: f64 = 0.1;

    pub fn new(name: &str, channels: usize) -> Self {
        let s = Shape::channels(channels);
        BatchNorm {
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::ones(s)),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(s)),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: Tensor::zeros(s),
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: Tensor::ones(s),
            },
            eps: Self::EPS,
            momentum: Self::MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value().numel()
    }

    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<Var> {
        let gamma = g.param(&self.gamma);
        let beta = g.param(&self.beta);
        match mode {
            Mode::Train => {
                let (y, mean, var) = g.batchnorm_train(x, gamma, beta, self.eps)?;
                let s = g.shape(x);
                let n = (s.b * s.h * s.w) as f64;
                let m = T::of(self.momentum);
                let one = T::one();
                let rm = self.running_mean.value.data_mut();
                for (r, v) in rm.iter_mut().zip(&mean) {
                    *r = (one - m) * *r + m * *v;
                }
                let rv = self.running_var.value.data_mut();
                let unbias = T::of(n / (n - 1.0));
                for (r, v) in rv.iter_mut().zip(&var) {
                    *r = (one - m) * *r + m * *v * unbias;
                }
                Ok(y)
            }
            Mode::Eval => g.batchnorm_eval(
                x,
                gamma,
                beta,
                self.running_mean.value.data(),
                self.running_var.value.data(),
                self.eps,
            ),
        }
    }
}

impl<T: Real> Module<T> for BatchNorm<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        f(Slot::Param(&mut self.gamma));
        f(Slot::Param(&mut self.beta));
        f(Slot::Buffer(&mut self.running_mean));
        f(Slot::Buffer(&mut self.running_var));
    }
}

fn check_affine<T: Real>(g: &Graph<T>, x: Var, gamma: Var, beta: Var) -> Result<Shape> {
    let s = g.shape(x);
    for p in [gamma, beta] {
        if g.shape(p) != Shape::channels(s.c) {
            return Err(Error::Shape {
                op: "batchnorm",
                dim: "channels",
                expected: s.c,
                got: g.shape(p).numel(),
            });
        }
    }
    Ok(s)
}

fn channel_iter(s: Shape, c: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    let p = s.plane();
    (0..s.b).map(move |b| {
        let start = (b * s.c + c) * p;
        start..start + p
    })
}

impl<T: Real> Graph<T> {
    /// Batch-statistics normalization. Also returns the per-channel batch
    /// mean and biased variance so the caller can update running stats.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<T>, Vec<T>)> {
        let s = check_affine(self, x, gamma, beta)?;
        let n = s.b * s.plane();
        if n < 2 {
            return Err(Error::invalid(
                "batchnorm",
                format!("train mode needs at least 2 values per channel, got {n}"),
            ));
        }
        let nf = T::of(n as f64);
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut means = vec![T::zero(); s.c];
        let mut vars = vec![T::zero(); s.c];
        let mut inv_std = vec![T::zero(); s.c];
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for c in 0..s.c {
            let mut sum = T::zero();
            for r in channel_iter(s, c) {
                sum += xv[r].iter().copied().sum::<T>();
            }
            let mean = sum / nf;
            let mut sq = T::zero();
            for r in channel_iter(s, c) {
                sq += xv[r].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
            }
            let var = sq / nf;
            let is = T::one() / (var + T::of(eps)).sqrt();
            means[c] = mean;
            vars[c] = var;
            inv_std[c] = is;
            for r in channel_iter(s, c) {
                for i in r {
                    let h = (xv[i] - mean) * is;
                    xhat[i] = h;
                    out[i] = gv[c] * h + bv[c];
                }
            }
        }
        let value = Tensor::from_vec(s, out)?;
        let y = self.record(
            "batchnorm",
            &[x, gamma, beta],
            value,
            Box::new(move |ctx, g| {
                let gamma = ctx.inputs[1].data();
                let mut dx = vec![T::zero(); g.len()];
                let mut dgamma = vec![T::zero(); s.c];
                let mut dbeta = vec![T::zero(); s.c];
                for c in 0..s.c {
                    let mut sg = T::zero();
                    let mut sgx = T::zero();
                    for r in channel_iter(s, c) {
                        for i in r {
                            sg += g[i];
                            sgx += g[i] * xhat[i];
                        }
                    }
                    dgamma[c] = sgx;
                    dbeta[c] = sg;
                    let k = gamma[c] * inv_std[c];
                    let (mg, mgx) = (sg / nf, sgx / nf);
                    for r in channel_iter(s, c) {
                        for i in r {
                            dx[i] = k * (g[i] - mg - xhat[i] * mgx);
                        }
                    }
                }
                vec![
                    ctx.needs[0].then_some(dx),
                    ctx.needs[1].then_some(dgamma),
                    ctx.needs[2].then_some(dbeta),
                ]
            }),
        );
        Ok((y, means, vars))
    }

    /// Normalization with fixed (running) statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[T],
        var: &[T],
        eps: f64,
    ) -> Result<Var> {
        let s = check_affine(self, x, gamma, beta)?;
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
        let mean = mean.to_vec();
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let p = s.plane();
        let out: Vec<T> = xv
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = (i / p) % s.c;
                gv[c] * (v - mean[c]) * inv_std[c] + bv[c]
            })
            .collect();
        let value = Tensor::from_vec(s, out)?;
        Ok(self.record(
            "batchnorm_eval",
            &[x, gamma, beta],
            value,
            Box::new(move |ctx, g| {
                let xv = ctx.inputs[0].data();
                let gamma = ctx.inputs[1].data();
                let mut dx = vec![T::zero(); g.len()];
                let mut dgamma = vec![T::zero(); s.c];
                let mut dbeta = vec![T::zero(); s.c];
                for i in 0..g.len() {
                    let c = (i / p) % s.c;
                    let h = (xv[i] - mean[c]) * inv_std[c];
                    dx[i] = g[i] * gamma[c] * inv_std[c];
                    dgamma[c] += g[i] * h;
                    dbeta[c] += g[i];
                }
                vec![
                    ctx.needs[0].then_some(dx),
                    ctx.needs[1].then_some(dgamma),
                    ctx.needs[2].then_some(dbeta),
                ]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_input_normalizes_to_zero() {
        let mut bn = BatchNorm::<f64>::new("bn", 2);
        let mut g = Graph::new();
        let x = g.input(Tensor::full(Shape::new(2, 2, 3, 3), 4.0));
        let y = bn.forward(&mut g, x, Mode::Train).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_output_has_beta_mean_and_gamma_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut bn = BatchNorm::<f64>::new("bn", 3);
        bn.gamma.value_mut().data_mut().copy_from_slice(&[2.0, 0.5, 1.0]);
        bn.beta.value_mut().data_mut().copy_from_slice(&[1.0, -1.0, 0.0]);
        let mut g = Graph::new();
        let xt = Tensor::randn(Shape::new(4, 3, 5, 5), 3.0, &mut rng).map(|v| v + 7.0);
        let x = g.input(xt);
        let y = bn.forward(&mut g, x, Mode::Train).unwrap();
        let yv = g.value(y);
        for (c, (gm, bt)) in [(2.0, 1.0), (0.5, -1.0), (1.0, 0.0)].into_iter().enumerate() {
            let vals: Vec<f64> = (0..4).flat_map(|b| yv.plane(b, c).to_vec()).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!((mean - bt).abs() < 1e-4);
            assert!((var - gm * gm).abs() < 1e-4 * gm * gm + 1e-4);
        }
        // running stats moved toward the batch mean
        assert!(bn.running_mean.value.data().iter().all(|&m| (m - 0.7).abs() < 0.4));
    }

    #[test]
    fn single_value_per_channel_rejected() {
        let mut bn = BatchNorm::<f64>::new("bn", 1);
        let mut g = Graph::new();
        let x = g.input(Tensor::ones(Shape::new(1, 1, 1, 1)));
        assert!(bn.forward(&mut g, x, Mode::Train).is_err());
        // eval mode is fine
        assert!(bn.forward(&mut g, x, Mode::Eval).is_ok());
    }
}
