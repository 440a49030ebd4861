use crate::autodiff::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `b` is a `(1, C, 1, 1)` vector against `a: (B, C, H, W)`.
    Channel,
}

fn broadcast(op: &'static str, a: Shape, b: Shape) -> Result<Broadcast> {
    if a == b {
        return Ok(Broadcast::Same);
    }
    if b == Shape::channels(a.c) {
        return Ok(Broadcast::Channel);
    }
    let (dim, expected, got) = if a.c != b.c {
        ("channels", a.c, b.c)
    } else if a.b != b.b {
        ("batch", a.b, b.b)
    } else if a.h != b.h {
        ("height", a.h, b.h)
    } else {
        ("width", a.w, b.w)
    };
    Err(Error::Shape {
        op,
        dim,
        expected,
        got,
    })
}

/// Sums `g: (B, C, H, W)` down to a per-channel vector.
pub(crate) fn reduce_to_channels<T: Real>(g: &[T], s: Shape) -> Vec<T> {
    let mut out = vec![T::zero(); s.c];
    let p = s.plane();
    for b in 0..s.b {
        for (c, acc) in out.iter_mut().enumerate() {
            let start = (b * s.c + c) * p;
            *acc += g[start..start + p].iter().copied().sum::<T>();
        }
    }
    out
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

impl<T: Real> Graph<T> {
    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        // (grad, a, b) -> (da, db)
        df: fn(T, T, T) -> (T, T),
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let mode = broadcast(op, sa, sb)?;
        let av = self.value(a);
        let bv = self.value(b);
        let out: Vec<T> = match mode {
            Broadcast::Same => av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Channel => {
                let p = sa.plane();
                av.data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, bv.data()[(i / p) % sa.c]))
                    .collect()
            }
        };
        let value = Tensor::from_vec(sa, out)?;
        Ok(self.record(
            op,
            &[a, b],
            value,
            Box::new(move |ctx, g| {
                let (x, y) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let p = sa.plane();
                let yi = |i: usize| match mode {
                    Broadcast::Same => y[i],
                    Broadcast::Channel => y[(i / p) % sa.c],
                };
                let mut da = vec![T::zero(); x.len()];
                let mut db = vec![T::zero(); x.len()];
                for i in 0..x.len() {
                    let (u, v) = df(g[i], x[i], yi(i));
                    da[i] = u;
                    db[i] = v;
                }
                let db = match mode {
                    Broadcast::Same => db,
                    Broadcast::Channel => reduce_to_channels(&db, sa),
                };
                vec![
                    ctx.needs[0].then_some(da),
                    ctx.needs[1].then_some(db),
                ]
            }),
        ))
    }

    /// `a + b`; `b` may be a per-channel vector.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |g, _, _| (g, g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |g, _, _| (g, -g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |g, x, y| (g * y, g * x))
    }

    fn unary(
        &mut self,
        op: &'static str,
        a: Var,
        f: impl Fn(T) -> T,
        // (grad, input, output) -> d input
        df: impl Fn(T, T, T) -> T + 'static,
    ) -> Var {
        let value = self.value(a).map(f);
        self.record(
            op,
            &[a],
            value,
            Box::new(move |ctx, g| {
                let x = ctx.inputs[0].data();
                let y = ctx.output.data();
                let d = (0..x.len()).map(|i| df(g[i], x[i], y[i])).collect();
                vec![Some(d)]
            }),
        )
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let (k, s) = (T::of(scale), T::of(shift));
        self.unary("affine", a, move |x| k * x + s, move |g, _, _| g * k)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let k = T::of(k);
        self.unary("scale", a, move |x| k * x, move |g, _, _| g * k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary("neg", a, |x| -x, |g, _, _| -g)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let two = T::of(2.0);
        self.unary("square", a, |x| x * x, move |g, x, _| two * x * g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary("sigmoid", a, sigmoid, |g, _, y| g * y * (T::one() - y))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(
            "relu",
            a,
            |x| if x > T::zero() { x } else { T::zero() },
            |g, x, _| if x > T::zero() { g } else { T::zero() },
        )
    }

    /// `log(sigmoid(a))`, stable for large `|a|`.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.unary(
            "log_sigmoid",
            a,
            |x| {
                // log σ(x) = min(x, 0) - log(1 + e^{-|x|})
                x.min(T::zero()) - (-x.abs()).exp().ln_1p()
            },
            |g, x, _| g * (T::one() - sigmoid(x)),
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum::<T>();
        let n = self.value(a).numel();
        self.record(
            "sum",
            &[a],
            Tensor::scalar(s),
            Box::new(move |_, g| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel();
        let s = self.value(a).data().iter().copied().sum::<T>() / T::of(n as f64);
        self.record(
            "mean",
            &[a],
            Tensor::scalar(s),
            Box::new(move |_, g| vec![Some(vec![g[0] / T::of(n as f64); n])]),
        )
    }

    /// Mean over the spatial dimensions: `(B, C, H, W) -> (B, C, 1, 1)`.
    pub fn spatial_mean(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        let p = s.plane();
        let inv = T::of(1.0 / p as f64);
        let out: Vec<T> = self
            .value(a)
            .data()
            .chunks(p)
            .map(|c| c.iter().copied().sum::<T>() * inv)
            .collect();
        let value = Tensor::from_vec(Shape::new(s.b, s.c, 1, 1), out).expect("shape");
        self.record(
            "spatial_mean",
            &[a],
            value,
            Box::new(move |_, g| {
                let mut d = vec![T::zero(); s.numel()];
                for (chunk, &gi) in d.chunks_mut(p).zip(g) {
                    chunk.fill(gi * inv);
                }
                vec![Some(d)]
            }),
        )
    }

    /// Mean squared difference between `a` and `b`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d);
        Ok(self.mean(sq))
    }
}
