//! Non-flat grey-scale dilation and erosion on the autodiff tape.
//!
//! For a `k x k` window with radius `r = k / 2` and offsets `q = (dy, dx)`
//! scanned row-major from `(-r, -r)`:
//!
//! ```text
//! dilate(x)_c(p) = max_q [ x_c(p - q) + w_c(q) ] + beta_c
//! erode(x)_c(p)  = min_q [ x_c(p + q) - w_c(q) ] + beta_c
//! ```
//!
//! Samples outside the image are excluded from the max/min. The gradient
//! of each output goes entirely to the first extremal offset in scan order.

use crate::autodiff::{reduce_to_channels, sigmoid, Graph, Var};
use crate::error::{Error, Result};
use crate::parallel;
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphOp {
    Dilate,
    Erode,
}

impl MorphOp {
    fn name(self) -> &'static str {
        match self {
            MorphOp::Dilate => "dilate",
            MorphOp::Erode => "erode",
        }
    }

    /// Input location sampled for output `(y, x)` at offset `(dy, dx)`.
    #[inline]
    fn source(self, y: isize, x: isize, dy: isize, dx: isize) -> (isize, isize) {
        match self {
            MorphOp::Dilate => (y - dy, x - dx),
            MorphOp::Erode => (y + dy, x + dx),
        }
    }
}

fn check(g: &Graph<impl Real>, op: MorphOp, x: Var, w: Var, beta: Var) -> Result<(Shape, usize)> {
    let xs = g.shape(x);
    let ws = g.shape(w);
    if ws.b != 1 || ws.c != xs.c {
        return Err(Error::Shape {
            op: op.name(),
            dim: "channels",
            expected: xs.c,
            got: ws.c,
        });
    }
    if ws.h != ws.w || ws.h % 2 == 0 {
        return Err(Error::invalid(
            op.name(),
            format!("structuring window must be odd and square, got {}x{}", ws.h, ws.w),
        ));
    }
    if g.shape(beta) != Shape::channels(xs.c) {
        return Err(Error::Shape {
            op: op.name(),
            dim: "bias",
            expected: xs.c,
            got: g.shape(beta).numel(),
        });
    }
    Ok((xs, ws.h))
}

/// One channel plane. Writes the extremum (without bias) and the winning
/// window index for every pixel.
fn plane_forward<T: Real>(
    op: MorphOp,
    x: &[T],
    w: &[T],
    h: usize,
    wd: usize,
    k: usize,
    out: &mut [T],
    arg: &mut [u16],
) {
    let r = (k / 2) as isize;
    for y in 0..h as isize {
        for xx in 0..wd as isize {
            let mut best = T::zero();
            let mut best_q = u16::MAX;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sy, sx) = op.source(y, xx, dy, dx);
                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                        continue;
                    }
                    let q = ((dy + r) * k as isize + (dx + r)) as usize;
                    let v = x[sy as usize * wd + sx as usize];
                    let cand = match op {
                        MorphOp::Dilate => v + w[q],
                        MorphOp::Erode => v - w[q],
                    };
                    let better = best_q == u16::MAX
                        || match op {
                            MorphOp::Dilate => cand > best,
                            MorphOp::Erode => cand < best,
                        };
                    if better {
                        best = cand;
                        best_q = q as u16;
                    }
                }
            }
            let i = y as usize * wd + xx as usize;
            out[i] = best;
            arg[i] = best_q;
        }
    }
}

/// Records a dilation or erosion of `x: (B, C, H, W)` by the surface
/// `w: (1, C, k, k)` with per-channel bias `beta: (1, C, 1, 1)`.
pub fn morph<T: Real>(g: &mut Graph<T>, op: MorphOp, x: Var, w: Var, beta: Var) -> Result<Var> {
    let (s, k) = check(g, op, x, w, beta)?;
    let plane = s.plane();
    let kk = k * k;
    let mut out = vec![T::zero(); s.numel()];
    let mut arg = vec![0u16; s.numel()];
    {
        let xv = g.value(x).data();
        let wv = g.value(w).data();
        let bv = g.value(beta).data();
        parallel::for_each_chunk2(&mut out, plane, &mut arg, plane, |i, o, a| {
            let c = i % s.c;
            plane_forward(
                op,
                &xv[i * plane..(i + 1) * plane],
                &wv[c * kk..(c + 1) * kk],
                s.h,
                s.w,
                k,
                o,
                a,
            );
            o.iter_mut().for_each(|v| *v += bv[c]);
        });
    }
    let value = Tensor::from_vec(s, out)?;
    let r = (k / 2) as isize;
    Ok(g.record(
        op.name(),
        &[x, w, beta],
        value,
        Box::new(move |ctx, grad| {
            let dx = ctx.needs[0].then(|| {
                let mut dx = vec![T::zero(); s.numel()];
                parallel::for_each_chunk(&mut dx, plane, |i, d| {
                    let a = &arg[i * plane..(i + 1) * plane];
                    let gp = &grad[i * plane..(i + 1) * plane];
                    for y in 0..s.h {
                        for xx in 0..s.w {
                            let p = y * s.w + xx;
                            let q = a[p] as isize;
                            let (dy, dxo) = (q / k as isize - r, q % k as isize - r);
                            let (sy, sx) = op.source(y as isize, xx as isize, dy, dxo);
                            d[sy as usize * s.w + sx as usize] += gp[p];
                        }
                    }
                });
                dx
            });
            let dw = ctx.needs[1].then(|| {
                let sign = match op {
                    MorphOp::Dilate => T::one(),
                    MorphOp::Erode => -T::one(),
                };
                let partial = parallel::map_range(s.b * s.c, |i| {
                    let mut acc = vec![T::zero(); kk];
                    let a = &arg[i * plane..(i + 1) * plane];
                    let gp = &grad[i * plane..(i + 1) * plane];
                    for (q, gv) in a.iter().zip(gp) {
                        acc[*q as usize] += *gv;
                    }
                    acc
                });
                let mut dw = vec![T::zero(); s.c * kk];
                for (i, p) in partial.into_iter().enumerate() {
                    let c = i % s.c;
                    for (d, v) in dw[c * kk..(c + 1) * kk].iter_mut().zip(p) {
                        *d += sign * v;
                    }
                }
                dw
            });
            let dbeta = ctx.needs[2].then(|| reduce_to_channels(grad, s));
            vec![dx, dw, dbeta]
        }),
    ))
}

pub fn dilate<T: Real>(g: &mut Graph<T>, x: Var, w: Var, beta: Var) -> Result<Var> {
    morph(g, MorphOp::Dilate, x, w, beta)
}

pub fn erode<T: Real>(g: &mut Graph<T>, x: Var, w: Var, beta: Var) -> Result<Var> {
    morph(g, MorphOp::Erode, x, w, beta)
}

/// `sigmoid(gate) * a + (1 - sigmoid(gate)) * b` with a per-channel gate.
pub fn gate_mix<T: Real>(g: &mut Graph<T>, a: Var, b: Var, gate: Var) -> Result<Var> {
    let s = g.shape(a);
    if g.shape(b) != s {
        return Err(Error::Shape {
            op: "gate_mix",
            dim: "numel",
            expected: s.numel(),
            got: g.shape(b).numel(),
        });
    }
    if g.shape(gate) != Shape::channels(s.c) {
        return Err(Error::Shape {
            op: "gate_mix",
            dim: "channels",
            expected: s.c,
            got: g.shape(gate).numel(),
        });
    }
    let sig: Vec<T> = g.value(gate).data().iter().map(|&v| sigmoid(v)).collect();
    let plane = s.plane();
    let one = T::one();
    let out: Vec<T> = {
        let (av, bv) = (g.value(a).data(), g.value(b).data());
        (0..s.numel())
            .map(|i| {
                let sc = sig[(i / plane) % s.c];
                sc * av[i] + (one - sc) * bv[i]
            })
            .collect()
    };
    let value = Tensor::from_vec(s, out)?;
    Ok(g.record(
        "gate_mix",
        &[a, b, gate],
        value,
        Box::new(move |ctx, grad| {
            let (av, bv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
            let n = grad.len();
            let chan = |i: usize| (i / plane) % s.c;
            let da = ctx.needs[0].then(|| (0..n).map(|i| grad[i] * sig[chan(i)]).collect());
            let db = ctx.needs[1].then(|| (0..n).map(|i| grad[i] * (one - sig[chan(i)])).collect());
            let dgate = ctx.needs[2].then(|| {
                let per: Vec<T> = (0..n).map(|i| grad[i] * (av[i] - bv[i])).collect();
                let mut d = reduce_to_channels(&per, s);
                for (c, v) in d.iter_mut().enumerate() {
                    *v *= sig[c] * (one - sig[c]);
                }
                d
            });
            vec![da, db, dgate]
        }),
    ))
}
