use crate::autodiff::elementwise::reduce_to_channels;
use crate::autodiff::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::parallel;
use crate::real::{matmul, matmul_at, matmul_bt, Real};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds one `(Cin, H, W)` image into a `(Cin*k*k, OH*OW)` matrix.
fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let n = g.cols();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix >= 0 && ix < g.w as isize {
                            src[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into an image.
fn col2im<T: Real>(cols: &[T], g: &Geometry, x: &mut [T]) {
    let n = g.cols();
    for ci in 0..g.cin {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn unfold<'a, T: Real>(x: &'a [T], g: &Geometry, buf: &'a mut Vec<T>) -> &'a [T] {
    if g.pointwise() {
        return x;
    }
    buf.resize(g.rows() * g.cols(), T::zero());
    im2col(x, g, buf);
    buf
}

impl<T: Real> Graph<T> {
    /// 2-D cross-correlation with zero padding.
    ///
    /// `weight` is `(Cout, Cin, k, k)`; `bias`, if given, is `(1, Cout, 1, 1)`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let xs = self.shape(input);
        let ws = self.shape(weight);
        if ws.c != xs.c {
            return Err(Error::Shape {
                op: "conv2d",
                dim: "input channels",
                expected: ws.c,
                got: xs.c,
            });
        }
        if ws.h != ws.w {
            return Err(Error::invalid("conv2d", format!("kernel must be square, got {ws:?}")));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be >= 1"));
        }
        let k = ws.h;
        if xs.h + 2 * padding < k || xs.w + 2 * padding < k {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel {k} larger than padded input {xs:?} (padding {padding})"),
            ));
        }
        if let Some(b) = bias {
            let bs = self.shape(b);
            if bs != Shape::channels(ws.b) {
                return Err(Error::Shape {
                    op: "conv2d",
                    dim: "bias",
                    expected: ws.b,
                    got: bs.numel(),
                });
            }
        }
        let geo = Geometry {
            cin: xs.c,
            h: xs.h,
            w: xs.w,
            k,
            stride,
            pad: padding,
            oh: (xs.h + 2 * padding - k) / stride + 1,
            ow: (xs.w + 2 * padding - k) / stride + 1,
        };
        let cout = ws.b;
        let out_shape = Shape::new(xs.b, cout, geo.oh, geo.ow);
        let mut out = vec![T::zero(); out_shape.numel()];
        {
            let x = self.value(input).data();
            let w = self.value(weight).data();
            let bias_v = bias.map(|b| self.value(b).data());
            let in_len = xs.c * xs.h * xs.w;
            parallel::for_each_chunk(&mut out, cout * geo.cols(), |b, o| {
                let mut buf = Vec::new();
                let cols = unfold(&x[b * in_len..(b + 1) * in_len], &geo, &mut buf);
                matmul(w, cols, o, cout, geo.rows(), geo.cols(), false);
                if let Some(bv) = bias_v {
                    for (co, row) in o.chunks_mut(geo.cols()).enumerate() {
                        row.iter_mut().for_each(|v| *v += bv[co]);
                    }
                }
            });
        }
        let value = Tensor::from_vec(out_shape, out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.record(
            "conv2d",
            &inputs,
            value,
            Box::new(move |ctx, g| {
                let x = ctx.inputs[0].data();
                let w = ctx.inputs[1].data();
                let in_len = geo.cin * geo.h * geo.w;
                let out_len = cout * geo.cols();
                let dx = ctx.needs[0].then(|| {
                    let mut dx = vec![T::zero(); x.len()];
                    parallel::for_each_chunk(&mut dx, in_len, |b, d| {
                        let gb = &g[b * out_len..(b + 1) * out_len];
                        if geo.pointwise() {
                            matmul_at(w, gb, d, geo.rows(), cout, geo.cols(), false);
                        } else {
                            let mut dcols = vec![T::zero(); geo.rows() * geo.cols()];
                            matmul_at(w, gb, &mut dcols, geo.rows(), cout, geo.cols(), false);
                            col2im(&dcols, &geo, d);
                        }
                    });
                    dx
                });
                let dw = ctx.needs[1].then(|| {
                    let partials = parallel::map_range(xs.b, |b| {
                        let mut buf = Vec::new();
                        let cols = unfold(&x[b * in_len..(b + 1) * in_len], &geo, &mut buf);
                        let mut p = vec![T::zero(); cout * geo.rows()];
                        let gb = &g[b * out_len..(b + 1) * out_len];
                        matmul_bt(gb, cols, &mut p, cout, geo.cols(), geo.rows(), false);
                        p
                    });
                    let mut dw = vec![T::zero(); w.len()];
                    for p in partials {
                        dw.iter_mut().zip(p).for_each(|(a, b)| *a += b);
                    }
                    dw
                });
                let mut grads = vec![dx, dw];
                if ctx.inputs.len() == 3 {
                    grads.push(ctx.needs[2].then(|| reduce_to_channels(g, out_shape)));
                }
                grads
            }),
        ))
    }
}
