use crate::autodiff::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

impl<T: Real> Graph<T> {
    /// Concatenates along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat_channels", "no inputs"));
        };
        let s0 = self.shape(first);
        for &p in parts {
            let s = self.shape(p);
            for (dim, e, got) in [("batch", s0.b, s.b), ("height", s0.h, s.h), ("width", s0.w, s.w)] {
                if e != got {
                    return Err(Error::Shape {
                        op: "concat_channels",
                        dim,
                        expected: e,
                        got,
                    });
                }
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p).c).collect();
        let total: usize = widths.iter().sum();
        let out_shape = Shape::new(s0.b, total, s0.h, s0.w);
        let plane = s0.plane();
        let mut out = Vec::with_capacity(out_shape.numel());
        for b in 0..s0.b {
            for (&p, &c) in parts.iter().zip(&widths) {
                let d = self.value(p).data();
                out.extend_from_slice(&d[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let value = Tensor::from_vec(out_shape, out)?;
        Ok(self.record(
            "concat_channels",
            parts,
            value,
            Box::new(move |ctx, g| {
                let mut grads: Vec<Vec<T>> = widths
                    .iter()
                    .map(|&c| Vec::with_capacity(s0.b * c * plane))
                    .collect();
                let mut off = 0;
                for _ in 0..s0.b {
                    for (gr, &c) in grads.iter_mut().zip(&widths) {
                        gr.extend_from_slice(&g[off..off + c * plane]);
                        off += c * plane;
                    }
                }
                grads
                    .into_iter()
                    .zip(&ctx.needs)
                    .map(|(gr, &n)| n.then_some(gr))
                    .collect()
            }),
        ))
    }

    /// Channels `[start, start + len)` of `a`.
    pub fn slice_channels(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if start + len > s.c || len == 0 {
            return Err(Error::invalid(
                "slice_channels",
                format!("range {start}..{} out of {} channels", start + len, s.c),
            ));
        }
        let plane = s.plane();
        let out_shape = Shape::new(s.b, len, s.h, s.w);
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(out_shape.numel());
        for b in 0..s.b {
            let from = (b * s.c + start) * plane;
            out.extend_from_slice(&d[from..from + len * plane]);
        }
        let value = Tensor::from_vec(out_shape, out)?;
        Ok(self.record(
            "slice_channels",
            &[a],
            value,
            Box::new(move |_, g| {
                let mut da = vec![T::zero(); s.numel()];
                for b in 0..s.b {
                    let from = (b * s.c + start) * plane;
                    da[from..from + len * plane]
                        .copy_from_slice(&g[b * len * plane..(b + 1) * len * plane]);
                }
                vec![Some(da)]
            }),
        ))
    }

    /// Splits into `groups` equal channel slices.
    pub fn split_channels(&mut self, a: Var, groups: usize) -> Result<Vec<Var>> {
        let c = self.shape(a).c;
        if groups == 0 || c % groups != 0 {
            return Err(Error::ChannelsNotDivisible {
                op: "split_channels",
                channels: c,
                groups,
            });
        }
        let width = c / groups;
        (0..groups)
            .map(|i| self.slice_channels(a, i * width, width))
            .collect()
    }

    /// `(B, C*r*r, H, W) -> (B, C, H*r, W*r)`; output `(c, y*r+i, x*r+j)`
    /// reads input channel `c*r*r + i*r + j` at `(y, x)`.
    pub fn pixel_shuffle(&mut self, a: Var, r: usize) -> Result<Var> {
        let s = self.shape(a);
        if r == 0 || s.c % (r * r) != 0 {
            return Err(Error::ChannelsNotDivisible {
                op: "pixel_shuffle",
                channels: s.c,
                groups: r * r,
            });
        }
        let out_shape = Shape::new(s.b, s.c / (r * r), s.h * r, s.w * r);
        let src_of = move |o: usize| -> usize {
            let x = o % out_shape.w;
            let y = (o / out_shape.w) % out_shape.h;
            let c = (o / out_shape.plane()) % out_shape.c;
            let b = o / (out_shape.plane() * out_shape.c);
            let ic = c * r * r + (y % r) * r + (x % r);
            s.index(b, ic, y / r, x / r)
        };
        let d = self.value(a).data();
        let out: Vec<T> = (0..out_shape.numel()).map(|o| d[src_of(o)]).collect();
        let value = Tensor::from_vec(out_shape, out)?;
        Ok(self.record(
            "pixel_shuffle",
            &[a],
            value,
            Box::new(move |_, g| {
                let mut da = vec![T::zero(); s.numel()];
                for (o, &gv) in g.iter().enumerate() {
                    da[src_of(o)] = gv;
                }
                vec![Some(da)]
            }),
        ))
    }
}
