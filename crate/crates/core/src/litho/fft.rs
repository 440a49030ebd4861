//! Same-size linear convolution of image planes with fixed kernels via
//! zero-padded 2-D FFTs, plus its adjoint.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::real::Real;

pub struct FftConv<T: Real> {
    h: usize,
    w: usize,
    k: usize,
    ph: usize,
    pw: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    /// One spectrum per real kernel component.
    spectra: Vec<Vec<Complex<T>>>,
}

impl<T: Real> FftConv<T> {
    /// `kernels` are `k x k` row-major real arrays, origin at the centre.
    pub fn new(h: usize, w: usize, k: usize, kernels: &[&[f64]]) -> Self {
        let ph = h + k - 1;
        let pw = w + k - 1;
        let mut planner = FftPlanner::new();
        let mut conv = FftConv {
            h,
            w,
            k,
            ph,
            pw,
            row_fwd: planner.plan_fft_forward(pw),
            row_inv: planner.plan_fft_inverse(pw),
            col_fwd: planner.plan_fft_forward(ph),
            col_inv: planner.plan_fft_inverse(ph),
            spectra: Vec::new(),
        };
        conv.spectra = kernels
            .iter()
            .map(|kern| {
                assert_eq!(kern.len(), k * k);
                let mut buf = vec![Complex::new(T::zero(), T::zero()); ph * pw];
                for y in 0..k {
                    for x in 0..k {
                        buf[y * pw + x] = Complex::new(T::of(kern[y * k + x]), T::zero());
                    }
                }
                conv.fft2(&mut buf, false);
                buf
            })
            .collect();
        conv
    }

    pub fn components(&self) -> usize {
        self.spectra.len()
    }

    pub fn size(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    fn fft2(&self, buf: &mut [Complex<T>], inverse: bool) {
        let (rows, cols) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        rows.process(buf);
        let mut t = transpose(buf, self.ph, self.pw);
        cols.process(&mut t);
        let back = transpose(&t, self.pw, self.ph);
        buf.copy_from_slice(&back);
    }

    fn offset(&self) -> usize {
        (self.k - 1) / 2
    }

    /// `out(y, x) = sum_{i,j} x(y - i + c, x - j + c) * kernel(i, j)`,
    /// zero outside the image.
    pub fn forward(&self, comp: usize, input: &[T], out: &mut [T]) {
        let (ph, pw) = (self.ph, self.pw);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); ph * pw];
        for y in 0..self.h {
            for x in 0..self.w {
                buf[y * pw + x].re = input[y * self.w + x];
            }
        }
        self.fft2(&mut buf, false);
        for (b, s) in buf.iter_mut().zip(&self.spectra[comp]) {
            *b = *b * *s;
        }
        self.fft2(&mut buf, true);
        let norm = T::one() / T::of((ph * pw) as f64);
        let c = self.offset();
        for y in 0..self.h {
            for x in 0..self.w {
                out[y * self.w + x] = buf[(y + c) * pw + x + c].re * norm;
            }
        }
    }

    /// Adjoint of [`FftConv::forward`] (correlation with the kernel).
    pub fn adjoint(&self, comp: usize, grad: &[T], out: &mut [T]) {
        let (ph, pw) = (self.ph, self.pw);
        let c = self.offset();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); ph * pw];
        for y in 0..self.h {
            for x in 0..self.w {
                buf[(y + c) * pw + x + c].re = grad[y * self.w + x];
            }
        }
        self.fft2(&mut buf, false);
        for (b, s) in buf.iter_mut().zip(&self.spectra[comp]) {
            *b = *b * s.conj();
        }
        self.fft2(&mut buf, true);
        let norm = T::one() / T::of((ph * pw) as f64);
        for y in 0..self.h {
            for x in 0..self.w {
                out[y * self.w + x] = buf[y * pw + x].re * norm;
            }
        }
    }
}

fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(src[r * cols + c]);
        }
    }
    out
}
