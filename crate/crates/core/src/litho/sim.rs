use std::sync::Arc;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::grid::BinaryGrid;
use crate::litho::fft::FftConv;
use crate::litho::model::LithoModel;
use crate::parallel;
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Output of [`LithoSim::print`] for a batch of masks.
#[derive(Clone, Debug)]
pub struct PrintedResult<T: Real> {
    pub aerial: Tensor<T>,
    pub resist_soft: Tensor<T>,
    pub printed: Vec<BinaryGrid>,
    pub dose: f64,
}

/// Printed sets of one mask at the three dose levels.
#[derive(Clone, Debug, PartialEq)]
pub struct PrintBand {
    pub min: BinaryGrid,
    pub nominal: BinaryGrid,
    pub max: BinaryGrid,
}

/// A [`LithoModel`] bound to one tile size, with the kernel spectra
/// precomputed.
pub struct LithoSim<T: Real> {
    model: LithoModel,
    conv: Arc<FftConv<T>>,
    weights: Vec<f64>,
}

impl<T: Real> LithoSim<T> {
    pub fn new(model: LithoModel, h: usize, w: usize) -> Result<Self> {
        model.validate()?;
        let mut parts: Vec<&[f64]> = Vec::new();
        let mut weights = Vec::new();
        for k in &model.kernels {
            parts.push(&k.re);
            weights.push(k.weight);
            if let Some(im) = &k.im {
                parts.push(im);
                weights.push(k.weight);
            }
        }
        let conv = Arc::new(FftConv::new(h, w, model.size, &parts));
        Ok(LithoSim {
            model,
            conv,
            weights,
        })
    }

    pub fn model(&self) -> &LithoModel {
        &self.model
    }

    pub fn size(&self) -> (usize, usize) {
        self.conv.size()
    }

    fn check(&self, s: Shape) -> Result<()> {
        let (h, w) = self.size();
        for (dim, expected, got) in [("channels", 1, s.c), ("height", h, s.h), ("width", w, s.w)] {
            if expected != got {
                return Err(Error::Shape {
                    op: "litho",
                    dim,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Per plane: the field of every kernel component and `sum_k w_k a_k^2`.
    fn fields(&self, mask: &Tensor<T>) -> Vec<(Vec<Vec<T>>, Vec<T>)> {
        let s = mask.shape();
        let n = s.h * s.w;
        parallel::map_range(s.b, |b| {
            let plane = mask.plane(b, 0);
            let mut sum = vec![T::zero(); n];
            let mut fields = Vec::with_capacity(self.weights.len());
            for (k, &wk) in self.weights.iter().enumerate() {
                let mut a = vec![T::zero(); n];
                self.conv.forward(k, plane, &mut a);
                let wk = T::of(wk);
                for (s, &v) in sum.iter_mut().zip(&a) {
                    *s += wk * v * v;
                }
                fields.push(a);
            }
            (fields, sum)
        })
    }

    /// Aerial intensity `dose * sum_k w_k |M * h_k|^2` of a `(B, 1, H, W)`
    /// mask, without recording.
    pub fn aerial(&self, mask: &Tensor<T>, dose: f64) -> Result<Tensor<T>> {
        self.check(mask.shape())?;
        check_dose(dose)?;
        let d = T::of(dose);
        let data = self
            .fields(mask)
            .into_iter()
            .flat_map(|(_, s)| s.into_iter().map(move |v| d * v))
            .collect();
        Tensor::from_vec(mask.shape(), data)
    }

    /// Recorded aerial image, differentiable in the mask.
    pub fn aerial_var(&self, g: &mut Graph<T>, mask: Var, dose: f64) -> Result<Var> {
        let s = g.shape(mask);
        self.check(s)?;
        check_dose(dose)?;
        let d = T::of(dose);
        let per_plane = self.fields(g.value(mask));
        let mut data = Vec::with_capacity(s.numel());
        let mut saved = Vec::with_capacity(s.b);
        for (fields, sum) in per_plane {
            data.extend(sum.iter().map(|&v| d * v));
            saved.push(fields);
        }
        let value = Tensor::from_vec(s, data)?;
        let conv = Arc::clone(&self.conv);
        let weights = self.weights.clone();
        Ok(g.record(
            "aerial",
            &[mask],
            value,
            Box::new(move |_, grad| {
                let n = s.h * s.w;
                let mut dm = vec![T::zero(); s.numel()];
                parallel::for_each_chunk(&mut dm, n, |b, out| {
                    let gb = &grad[b * n..(b + 1) * n];
                    let mut tmp = vec![T::zero(); n];
                    let mut adj = vec![T::zero(); n];
                    for (k, &wk) in weights.iter().enumerate() {
                        let c = T::of(2.0 * wk) * d;
                        for ((t, &a), &gv) in tmp.iter_mut().zip(&saved[b][k]).zip(gb) {
                            *t = c * a * gv;
                        }
                        conv.adjoint(k, &tmp, &mut adj);
                        for (o, &v) in out.iter_mut().zip(&adj) {
                            *o += v;
                        }
                    }
                });
                vec![Some(dm)]
            }),
        ))
    }

    /// `sigmoid(alpha * (I - I_th))`.
    pub fn resist(&self, intensity: &Tensor<T>) -> Tensor<T> {
        let (a, t) = (T::of(self.model.steepness), T::of(self.model.threshold));
        intensity.map(|i| crate::autodiff::sigmoid(a * i - a * t))
    }

    pub fn resist_var(&self, g: &mut Graph<T>, intensity: Var) -> Var {
        let a = self.model.steepness;
        let z = g.affine(intensity, a, -a * self.model.threshold);
        g.sigmoid(z)
    }

    /// Soft printed image, the differentiable print used in training.
    pub fn print_soft(&self, g: &mut Graph<T>, mask: Var, dose: f64) -> Result<Var> {
        let i = self.aerial_var(g, mask, dose)?;
        Ok(self.resist_var(g, i))
    }

    pub fn print(&self, mask: &Tensor<T>, dose: f64) -> Result<PrintedResult<T>> {
        let aerial = self.aerial(mask, dose)?;
        let resist_soft = self.resist(&aerial);
        let s = mask.shape();
        let printed = (0..s.b)
            .map(|b| BinaryGrid::from_plane(resist_soft.plane(b, 0), s.h, s.w, 0.5))
            .collect();
        Ok(PrintedResult {
            aerial,
            resist_soft,
            printed,
            dose,
        })
    }

    /// Printed sets at `d_min`, 1 and `d_max` for every mask in the batch.
    /// The optics run once; dose only rescales the intensity.
    pub fn print_band(&self, mask: &Tensor<T>) -> Result<Vec<PrintBand>> {
        self.check(mask.shape())?;
        let s = mask.shape();
        let (a, t) = (T::of(self.model.steepness), T::of(self.model.threshold));
        let half = T::of(0.5);
        let grid = |sum: &[T], dose: f64| {
            let d = T::of(dose);
            BinaryGrid::from_fn(s.h, s.w, |y, x| {
                crate::autodiff::sigmoid(a * (d * sum[y * s.w + x]) - a * t) >= half
            })
        };
        Ok(self
            .fields(mask)
            .into_iter()
            .map(|(_, sum)| PrintBand {
                min: grid(&sum, self.model.dose_min),
                nominal: grid(&sum, 1.0),
                max: grid(&sum, self.model.dose_max),
            })
            .collect())
    }

    /// Printed set of one binary mask at nominal dose.
    pub fn print_grid(&self, mask: &BinaryGrid) -> Result<BinaryGrid> {
        Ok(self.print(&mask.to_tensor(), 1.0)?.printed.remove(0))
    }
}

fn check_dose(dose: f64) -> Result<()> {
    if dose > 0.0 && dose.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("aerial image", format!("dose must be positive, got {dose}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(h: usize, w: usize) -> LithoSim<f64> {
        LithoSim::new(LithoModel::gaussian(2.0), h, w).unwrap()
    }

    #[test]
    fn zero_mask_prints_nothing() {
        let s = sim(16, 16);
        let m = Tensor::zeros(Shape::new(1, 1, 16, 16));
        let r = s.print(&m, 1.0).unwrap();
        assert!(r.aerial.data().iter().all(|&v| v == 0.0));
        assert!(r.printed[0].is_empty());
        let band = &s.print_band(&m).unwrap()[0];
        assert!(band.max.is_empty());
    }

    #[test]
    fn all_ones_interior_equals_dose() {
        let s = sim(32, 32);
        let m = Tensor::ones(Shape::new(1, 1, 32, 32));
        let i = s.aerial(&m, 1.02).unwrap();
        // kernel radius 6: pixels at least 6 from the border see the full kernel
        for y in 6..26 {
            for x in 6..26 {
                assert!((i.at(0, 0, y, x) - 1.02).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn resist_midpoint_and_floor() {
        let s = sim(4, 4);
        let i = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![0.5, 0.0]).unwrap();
        let r = s.resist(&i);
        assert_eq!(r.data()[0], 0.5);
        assert!((r.data()[1] - 1.3887943864964021e-11).abs() < 1e-15);
    }

    #[test]
    fn complex_kernel_adds_imaginary_energy() {
        let mut m = LithoModel::gaussian(1.0);
        let k = m.size;
        m.kernels[0].im = Some(m.kernels[0].re.clone());
        let c = LithoSim::<f64>::new(m.clone(), 12, 12).unwrap();
        m.kernels[0].im = None;
        let r = LithoSim::<f64>::new(m, 12, 12).unwrap();
        let mask = Tensor::from_fn(Shape::new(1, 1, 12, 12), |_, _, y, x| ((y * 7 + x) % 3) as f64 / 2.0);
        let ic = c.aerial(&mask, 1.0).unwrap();
        let ir = r.aerial(&mask, 1.0).unwrap();
        for (a, b) in ic.data().iter().zip(ir.data()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
        assert_eq!(k % 2, 1);
    }

    #[test]
    fn wrong_tile_size_rejected() {
        let s = sim(16, 16);
        let m = Tensor::zeros(Shape::new(1, 1, 8, 16));
        assert!(s.aerial(&m, 1.0).is_err());
        assert!(s.aerial(&Tensor::zeros(Shape::new(1, 1, 16, 16)), 0.0).is_err());
    }
}
