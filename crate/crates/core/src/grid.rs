use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// A binary image, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryGrid {
    h: usize,
    w: usize,
    data: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(h: usize, w: usize) -> Self {
        BinaryGrid {
            h,
            w,
            data: vec![false; h * w],
        }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::Shape {
                op: "binary grid",
                dim: "numel",
                expected: h * w,
                got: data.len(),
            });
        }
        Ok(BinaryGrid { h, w, data })
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x));
            }
        }
        BinaryGrid { h, w, data }
    }

    /// Pixels `>= threshold` are on.
    pub fn from_plane<T: Real>(plane: &[T], h: usize, w: usize, threshold: f64) -> Self {
        assert_eq!(plane.len(), h * w);
        let t = T::of(threshold);
        BinaryGrid {
            h,
            w,
            data: plane.iter().map(|&v| v >= t).collect(),
        }
    }

    pub fn from_tensor<T: Real>(t: &Tensor<T>, batch: usize, threshold: f64) -> Self {
        let s = t.shape();
        Self::from_plane(t.plane(batch, 0), s.h, s.w, threshold)
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            Shape::new(1, 1, self.h, self.w),
            self.data.iter().map(|&b| if b { T::one() } else { T::zero() }).collect(),
        )
        .expect("shape")
    }

    /// Stacks grids of equal size into a `(N, 1, H, W)` tensor.
    pub fn stack<T: Real>(grids: &[&BinaryGrid]) -> Tensor<T> {
        let (h, w) = (grids[0].h, grids[0].w);
        let mut data = Vec::with_capacity(grids.len() * h * w);
        for g in grids {
            assert_eq!((g.h, g.w), (h, w));
            data.extend(g.data.iter().map(|&b| if b { T::one() } else { T::zero() }));
        }
        Tensor::from_vec(Shape::new(grids.len(), 1, h, w), data).expect("shape")
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x]
    }

    /// Out-of-bounds reads are off.
    #[inline]
    pub fn get_signed(&self, y: isize, x: isize) -> bool {
        y >= 0 && x >= 0 && (y as usize) < self.h && (x as usize) < self.w && self.get(y as usize, x as usize)
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.w + x] = v;
    }

    pub fn fill_rect(&mut self, y0: usize, x0: usize, y1: usize, x1: usize, v: bool) {
        for y in y0..y1.min(self.h) {
            for x in x0..x1.min(self.w) {
                self.set(y, x, v);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn same_size(&self, other: &BinaryGrid, op: &'static str) -> Result<()> {
        if self.h != other.h {
            return Err(Error::Shape {
                op,
                dim: "height",
                expected: self.h,
                got: other.h,
            });
        }
        if self.w != other.w {
            return Err(Error::Shape {
                op,
                dim: "width",
                expected: self.w,
                got: other.w,
            });
        }
        Ok(())
    }

    pub fn xor_count(&self, other: &BinaryGrid) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn is_subset_of(&self, other: &BinaryGrid) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn not(&self) -> BinaryGrid {
        BinaryGrid {
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    /// Moves content by `(dy, dx)`; vacated pixels are off.
    pub fn shifted(&self, dy: isize, dx: isize) -> BinaryGrid {
        BinaryGrid::from_fn(self.h, self.w, |y, x| self.get_signed(y as isize - dy, x as isize - dx))
    }

    /// Mirror left-right.
    pub fn flipped_x(&self) -> BinaryGrid {
        BinaryGrid::from_fn(self.h, self.w, |y, x| self.get(y, self.w - 1 - x))
    }

    /// Mirror top-bottom.
    pub fn flipped_y(&self) -> BinaryGrid {
        BinaryGrid::from_fn(self.h, self.w, |y, x| self.get(self.h - 1 - y, x))
    }
}

impl std::fmt::Debug for BinaryGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryGrid {}x{} ({} on)", self.h, self.w, self.count())?;
        if self.h <= 32 && self.w <= 64 {
            for y in 0..self.h {
                let row: String = (0..self.w).map(|x| if self.get(y, x) { '#' } else { '.' }).collect();
                writeln!(f, "{row}")?;
            }
        }
        Ok(())
    }
}
