use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BinaryGrid;
use crate::metrics::{contour_loops, Rectangle, Side};

/// Relative frequency of each shape kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeMix {
    pub bar: f64,
    pub l_shape: f64,
    pub t_shape: f64,
    pub tip_to_tip: f64,
    pub via_array: f64,
}

impl Default for ShapeMix {
    fn default() -> Self {
        ShapeMix {
            bar: 0.3,
            l_shape: 0.2,
            t_shape: 0.15,
            tip_to_tip: 0.2,
            via_array: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Bar,
    LShape,
    TShape,
    TipToTip,
    ViaArray,
}

impl ShapeMix {
    fn weights(&self) -> [(ShapeKind, f64); 5] {
        [
            (ShapeKind::Bar, self.bar),
            (ShapeKind::LShape, self.l_shape),
            (ShapeKind::TShape, self.t_shape),
            (ShapeKind::TipToTip, self.tip_to_tip),
            (ShapeKind::ViaArray, self.via_array),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutSpec {
    pub size: usize,
    pub min_width: usize,
    pub max_width: usize,
    pub min_spacing: usize,
    pub max_length: usize,
    /// Shapes stay this far from the tile border.
    pub margin: usize,
    pub max_shapes: usize,
    pub mix: ShapeMix,
    pub seed: u64,
    pub pitch_nm: f64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        LayoutSpec {
            size: 128,
            min_width: 16,
            max_width: 24,
            min_spacing: 16,
            max_length: 80,
            margin: 8,
            max_shapes: 4,
            mix: ShapeMix::default(),
            seed: 7,
            pitch_nm: 4.0,
        }
    }
}

impl LayoutSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("layout spec", m));
        if self.min_width < 4 {
            return bad(format!("min width must be >= 4 px, got {}", self.min_width));
        }
        if self.max_width < self.min_width {
            return bad("max width below min width".into());
        }
        if self.min_spacing == 0 {
            return bad("min spacing must be positive".into());
        }
        let usable = self.size.saturating_sub(2 * self.margin);
        if 2 * self.max_width > usable || self.max_length < 3 * self.max_width {
            return bad(format!(
                "features up to {} px wide do not fit a {} px tile with margin {}",
                self.max_width, self.size, self.margin
            ));
        }
        if self.max_length > usable {
            return bad(format!("max length {} exceeds usable width {usable}", self.max_length));
        }
        let w = self.mix.weights();
        if w.iter().any(|(_, p)| !(*p >= 0.0)) || w.iter().all(|(_, p)| *p == 0.0) {
            return bad("shape mix needs non-negative weights, not all zero".into());
        }
        Ok(())
    }
}

/// Closed rectilinear vertex loop on pixel corners, `(x, y)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polygon(pub Vec<(i64, i64)>);

impl Polygon {
    /// Shoelace area.
    pub fn area(&self) -> i64 {
        let v = &self.0;
        let n = v.len();
        let twice: i64 = (0..n)
            .map(|i| {
                let (x0, y0) = v[i];
                let (x1, y1) = v[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        twice.abs() / 2
    }

    /// Sets every pixel whose centre lies inside (even-odd rule).
    pub fn rasterize_into(&self, g: &mut BinaryGrid) {
        let v = &self.0;
        let n = v.len();
        for y in 0..g.height() {
            let yc = y as f64 + 0.5;
            let mut xs: Vec<i64> = (0..n)
                .filter_map(|i| {
                    let (x0, y0) = v[i];
                    let (x1, y1) = v[(i + 1) % n];
                    let (lo, hi) = (y0.min(y1) as f64, y0.max(y1) as f64);
                    (x0 == x1 && lo < yc && yc < hi).then_some(x0)
                })
                .collect();
            xs.sort_unstable();
            for pair in xs.chunks_exact(2) {
                let lo = pair[0].clamp(0, g.width() as i64) as usize;
                let hi = pair[1].clamp(0, g.width() as i64) as usize;
                for x in lo..hi {
                    g.set(y, x, true);
                }
            }
        }
    }

    /// Outer boundary of a 4-connected pixel set, clockwise, one vertex
    /// per corner.
    pub fn trace(g: &BinaryGrid) -> Option<Polygon> {
        let lp = contour_loops(g).into_iter().next()?;
        let corner = |e: &crate::metrics::Edge| {
            let (x, y) = (e.x as i64, e.y as i64);
            match e.side {
                Side::Top => (x, y),
                Side::Right => (x + 1, y),
                Side::Bottom => (x + 1, y + 1),
                Side::Left => (x, y + 1),
            }
        };
        let n = lp.len();
        let verts = (0..n)
            .filter(|&i| lp[i].side != lp[(i + n - 1) % n].side)
            .map(|i| corner(&lp[i]))
            .collect();
        Some(Polygon(verts))
    }

    pub fn to_line(&self) -> String {
        self.0
            .iter()
            .map(|(x, y)| format!("{x},{y}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_line(line: &str) -> std::result::Result<Polygon, String> {
        let pts = line
            .split_whitespace()
            .map(|tok| {
                let (x, y) = tok.split_once(',').ok_or_else(|| format!("expected x,y, got {tok:?}"))?;
                let p = |s: &str| s.parse::<i64>().map_err(|e| format!("{s:?}: {e}"));
                Ok((p(x)?, p(y)?))
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        if pts.len() < 4 {
            return Err(format!("polygon needs at least 4 vertices, got {}", pts.len()));
        }
        let n = pts.len();
        for i in 0..n {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            if (a.0 != b.0) == (a.1 != b.1) {
                return Err(format!("edge {a:?} -> {b:?} is not axis-aligned"));
            }
        }
        Ok(Polygon(pts))
    }
}

/// A synthetic target pattern with its source polygons.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutTile {
    pub id: String,
    pub target: BinaryGrid,
    pub polygons: Vec<Polygon>,
    pub pitch_nm: f64,
}

pub fn rasterize(polygons: &[Polygon], h: usize, w: usize) -> BinaryGrid {
    let mut g = BinaryGrid::new(h, w);
    for p in polygons {
        p.rasterize_into(&mut g);
    }
    g
}

/// Euclidean gap between two rectangles (0 if they touch or overlap).
pub fn rect_gap(a: &Rectangle, b: &Rectangle) -> f64 {
    let gx = (b.x0 as f64 - a.x1 as f64).max(a.x0 as f64 - b.x1 as f64).max(0.0);
    let gy = (b.y0 as f64 - a.y1 as f64).max(a.y0 as f64 - b.y1 as f64).max(0.0);
    gx.hypot(gy)
}

fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> Rectangle {
    Rectangle { x0, y0, x1, y1 }
}

/// Polygons of one shape in local coordinates, each as a rectangle union.
fn make_shape(kind: ShapeKind, spec: &LayoutSpec, r: &mut ChaCha8Rng) -> Vec<Vec<Rectangle>> {
    let w = r.random_range(spec.min_width..=spec.max_width);
    let len = |r: &mut ChaCha8Rng, lo: usize| r.random_range(lo.min(spec.max_length)..=spec.max_length);
    let gap = |r: &mut ChaCha8Rng| r.random_range(spec.min_spacing..=spec.min_spacing + 8);
    let shape = match kind {
        ShapeKind::Bar => vec![vec![rect(0, 0, len(r, 3 * w), w)]],
        ShapeKind::LShape => {
            let (a, b) = (len(r, 2 * w), len(r, 2 * w));
            vec![vec![rect(0, 0, w, a), rect(0, a - w, b, a)]]
        }
        ShapeKind::TShape => {
            let b = len(r, 3 * w);
            let a = len(r, 2 * w);
            let s0 = (b - w) / 2;
            vec![vec![rect(0, 0, b, w), rect(s0, w, s0 + w, a)]]
        }
        ShapeKind::TipToTip => {
            let g = gap(r);
            let room = (spec.max_length.saturating_sub(g) / 2).max(2 * w);
            let l1 = r.random_range(2 * w..=room);
            let l2 = r.random_range(2 * w..=room);
            vec![vec![rect(0, 0, l1, w)], vec![rect(l1 + g, 0, l1 + g + l2, w)]]
        }
        ShapeKind::ViaArray => {
            let g = gap(r);
            let p = w + g;
            let fit = ((spec.max_length + g) / p).clamp(2, 3);
            let nx = r.random_range(1..=fit);
            let ny = r.random_range(if nx == 1 { 2 } else { 1 }..=fit);
            let mut polys = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    polys.push(vec![rect(i * p, j * p, i * p + w, j * p + w)]);
                }
            }
            polys
        }
    };
    orient(shape, r)
}

/// Random transpose and mirror flips, keeping the bounding box at the origin.
fn orient(shape: Vec<Vec<Rectangle>>, rng: &mut impl Rng) -> Vec<Vec<Rectangle>> {
    let (transpose, fx, fy) = (rng.random_bool(0.5), rng.random_bool(0.5), rng.random_bool(0.5));
    let all = || shape.iter().flatten();
    let bw = all().map(|r| r.x1).max().unwrap_or(0);
    let bh = all().map(|r| r.y1).max().unwrap_or(0);
    shape
        .iter()
        .map(|poly| {
            poly.iter()
                .map(|r| {
                    let mut r = *r;
                    if fx {
                        r = rect(bw - r.x1, r.y0, bw - r.x0, r.y1);
                    }
                    if fy {
                        r = rect(r.x0, bh - r.y1, r.x1, bh - r.y0);
                    }
                    if transpose {
                        r = rect(r.y0, r.x0, r.y1, r.x1);
                    }
                    r
                })
                .collect()
        })
        .collect()
}

/// Tile `index` of the dataset defined by `spec`; independent of every
/// other tile.
pub fn generate_tile(spec: &LayoutSpec, index: usize) -> Result<LayoutTile> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let kinds: Vec<(ShapeKind, f64)> = spec.mix.weights().into_iter().filter(|(_, p)| *p > 0.0).collect();
    let n = spec.size;
    let mut placed: Vec<Vec<Rectangle>> = Vec::new();
    let target_shapes = rng.random_range(1..=spec.max_shapes.max(1));
    let mut shapes = 0;
    for _ in 0..40 {
        if shapes == target_shapes {
            break;
        }
        let kind = kinds.choose_weighted(&mut rng, |(_, p)| *p).map(|k| k.0).unwrap();
        let local = make_shape(kind, spec, &mut rng);
        let bw = local.iter().flatten().map(|r| r.x1).max().unwrap();
        let bh = local.iter().flatten().map(|r| r.y1).max().unwrap();
        if bw + 2 * spec.margin > n || bh + 2 * spec.margin > n {
            continue;
        }
        let ox = rng.random_range(spec.margin..=n - spec.margin - bw);
        let oy = rng.random_range(spec.margin..=n - spec.margin - bh);
        let moved: Vec<Vec<Rectangle>> = local
            .iter()
            .map(|p| p.iter().map(|r| rect(r.x0 + ox, r.y0 + oy, r.x1 + ox, r.y1 + oy)).collect())
            .collect();
        let clear = moved.iter().flatten().all(|a| {
            placed
                .iter()
                .flatten()
                .all(|b| rect_gap(a, b) >= spec.min_spacing as f64)
        });
        if clear {
            placed.extend(moved);
            shapes += 1;
        }
    }
    let mut polygons = Vec::with_capacity(placed.len());
    for rects in &placed {
        let mut g = BinaryGrid::new(n, n);
        for r in rects {
            g.fill_rect(r.y0, r.x0, r.y1, r.x1, true);
        }
        polygons.push(Polygon::trace(&g).expect("non-empty shape"));
    }
    Ok(LayoutTile {
        id: format!("tile{index:04}"),
        target: rasterize(&polygons, n, n),
        polygons,
        pitch_nm: spec.pitch_nm,
    })
}

pub fn generate_tiles(spec: &LayoutSpec, count: usize) -> Result<Vec<LayoutTile>> {
    spec.validate()?;
    crate::parallel::map_range(count, |i| generate_tile(spec, i))
        .into_iter()
        .collect()
}
