#![allow(dead_code)]

use morphopc::grid::BinaryGrid;
use morphopc::metrics::{sample_edges, Edge, EpeConfig, Side};
use morphopc::{Shape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Distinct values spaced `gap` apart in random order, centred on zero.
pub fn tie_free(shape: Shape, gap: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.numel();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * gap).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v).unwrap()
}

pub fn uniform(shape: Shape, lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(lo..hi))
}

pub fn random_grid(h: usize, w: usize, p: f64, rng: &mut impl Rng) -> BinaryGrid {
    BinaryGrid::from_fn(h, w, |_, _| rng.random_bool(p))
}

/// Six-loop cross-correlation with zero padding.
pub fn conv_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let [b, cin, h, wd] = x.shape().dims();
    let [cout, _, k, _] = w.shape().dims();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    Tensor::from_fn(Shape::new(b, cout, oh, ow), |n, o, y, xx| {
        let mut s = bias.map_or(0.0, |bb| bb[o]);
        for c in 0..cin {
            for i in 0..k {
                for j in 0..k {
                    let iy = (y * stride + i) as isize - pad as isize;
                    let ix = (xx * stride + j) as isize - pad as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                        s += x.at(n, c, iy as usize, ix as usize) * w.at(o, c, i, j);
                    }
                }
            }
        }
        s
    })
}

/// Per-pixel max-plus dilation (`erode = false`) or min-plus erosion.
pub fn morph_oracle(x: &Tensor<f64>, w: &Tensor<f64>, beta: &[f64], erode: bool) -> Tensor<f64> {
    let [_, _, h, wd] = x.shape().dims();
    let k = w.shape().h;
    let r = (k / 2) as isize;
    Tensor::from_fn(x.shape(), |n, c, y, xx| {
        let mut best = if erode { f64::INFINITY } else { f64::NEG_INFINITY };
        for i in 0..k {
            for j in 0..k {
                let (qy, qx) = (i as isize - r, j as isize - r);
                let (sy, sx) = if erode {
                    (y as isize + qy, xx as isize + qx)
                } else {
                    (y as isize - qy, xx as isize - qx)
                };
                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                    continue;
                }
                let v = x.at(n, c, sy as usize, sx as usize);
                let wq = w.at(0, c, i, j);
                best = if erode { best.min(v - wq) } else { best.max(v + wq) };
            }
        }
        best + beta[c]
    })
}

/// Position of a boundary edge along its normal axis, and its fixed
/// coordinate on the other axis.
fn edge_line(e: &Edge) -> (bool, i64, i64) {
    let (y, x) = (e.y as i64, e.x as i64);
    match e.side {
        Side::Top => (true, y, x),
        Side::Bottom => (true, y + 1, x),
        Side::Left => (false, x, y),
        Side::Right => (false, x + 1, y),
    }
}

/// Every boundary edge of `g`, found by scanning all pixels and sides.
pub fn all_edges(g: &BinaryGrid) -> Vec<Edge> {
    let mut out = Vec::new();
    for y in 0..g.height() {
        for x in 0..g.width() {
            for side in [Side::Top, Side::Right, Side::Bottom, Side::Left] {
                let (dy, dx) = side.normal();
                if g.get(y, x) && !g.get_signed(y as isize + dy, x as isize + dx) {
                    out.push(Edge { y, x, side });
                }
            }
        }
    }
    out
}

/// Brute-force distance from a target edge to the nearest collinear
/// printed edge on the perpendicular line through it.
pub fn brute_edge_distance(printed_edges: &[Edge], e: &Edge) -> Option<usize> {
    let (horizontal, pos, fixed) = edge_line(e);
    printed_edges
        .iter()
        .filter_map(|p| {
            let (h2, pos2, fixed2) = edge_line(p);
            (h2 == horizontal && fixed2 == fixed).then_some((pos2 - pos).unsigned_abs() as usize)
        })
        .min()
}

/// Surface whose offsets carry distinct fractional parts of `gap`, so that
/// `x + w(q)` never ties across offsets when `x` sits on a `gap` lattice.
pub fn tie_free_surface(c: usize, k: usize, gap: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let kk = k * k;
    let step = gap / (kk + 1) as f64;
    Tensor::from_fn(Shape::new(1, c, k, k), |_, _, i, j| {
        rng.random_range(-3i32..=3) as f64 * gap + (i * k + j) as f64 * step
    })
}

/// EPE count using the library's sample points and the brute-force
/// distance scan.
pub fn brute_epe(printed: &BinaryGrid, target: &BinaryGrid, cfg: &EpeConfig) -> usize {
    let edges = all_edges(printed);
    sample_edges(target, cfg)
        .iter()
        .filter(|e| brute_edge_distance(&edges, e).is_none_or(|d| d > cfg.threshold))
        .count()
}

fn rect(h: usize, w: usize, y0: isize, x0: isize, y1: isize, x1: isize) -> BinaryGrid {
    BinaryGrid::from_fn(h, w, |y, x| {
        let (y, x) = (y as isize, x as isize);
        y >= y0 && y < y1 && x >= x0 && x < x1
    })
}

/// Displacement fixtures on a 128x128 tile: a 40x40 square target against
/// printed copies moved or resized by threshold +- 1, plus two shapes.
pub fn epe_fixtures(cfg: &EpeConfig) -> Vec<(String, BinaryGrid, BinaryGrid)> {
    let t = cfg.threshold as isize;
    let n = 128;
    let sq = rect(n, n, 44, 44, 84, 84);
    let mut out = Vec::new();
    for d in [t - 1, t + 1] {
        out.push((format!("shift_x_{d}"), sq.clone(), rect(n, n, 44, 44 + d, 84, 84 + d)));
        out.push((format!("shift_y_{d}"), sq.clone(), rect(n, n, 44 - d, 44, 84 - d, 84)));
        out.push((format!("grow_{d}"), sq.clone(), rect(n, n, 44 - d, 44 - d, 84 + d, 84 + d)));
    }
    out.push((format!("erode_{}", t - 1), sq.clone(), rect(n, n, 44 + t - 1, 44 + t - 1, 84 - t + 1, 84 - t + 1)));
    out.push((format!("diagonal_{}", t + 1), sq.clone(), rect(n, n, 44 + t + 1, 44 + t + 1, 84 + t + 1, 84 + t + 1)));
    let mut l = rect(n, n, 20, 20, 100, 44);
    l.fill_rect(76, 20, 100, 100, true);
    let mut lp = rect(n, n, 20, 20 + t + 1, 100 - t + 1, 44 + t + 1);
    lp.fill_rect((76 - t + 1) as usize, (20 + t + 1) as usize, (100 - t + 1) as usize, 100, true);
    out.push(("l_shape_moved".into(), l, lp));
    out.push(("empty_print".into(), sq, BinaryGrid::new(n, n)));
    out
}
