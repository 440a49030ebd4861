use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BinaryGrid;

/// Edge-placement-error sampling parameters, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpeConfig {
    pub spacing: usize,
    pub threshold: usize,
    pub margin: usize,
    /// Samples closer than this many edges to a contour corner are skipped.
    pub corner: usize,
}

impl Default for EpeConfig {
    fn default() -> Self {
        EpeConfig {
            spacing: 40,
            threshold: 15,
            margin: 8,
            corner: 15,
        }
    }
}

impl EpeConfig {
    /// Defaults (40 px spacing, 15 px threshold at 1 nm/px) rescaled to
    /// `pitch_nm` nanometres per pixel.
    pub fn for_pitch(pitch_nm: f64) -> Self {
        let px = |nm: f64| ((nm / pitch_nm).round() as usize).max(1);
        EpeConfig {
            spacing: px(40.0),
            threshold: px(15.0),
            margin: 8,
            corner: px(15.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spacing == 0 || self.threshold == 0 {
            return Err(Error::invalid("epe config", "spacing and threshold must be >= 1"));
        }
        Ok(())
    }
}

/// Side of a pixel. The outward normal of side `s` is `NORMALS[s]`;
/// walking the contour clockwise, an edge on side `s` runs along
/// `NORMALS[(s + 1) % 4]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Top = 0,
    Right = 1,
    Bottom = 2,
    Left = 3,
}

const SIDES: [Side; 4] = [Side::Top, Side::Right, Side::Bottom, Side::Left];
const NORMALS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

impl Side {
    pub fn normal(self) -> (isize, isize) {
        NORMALS[self as usize]
    }
}

/// A unit boundary edge: an on pixel and the side facing an off pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub y: usize,
    pub x: usize,
    pub side: Side,
}

fn is_boundary(g: &BinaryGrid, y: usize, x: usize, s: Side) -> bool {
    let (dy, dx) = s.normal();
    g.get(y, x) && !g.get_signed(y as isize + dy, x as isize + dx)
}

/// Closed boundary loops of the on-set (4-connected), each traced
/// clockwise. Loops are ordered by their first edge, which is the
/// smallest unvisited (row, column, side) in row-major order.
pub fn contour_loops(g: &BinaryGrid) -> Vec<Vec<Edge>> {
    let (h, w) = (g.height(), g.width());
    let mut seen = vec![false; h * w * 4];
    let mut loops = Vec::new();
    for y in 0..h {
        for x in 0..w {
            for s in SIDES {
                if seen[(y * w + x) * 4 + s as usize] || !is_boundary(g, y, x, s) {
                    continue;
                }
                let start = Edge { y, x, side: s };
                let mut cur = start;
                let mut lp = Vec::new();
                loop {
                    seen[(cur.y * w + cur.x) * 4 + cur.side as usize] = true;
                    lp.push(cur);
                    cur = next_edge(g, cur);
                    if cur == start {
                        break;
                    }
                }
                loops.push(lp);
            }
        }
    }
    loops
}

fn next_edge(g: &BinaryGrid, e: Edge) -> Edge {
    let s = e.side as usize;
    let (ty, tx) = NORMALS[(s + 1) % 4];
    let (ny, nx) = NORMALS[s];
    let (y, x) = (e.y as isize, e.x as isize);
    let (qy, qx) = (y + ty, x + tx);
    if !g.get_signed(qy, qx) {
        return Edge {
            side: SIDES[(s + 1) % 4],
            ..e
        };
    }
    if !g.get_signed(qy + ny, qx + nx) {
        return Edge {
            y: qy as usize,
            x: qx as usize,
            side: e.side,
        };
    }
    Edge {
        y: (qy + ny) as usize,
        x: (qx + nx) as usize,
        side: SIDES[(s + 3) % 4],
    }
}

/// For each edge of a loop, the number of edges between it and the nearer
/// end of its straight run.
fn corner_distances(lp: &[Edge]) -> Vec<usize> {
    let n = lp.len();
    let Some(start) = (0..n).find(|&i| lp[i].side != lp[(i + n - 1) % n].side) else {
        return vec![usize::MAX; n];
    };
    let mut out = vec![0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && lp[(start + j) % n].side == lp[(start + i) % n].side {
            j += 1;
        }
        for k in i..j {
            out[(start + k) % n] = (k - i).min(j - 1 - k);
        }
        i = j;
    }
    out
}

/// Sample points: every `spacing`-th edge of each loop, starting with the
/// loop's first edge, dropping edges within `corner` edges of a contour
/// corner and edges whose pixel lies within `margin` of the tile border.
pub fn sample_edges(target: &BinaryGrid, cfg: &EpeConfig) -> Vec<Edge> {
    let (h, w, m) = (target.height(), target.width(), cfg.margin);
    contour_loops(target)
        .into_iter()
        .flat_map(|lp| {
            let dist = corner_distances(&lp);
            lp.into_iter()
                .zip(dist)
                .step_by(cfg.spacing.max(1))
                .filter(|&(_, d)| d >= cfg.corner)
                .map(|(e, _)| e)
        })
        .filter(|e| e.y >= m && e.x >= m && e.y + m < h && e.x + m < w)
        .collect()
}

/// Distance along the normal of `e` from the edge to the nearest edge of
/// `printed` on the same line, or `None` if the line has none.
pub fn edge_distance(printed: &BinaryGrid, e: Edge) -> Option<usize> {
    let (dy, dx) = e.side.normal();
    let (h, w) = (printed.height() as isize, printed.width() as isize);
    let at = |j: isize| printed.get_signed(e.y as isize + j * dy, e.x as isize + j * dx);
    let inside = |j: isize| {
        let (y, x) = (e.y as isize + j * dy, e.x as isize + j * dx);
        (0..h).contains(&y) && (0..w).contains(&x)
    };
    // the transition at offset j lies between pixels j and j + 1
    let crosses = |j: isize| (inside(j) || inside(j + 1)) && at(j) != at(j + 1);
    let reach = h.max(w) + 1;
    (0..=reach).find(|&d| crosses(d) || crosses(-d)).map(|d| d as usize)
}

/// Number of sampled target-contour points whose printed edge is more
/// than `threshold` pixels away. An empty target has no samples.
pub fn epe_violations(printed: &BinaryGrid, target: &BinaryGrid, cfg: &EpeConfig) -> Result<usize> {
    printed.same_size(target, "epe")?;
    cfg.validate()?;
    Ok(sample_edges(target, cfg)
        .into_iter()
        .filter(|&e| edge_distance(printed, e).is_none_or(|d| d > cfg.threshold))
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_loop_is_clockwise_perimeter() {
        let mut g = BinaryGrid::new(8, 8);
        g.fill_rect(2, 2, 5, 6, true);
        let loops = contour_loops(&g);
        assert_eq!(loops.len(), 1);
        let lp = &loops[0];
        assert_eq!(lp.len(), 2 * (3 + 4));
        assert_eq!(lp[0], Edge { y: 2, x: 2, side: Side::Top });
        assert_eq!(lp[1], Edge { y: 2, x: 3, side: Side::Top });
        assert_eq!(lp[4], Edge { y: 2, x: 5, side: Side::Right });
    }

    #[test]
    fn hole_forms_second_loop() {
        let mut g = BinaryGrid::new(9, 9);
        g.fill_rect(1, 1, 8, 8, true);
        g.set(4, 4, false);
        let loops = contour_loops(&g);
        assert_eq!(loops.len(), 2);
        assert_eq!(loops[1].len(), 4);
    }

    #[test]
    fn diagonal_pixels_are_separate_loops() {
        let g = BinaryGrid::from_fn(4, 4, |y, x| (y, x) == (1, 1) || (y, x) == (2, 2));
        assert_eq!(contour_loops(&g).len(), 2);
    }

    #[test]
    fn identical_images_have_no_violations() {
        let mut g = BinaryGrid::new(64, 64);
        g.fill_rect(10, 12, 40, 50, true);
        let cfg = EpeConfig { spacing: 3, threshold: 1, margin: 0, corner: 0 };
        assert_eq!(epe_violations(&g, &g, &cfg).unwrap(), 0);
    }

    #[test]
    fn empty_target_has_no_samples() {
        let a = BinaryGrid::new(16, 16);
        let mut b = BinaryGrid::new(16, 16);
        b.fill_rect(0, 0, 16, 16, true);
        assert_eq!(epe_violations(&b, &a, &EpeConfig::default()).unwrap(), 0);
    }

    #[test]
    fn corner_samples_are_skipped() {
        let mut g = BinaryGrid::new(32, 32);
        g.fill_rect(8, 8, 18, 24, true);
        let all = EpeConfig { spacing: 1, threshold: 1, margin: 0, corner: 0 };
        assert_eq!(sample_edges(&g, &all).len(), 2 * (10 + 16));
        // runs of 16 keep 16 - 2 * 3, runs of 10 keep 10 - 2 * 3
        let cut = EpeConfig { corner: 3, ..all };
        assert_eq!(sample_edges(&g, &cut).len(), 2 * (4 + 10));
    }

    #[test]
    fn pitch_scaling() {
        let c = EpeConfig::for_pitch(4.0);
        assert_eq!((c.spacing, c.threshold), (10, 4));
        assert_eq!(EpeConfig::for_pitch(1.0), EpeConfig::default());
    }
}
