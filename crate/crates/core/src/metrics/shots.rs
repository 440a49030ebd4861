use crate::grid::BinaryGrid;

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rectangle {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rectangle {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Greedy exact cover of the on-set by disjoint rectangles: from the first
/// uncovered on pixel in row-major order take the widest uncovered run,
/// then extend down while the whole run stays on and uncovered.
pub fn shot_decomposition(mask: &BinaryGrid) -> Vec<Rectangle> {
    let (h, w) = (mask.height(), mask.width());
    let mut covered = vec![false; h * w];
    let free = |covered: &[bool], y: usize, x: usize| mask.get(y, x) && !covered[y * w + x];
    let mut rects = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !free(&covered, y, x) {
                continue;
            }
            let mut x1 = x + 1;
            while x1 < w && free(&covered, y, x1) {
                x1 += 1;
            }
            let mut y1 = y + 1;
            while y1 < h && (x..x1).all(|c| free(&covered, y1, c)) {
                y1 += 1;
            }
            for r in y..y1 {
                covered[r * w + x..r * w + x1].fill(true);
            }
            rects.push(Rectangle { x0: x, y0: y, x1, y1 });
        }
    }
    rects
}

pub fn shot_count(mask: &BinaryGrid) -> usize {
    shot_decomposition(mask).len()
}
