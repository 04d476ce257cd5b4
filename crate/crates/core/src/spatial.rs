//! Uniform-grid spatial index over agent positions.

use crate::Vec2;

/// Cells beyond this many per agent trigger a coarser grid.
const MAX_CELLS_PER_ITEM: usize = 4;

/// Bucketed point index. Items are stored per cell in ascending insertion
/// index, so iteration order is a pure function of the input.
#[derive(Clone, Debug)]
pub struct SpatialGrid {
    origin: Vec2,
    cell: f64,
    cols: usize,
    rows: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
    positions: Vec<Vec2>,
}

impl SpatialGrid {
    pub fn new(positions: &[Vec2], cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in positions {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        if positions.is_empty() {
            lo = Vec2::zero();
            hi = Vec2::zero();
        }
        let mut cell = cell_size;
        let budget = (positions.len() * MAX_CELLS_PER_ITEM).max(1);
        let (mut cols, mut rows);
        loop {
            cols = ((hi.x - lo.x) / cell).floor() as usize + 1;
            rows = ((hi.y - lo.y) / cell).floor() as usize + 1;
            if cols.saturating_mul(rows) <= budget.max(16) {
                break;
            }
            cell *= 2.0;
        }
        let mut grid = SpatialGrid {
            origin: lo,
            cell,
            cols,
            rows,
            starts: vec![0; cols * rows + 1],
            items: vec![0; positions.len()],
            positions: positions.to_vec(),
        };
        let keys: Vec<usize> = positions.iter().map(|&p| grid.key(p)).collect();
        for &k in &keys {
            grid.starts[k + 1] += 1;
        }
        for i in 0..cols * rows {
            grid.starts[i + 1] += grid.starts[i];
        }
        let mut fill = grid.starts.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid
    }

    fn coords(&self, p: Vec2) -> (isize, isize) {
        (((p.x - self.origin.x) / self.cell).floor() as isize, ((p.y - self.origin.y) / self.cell).floor() as isize)
    }

    fn key(&self, p: Vec2) -> usize {
        let (c, r) = self.coords(p);
        let c = c.clamp(0, self.cols as isize - 1) as usize;
        let r = r.clamp(0, self.rows as isize - 1) as usize;
        r * self.cols + c
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Calls `f(index, squared distance)` for every item within the closed
    /// ball of `radius` around `center`, in a deterministic order.
    pub fn for_each_within(&self, center: Vec2, radius: f64, mut f: impl FnMut(usize, f64)) {
        if self.positions.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let (c0, r0) = self.coords(center - Vec2::new(radius, radius));
        let (c1, r1) = self.coords(center + Vec2::new(radius, radius));
        let c0 = c0.max(0);
        let r0 = r0.max(0);
        let c1 = c1.min(self.cols as isize - 1);
        let r1 = r1.min(self.rows as isize - 1);
        if c0 > c1 || r0 > r1 {
            return;
        }
        for row in r0..=r1 {
            for col in c0..=c1 {
                let k = row as usize * self.cols + col as usize;
                for &i in &self.items[self.starts[k] as usize..self.starts[k + 1] as usize] {
                    let d2 = self.positions[i as usize].dist_sq(center);
                    if d2 <= r2 {
                        f(i as usize, d2);
                    }
                }
            }
        }
    }

    /// Indices within `radius` of `center`, ascending.
    pub fn query(&self, center: Vec2, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(center, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }
}
