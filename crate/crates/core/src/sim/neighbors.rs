//! Uniform-grid neighbor search over a particle bounding box.

/// Particles bucketed into cubic cells of side `cell` (counting sort).
pub(crate) struct NeighborGrid {
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl NeighborGrid {
    pub(crate) fn build(points: &[[f64; 3]], cell: f64) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 3];
            hi = [0.0; 3];
        }
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).max(1));
        let mut grid = Self { origin: lo, cell, dims, starts: Vec::new(), order: Vec::new() };
        let n_cells = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = points.iter().map(|p| grid.key(grid.coords(*p))).collect();
        let mut counts = vec![0usize; n_cells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.order = order;
        grid
    }

    fn coords(&self, p: [f64; 3]) -> [usize; 3] {
        [0, 1, 2].map(|a| (((p[a] - self.origin[a]) / self.cell).floor().max(0.0) as usize).min(self.dims[a] - 1))
    }

    fn key(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Calls `f(j)` for every particle in the 27 cells around `p`.
    pub(crate) fn for_each_near(&self, p: [f64; 3], mut f: impl FnMut(usize)) {
        let c = self.coords(p);
        let range = |a: usize| c[a].saturating_sub(1)..=(c[a] + 1).min(self.dims[a] - 1);
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    let k = self.key([x, y, z]);
                    for &j in &self.order[self.starts[k]..self.starts[k + 1]] {
                        f(j);
                    }
                }
            }
        }
    }

    /// All pairs `(i, j)` with `i < j` closer than `radius` (must not exceed
    /// the cell size), sorted.
    pub(crate) fn pairs_within(&self, points: &[[f64; 3]], radius: f64) -> Vec<(usize, usize)> {
        debug_assert!(radius <= self.cell + 1e-12);
        let r2 = radius * radius;
        let mut out = Vec::new();
        for (i, &p) in points.iter().enumerate() {
            let start = out.len();
            self.for_each_near(p, |j| {
                if j > i && dist2(p, points[j]) < r2 {
                    out.push((i, j));
                }
            });
            out[start..].sort_unstable();
        }
        out
    }
}

pub(crate) fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}
