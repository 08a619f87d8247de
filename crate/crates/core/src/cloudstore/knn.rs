//! Exact nearest-neighbour search. Small reference sets are scanned directly;
//! larger ones go through a uniform grid. Both paths return the same index,
//! breaking distance ties towards the lower reference index.

/// Reference sets at or below this size use the brute-force scan.
pub const BRUTE_FORCE_LIMIT: usize = 2000;

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn better(d: f64, i: usize, best: (f64, usize)) -> bool {
    d < best.0 || (d == best.0 && i < best.1)
}

/// Nearest reference index for every query point, choosing the strategy by size.
pub fn nearest_neighbors(queries: &[[f64; 3]], reference: &[[f64; 3]]) -> Vec<usize> {
    if reference.len() <= BRUTE_FORCE_LIMIT {
        nearest_brute_force(queries, reference)
    } else {
        UniformGrid::build(reference).nearest_all(queries)
    }
}

pub fn nearest_brute_force(queries: &[[f64; 3]], reference: &[[f64; 3]]) -> Vec<usize> {
    assert!(!reference.is_empty(), "empty reference set");
    queries
        .iter()
        .map(|q| {
            let mut best = (f64::INFINITY, usize::MAX);
            for (i, r) in reference.iter().enumerate() {
                let d = dist2(q, r);
                if better(d, i, best) {
                    best = (d, i);
                }
            }
            best.1
        })
        .collect()
}

/// Bucketed reference points over their bounding box.
pub struct UniformGrid<'a> {
    points: &'a [[f64; 3]],
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    /// CSR layout: `starts[c]..starts[c + 1]` indexes `items` for cell `c`.
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> UniformGrid<'a> {
    pub fn build(points: &'a [[f64; 3]]) -> Self {
        assert!(!points.is_empty(), "empty reference set");
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent: Vec<f64> = (0..3).map(|a| hi[a] - lo[a]).collect();
        let max_extent = extent.iter().copied().fold(0.0f64, f64::max);
        // about two points per cell for a roughly cubic cloud
        let target_cells = (points.len() as f64 / 2.0).max(1.0);
        let mut cell = if max_extent > 0.0 {
            let vol: f64 = extent.iter().map(|e| e.max(max_extent * 1e-3)).product();
            (vol / target_cells).cbrt()
        } else {
            1.0
        };
        if !(cell.is_finite() && cell > 0.0) {
            cell = 1.0;
        }
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize + 1).min(1 << 10));
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            items: Vec::new(),
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncells + 1];
        let keys: Vec<usize> = points.iter().map(|p| grid.flat(grid.cell_of(p))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for c in 0..ncells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k]] = i;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.items = items;
        grid
    }

    fn cell_of(&self, p: &[f64; 3]) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let f = ((p[a] - self.origin[a]) / self.cell).floor();
            if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(self.dims[a] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn nearest_all(&self, queries: &[[f64; 3]]) -> Vec<usize> {
        queries.iter().map(|q| self.nearest(q)).collect()
    }

    pub fn nearest(&self, q: &[f64; 3]) -> usize {
        let c = self.cell_of(q);
        let mut best = (f64::INFINITY, usize::MAX);
        let max_ring = *self.dims.iter().max().unwrap();
        for r in 0..=max_ring {
            self.visit_ring(c, r, |i| {
                let d = dist2(q, &self.points[i]);
                if better(d, i, best) {
                    best = (d, i);
                }
            });
            match self.unvisited_lower_bound(q, c, r) {
                None => break,
                Some(bound) => {
                    // strict with slack: a tie just outside the visited block
                    // keeps the search going
                    if best.0 < bound * bound * (1.0 - 1e-12) {
                        break;
                    }
                }
            }
        }
        best.1
    }

    fn visit_ring(&self, c: [usize; 3], r: usize, mut f: impl FnMut(usize)) {
        let r = r as isize;
        let range = |a: usize| {
            let lo = (c[a] as isize - r).max(0);
            let hi = (c[a] as isize + r).min(self.dims[a] as isize - 1);
            (lo, hi)
        };
        let (x0, x1) = range(0);
        let (y0, y1) = range(1);
        let (z0, z1) = range(2);
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let on_shell = (x - c[0] as isize).abs() == r
                        || (y - c[1] as isize).abs() == r
                        || (z - c[2] as isize).abs() == r;
                    if !on_shell {
                        continue;
                    }
                    let k = self.flat([x as usize, y as usize, z as usize]);
                    for &i in &self.items[self.starts[k]..self.starts[k + 1]] {
                        f(i);
                    }
                }
            }
        }
    }

    /// Smallest possible distance from `q` to any cell outside the block of
    /// Chebyshev radius `r` around `c`; `None` once the block covers the grid.
    fn unvisited_lower_bound(&self, q: &[f64; 3], c: [usize; 3], r: usize) -> Option<f64> {
        let mut bound: Option<f64> = None;
        for a in 0..3 {
            if c[a] > r {
                let face = self.origin[a] + (c[a] - r) as f64 * self.cell;
                let d = (q[a] - face).max(0.0);
                bound = Some(bound.map_or(d, |b: f64| b.min(d)));
            }
            if c[a] + r + 1 < self.dims[a] {
                let face = self.origin[a] + (c[a] + r + 1) as f64 * self.cell;
                let d = (face - q[a]).max(0.0);
                bound = Some(bound.map_or(d, |b: f64| b.min(d)));
            }
        }
        bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256StarStar;

    #[test]
    fn exact_hit_and_tie_rule() {
        let refs = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
        assert_eq!(nearest_brute_force(&[[1.0, 0.0, 0.0]], &refs), vec![1]);
        // equidistant from 1 and 2
        assert_eq!(nearest_brute_force(&[[0.0, 5.0, 0.0]], &refs[1..]), vec![0]);
        let grid = UniformGrid::build(&refs[1..]);
        assert_eq!(grid.nearest(&[0.0, 5.0, 0.0]), 0);
    }

    #[test]
    fn grid_matches_brute_force_on_random_sets() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(11);
        let mut pt = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let refs: Vec<[f64; 3]> = (0..500).map(|_| pt()).collect();
        let queries: Vec<[f64; 3]> = (0..500).map(|_| pt()).collect();
        let grid = UniformGrid::build(&refs);
        assert_eq!(grid.nearest_all(&queries), nearest_brute_force(&queries, &refs));
    }

    #[test]
    fn grid_handles_queries_outside_the_box_and_duplicates() {
        let mut refs: Vec<[f64; 3]> = (0..300).map(|i| [(i % 10) as f64, (i / 10 % 10) as f64, (i / 100) as f64]).collect();
        refs.extend(refs.clone());
        let queries = [[-50.0, 3.0, 1.0], [4.5, 4.5, 1.5], [100.0, 100.0, 100.0], [2.0, 2.0, 2.0]];
        let grid = UniformGrid::build(&refs);
        assert_eq!(grid.nearest_all(&queries), nearest_brute_force(&queries, &refs));
    }

    #[test]
    fn degenerate_flat_and_single_point_sets() {
        let flat: Vec<[f64; 3]> = (0..50).map(|i| [i as f64 * 0.1, 0.0, 0.0]).collect();
        let q = [[2.51, 1.0, -1.0], [0.0, 0.0, 0.0]];
        assert_eq!(UniformGrid::build(&flat).nearest_all(&q), nearest_brute_force(&q, &flat));
        let single = [[3.0, 3.0, 3.0]];
        assert_eq!(UniformGrid::build(&single).nearest(&[0.0, 0.0, 0.0]), 0);
    }
}
