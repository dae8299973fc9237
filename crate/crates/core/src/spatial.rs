//! Uniform spatial hash grid with exact radius, k-nearest and nearest queries.
//! Results are ordered by `(distance, index)` so ties resolve deterministically.

use std::collections::HashMap;

use crate::geometry::Vec3;

type Cell = (i64, i64, i64);

pub struct HashGrid<'a> {
    points: &'a [Vec3],
    cell: f64,
    cells: HashMap<Cell, Vec<usize>>,
    lo: Cell,
    hi: Cell,
}

impl<'a> HashGrid<'a> {
    pub fn new(points: &'a [Vec3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p, cell);
            lo = (lo.0.min(c.0), lo.1.min(c.1), lo.2.min(c.2));
            hi = (hi.0.max(c.0), hi.1.max(c.1), hi.2.max(c.2));
            cells.entry(c).or_default().push(i);
        }
        HashGrid {
            points,
            cell,
            cells,
            lo,
            hi,
        }
    }

    /// Cell size chosen so that a cloud has a few points per occupied cell.
    pub fn with_auto_cell(points: &'a [Vec3]) -> Self {
        let cell = auto_cell_size(points);
        Self::new(points, cell)
    }

    pub fn points(&self) -> &'a [Vec3] {
        self.points
    }

    /// All indices within `radius` (inclusive), sorted by `(distance, index)`.
    pub fn radius_search(&self, q: &Vec3, radius: f64) -> Vec<(usize, f64)> {
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let c = cell_of(q, self.cell);
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(bucket) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        for &i in bucket {
                            let d2 = (self.points[i] - q).norm_squared();
                            if d2 <= r2 {
                                out.push((i, d2));
                            }
                        }
                    }
                }
            }
        }
        sort_hits(&mut out);
        out.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    /// The `k` nearest points, sorted by `(distance, index)`.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        self.knn_within(q, k, f64::INFINITY)
    }

    /// The `k` nearest points no farther than `max_dist`. The search stops at
    /// that distance, so far-away queries stay cheap.
    pub fn knn_within(&self, q: &Vec3, k: usize, max_dist: f64) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let c = cell_of(q, self.cell);
        // Shells beyond this ring index cannot contain any point.
        let mut max_ring = [
            (c.0 - self.lo.0).abs(),
            (c.0 - self.hi.0).abs(),
            (c.1 - self.lo.1).abs(),
            (c.1 - self.hi.1).abs(),
            (c.2 - self.lo.2).abs(),
            (c.2 - self.hi.2).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        if max_dist.is_finite() {
            max_ring = max_ring.min((max_dist / self.cell).ceil() as i64 + 1);
        }
        // Shells closer than the occupied box are empty.
        let min_ring = [
            self.lo.0 - c.0,
            c.0 - self.hi.0,
            self.lo.1 - c.1,
            c.1 - self.hi.1,
            self.lo.2 - c.2,
            c.2 - self.hi.2,
            0,
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let max_d2 = max_dist * max_dist;
        let mut hits: Vec<(usize, f64)> = Vec::new();
        let mut ring = min_ring;
        while ring <= max_ring {
            self.visit_shell(c, ring, |i| {
                let d2 = (self.points[i] - q).norm_squared();
                if d2 <= max_d2 {
                    hits.push((i, d2));
                }
            });
            // Anything outside the visited cube is at least `ring·cell` away.
            if hits.len() >= k {
                sort_hits(&mut hits);
                let bound = ring as f64 * self.cell;
                if hits[k - 1].1 <= bound * bound {
                    break;
                }
            }
            ring += 1;
        }
        sort_hits(&mut hits);
        hits.truncate(k);
        hits.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.knn(q, 1).into_iter().next()
    }

    pub fn nearest_within(&self, q: &Vec3, max_dist: f64) -> Option<(usize, f64)> {
        self.knn_within(q, 1, max_dist).into_iter().next()
    }

    /// Visits the cells at Chebyshev distance `ring` from `c`, clipped to the
    /// occupied box.
    fn visit_shell(&self, c: Cell, ring: i64, mut f: impl FnMut(usize)) {
        let range = |lo: i64, hi: i64, center: i64| ((lo - center).max(-ring), (hi - center).min(ring));
        let (x0, x1) = range(self.lo.0, self.hi.0, c.0);
        let (y0, y1) = range(self.lo.1, self.hi.1, c.1);
        let (z0, z1) = range(self.lo.2, self.hi.2, c.2);
        let mut visit = |dx: i64, dy: i64, dz: i64| {
            if let Some(bucket) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                bucket.iter().for_each(|&i| f(i));
            }
        };
        for dx in x0..=x1 {
            for dy in y0..=y1 {
                if dx.abs() == ring || dy.abs() == ring {
                    for dz in z0..=z1 {
                        visit(dx, dy, dz);
                    }
                } else {
                    if z0 <= -ring {
                        visit(dx, dy, -ring);
                    }
                    if ring > 0 && z1 >= ring {
                        visit(dx, dy, ring);
                    }
                }
            }
        }
    }
}

fn sort_hits(hits: &mut [(usize, f64)]) {
    hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

#[inline]
fn cell_of(p: &Vec3, cell: f64) -> Cell {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Roughly two points per cell for a surface-like cloud.
pub fn auto_cell_size(points: &[Vec3]) -> f64 {
    let Some(first) = points.first() else {
        return 1.0;
    };
    let (lo, hi) = points.iter().fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    let extent = (hi - lo).max();
    if !(extent > 0.0) {
        return 1.0;
    }
    // Surfaces scale with extent², so spacing ~ extent / √n.
    (extent * (2.0 / points.len() as f64).sqrt()).max(extent * 1e-4)
}

/// Exact brute-force k-nearest neighbors; the reference for [`HashGrid::knn`].
pub fn knn_brute_force(points: &[Vec3], q: &Vec3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p - q).norm_squared()))
        .collect();
    sort_hits(&mut all);
    all.truncate(k);
    all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
}
