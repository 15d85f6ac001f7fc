//! Voxel hash grid for radius and k-nearest-neighbor queries.
//!
//! Points are bucketed into cubic cells keyed by integer coordinates. Query
//! results are always ordered by `(squared distance, index)`, which makes them
//! independent of hash iteration order.

use std::collections::HashMap;

type Key = [i64; 3];

#[derive(Debug, Clone)]
pub struct VoxelGrid<'a> {
    points: &'a [[f64; 3]],
    cell: f64,
    buckets: HashMap<Key, (u32, u32)>,
    order: Vec<u32>,
    lo: Key,
    hi: Key,
}

#[inline]
pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl<'a> VoxelGrid<'a> {
    pub fn new(points: &'a [[f64; 3]], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let key = |p: &[f64; 3]| -> Key {
            [
                (p[0] / cell).floor() as i64,
                (p[1] / cell).floor() as i64,
                (p[2] / cell).floor() as i64,
            ]
        };
        let mut keyed: Vec<(Key, u32)> = points.iter().enumerate().map(|(i, p)| (key(p), i as u32)).collect();
        keyed.sort_unstable();
        let mut buckets = HashMap::with_capacity(keyed.len() / 2 + 1);
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        let mut start = 0usize;
        while start < keyed.len() {
            let k = keyed[start].0;
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == k {
                end += 1;
            }
            buckets.insert(k, (start as u32, (end - start) as u32));
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
            start = end;
        }
        VoxelGrid {
            points,
            cell,
            buckets,
            order: keyed.into_iter().map(|(_, i)| i).collect(),
            lo,
            hi,
        }
    }

    pub fn points(&self) -> &'a [[f64; 3]] {
        self.points
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn key_of(&self, p: &[f64; 3]) -> Key {
        [
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
            (p[2] / self.cell).floor() as i64,
        ]
    }

    fn bucket(&self, k: &Key) -> &[u32] {
        match self.buckets.get(k) {
            Some(&(s, l)) => &self.order[s as usize..(s + l) as usize],
            None => &[],
        }
    }

    /// All points with squared distance `<= radius²`, sorted by (distance, index).
    pub fn within_radius(&self, q: &[f64; 3], radius: f64) -> Vec<(f64, u32)> {
        let mut out = Vec::new();
        self.within_radius_into(q, radius, &mut out);
        out
    }

    pub fn within_radius_into(&self, q: &[f64; 3], radius: f64, out: &mut Vec<(f64, u32)>) {
        out.clear();
        if self.order.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let lo = self.key_of(&[q[0] - radius, q[1] - radius, q[2] - radius]);
        let hi = self.key_of(&[q[0] + radius, q[1] + radius, q[2] + radius]);
        for x in lo[0].max(self.lo[0])..=hi[0].min(self.hi[0]) {
            for y in lo[1].max(self.lo[1])..=hi[1].min(self.hi[1]) {
                for z in lo[2].max(self.lo[2])..=hi[2].min(self.hi[2]) {
                    for &i in self.bucket(&[x, y, z]) {
                        let d = dist2(q, &self.points[i as usize]);
                        if d <= r2 {
                            out.push((d, i));
                        }
                    }
                }
            }
        }
        out.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }

    /// The `k` nearest points to `q`, optionally skipping one index, sorted by
    /// (squared distance, index). Returns fewer when the cloud is smaller.
    pub fn knn(&self, q: &[f64; 3], k: usize, exclude: Option<u32>) -> Vec<(f64, u32)> {
        let mut found: Vec<(f64, u32)> = Vec::new();
        if k == 0 || self.order.is_empty() {
            return found;
        }
        let center = self.key_of(q);
        let max_ring = (0..3)
            .map(|a| (center[a] - self.lo[a]).abs().max((self.hi[a] - center[a]).abs()))
            .max()
            .unwrap_or(0);
        let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let mut ring = 0i64;
        loop {
            self.visit_ring(center, ring, |i| {
                if Some(i) != exclude {
                    found.push((dist2(q, &self.points[i as usize]), i));
                }
            });
            // Anything not yet visited lies at least `ring * cell` away.
            if found.len() >= k {
                found.sort_unstable_by(cmp);
                found.truncate(k);
                let bound = ring as f64 * self.cell;
                if found[k - 1].0 < bound * bound {
                    break;
                }
            }
            if ring >= max_ring {
                break;
            }
            ring += 1;
        }
        found.sort_unstable_by(cmp);
        found.truncate(k);
        found
    }

    fn visit_ring(&self, c: Key, ring: i64, mut f: impl FnMut(u32)) {
        if ring == 0 {
            for &i in self.bucket(&c) {
                f(i);
            }
            return;
        }
        for x in (c[0] - ring).max(self.lo[0])..=(c[0] + ring).min(self.hi[0]) {
            for y in (c[1] - ring).max(self.lo[1])..=(c[1] + ring).min(self.hi[1]) {
                let edge_xy = (x - c[0]).abs() == ring || (y - c[1]).abs() == ring;
                if edge_xy {
                    for z in (c[2] - ring).max(self.lo[2])..=(c[2] + ring).min(self.hi[2]) {
                        for &i in self.bucket(&[x, y, z]) {
                            f(i);
                        }
                    }
                } else {
                    for z in [c[2] - ring, c[2] + ring] {
                        if z >= self.lo[2] && z <= self.hi[2] {
                            for &i in self.bucket(&[x, y, z]) {
                                f(i);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_knn(points: &[[f64; 3]], q: &[f64; 3], k: usize, exclude: Option<u32>) -> Vec<(f64, u32)> {
        let mut all: Vec<(f64, u32)> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i as u32) != exclude)
            .map(|(i, p)| (dist2(q, p), i as u32))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let n = rng.gen_range(1..400);
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..6.0)])
                .collect();
            let cell = rng.gen_range(0.05..1.5);
            let grid = VoxelGrid::new(&pts, cell);
            for _ in 0..20 {
                let i = rng.gen_range(0..n) as u32;
                let k = rng.gen_range(1..15);
                let q = pts[i as usize];
                assert_eq!(grid.knn(&q, k, Some(i)), brute_knn(&pts, &q, k, Some(i)), "trial {trial}");
            }
        }
    }

    #[test]
    fn radius_query_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<[f64; 3]> = (0..500).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let grid = VoxelGrid::new(&pts, 0.1);
        for _ in 0..50 {
            let q = [rng.gen(), rng.gen(), rng.gen()];
            let r = rng.gen_range(0.01..0.3);
            let mut expect: Vec<(f64, u32)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (dist2(&q, p), i as u32))
                .filter(|(d, _)| *d <= r * r)
                .collect();
            expect.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            assert_eq!(grid.within_radius(&q, r), expect);
        }
    }
}
